import numpy as np
import pytest
import torch

from stylecompat.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from stylecompat.data import Split, build_style_labels, outfits_by_split
from stylecompat.model import build_bundle
from stylecompat.synth import GenConfig, generate
from stylecompat.training import (
    Stage1Config,
    Stage2Config,
    TrainConfig,
    TrainingDiverged,
    compute_pooled,
    mean_outfit_kl,
    state_hash,
    train_stage1,
    train_stage2,
    write_metrics_csv,
)


@pytest.fixture(scope="module")
def tiny_data():
    config = GenConfig(n_outfits=320, fines_per_high=4, items_per_fine=16, seed=3)
    catalog, outfits, _ = generate(config)
    return catalog, outfits, build_style_labels(outfits)


def _tiny_config(e1=3, e2=3, **kw2):
    return TrainConfig(
        stage1=Stage1Config(lr=1e-3, batch_size=64, epochs=e1),
        stage2=Stage2Config(lr=1e-3, batch_size=16, epochs=e2, n_neg=3, **kw2),
        seed=5,
    )


def _full_run(catalog, outfits, labels, config, rep="params"):
    bundle = build_bundle(catalog, labels, rep_preset=rep, d_s=16, d_z=8, seed=config.seed)
    log1 = train_stage1(bundle, catalog, outfits, config)
    compute_pooled(bundle, catalog, outfits)
    log2 = train_stage2(bundle, catalog, outfits, config)
    return bundle, log1, log2


def test_same_seed_identical_loss_curves(tiny_data):
    catalog, outfits, labels = tiny_data
    _, log1a, log2a = _full_run(catalog, outfits, labels, _tiny_config())
    _, log1b, log2b = _full_run(catalog, outfits, labels, _tiny_config())
    assert log1a == log1b
    assert log2a == log2b


def test_loss_decreases_in_both_stages(tiny_data):
    catalog, outfits, labels = tiny_data
    _, log1, log2 = _full_run(catalog, outfits, labels, _tiny_config(e1=6, e2=6))
    assert log1[-1]["train_loss"] < log1[0]["train_loss"]
    assert log2[-1]["train_loss"] < log2[0]["train_loss"]


def test_stage1_reaches_accuracy_at_20_epochs():
    config = GenConfig(n_outfits=1500, seed=9)
    catalog, outfits, _ = generate(config)
    labels = build_style_labels(outfits)
    tc = TrainConfig(stage1=Stage1Config(lr=1e-3, batch_size=128, epochs=20), seed=1)
    bundle = build_bundle(catalog, labels, rep_preset="params", seed=1)
    log = train_stage1(bundle, catalog, outfits, tc)
    assert max(l["valid_acc"] for l in log) >= 0.90


def test_kl_weight_lowers_mean_outfit_kl(tiny_data):
    catalog, outfits, labels = tiny_data
    base = _tiny_config(e1=6)
    with_kl = _tiny_config(e1=6)
    with_kl.stage1.alpha_kl = 0.05
    without = _tiny_config(e1=6)
    without.stage1.alpha_kl = 0.0
    b1 = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    train_stage1(b1, catalog, outfits, with_kl)
    b2 = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    train_stage1(b2, catalog, outfits, without)
    train = outfits_by_split(outfits)[Split.TRAIN]
    assert mean_outfit_kl(b1, catalog, train) < mean_outfit_kl(b2, catalog, train)


def test_stage2_freezes_style_modules(tiny_data):
    catalog, outfits, labels = tiny_data
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    config = _tiny_config()
    train_stage1(bundle, catalog, outfits, config)
    compute_pooled(bundle, catalog, outfits)
    before = state_hash(bundle.senet) + state_hash(bundle.senet_encoder) + state_hash(bundle.classifier)
    train_stage2(bundle, catalog, outfits, config)
    after = state_hash(bundle.senet) + state_hash(bundle.senet_encoder) + state_hash(bundle.classifier)
    assert before == after


def test_stage2_requires_pooled(tiny_data):
    catalog, outfits, labels = tiny_data
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    with pytest.raises(ValueError, match="compute_pooled"):
        train_stage2(bundle, catalog, outfits, _tiny_config())


def test_nan_loss_aborts_with_diagnostics(tiny_data):
    catalog, outfits, labels = tiny_data
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    config = _tiny_config(e1=3)
    config.stage1.lr = 1e18  # drives logits to overflow within an epoch or two
    config.grad_clip = 1e30
    with pytest.raises(TrainingDiverged, match="stage1 at epoch"):
        train_stage1(bundle, catalog, outfits, config)


def test_pooled_requires_all_styles(tiny_data):
    catalog, outfits, labels = tiny_data
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    # restrict to outfits of a single style: other styles have no training data
    one_style = [o for o in outfits if o.style.index == 0]
    with pytest.raises(ValueError, match="zero training outfits"):
        compute_pooled(bundle, catalog, one_style)


def test_pooled_matches_direct_recomputation(tiny_data):
    catalog, outfits, labels = tiny_data
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    pooled = compute_pooled(bundle, catalog, outfits)
    train = outfits_by_split(outfits)[Split.TRAIN]
    name = labels[0].name
    mus = []
    vars_ = []
    for o in train:
        if o.style.name != name:
            continue
        mu, var = bundle.outfit_distribution(o.sorted_items(), catalog)
        mus.append(mu)
        vars_.append(var)
    n = len(mus)
    assert pooled.counts[name] == n
    assert np.allclose(pooled.means[name], np.mean(mus, axis=0), atol=1e-6)
    assert np.allclose(pooled.variances[name], np.sum(vars_, axis=0) / n**2, atol=1e-6)


def test_metrics_csv(tmp_path):
    log = [{"epoch": 0, "train_loss": 1.0}, {"epoch": 1, "train_loss": 0.5}]
    path = tmp_path / "log.csv"
    write_metrics_csv(log, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss"
    assert len(lines) == 3


def test_neg_aggregate_min_differs_from_mean(tiny_data):
    catalog, outfits, labels = tiny_data
    _, _, log_mean = _full_run(catalog, outfits, labels, _tiny_config(e2=2, neg_aggregate="mean"))
    _, _, log_min = _full_run(catalog, outfits, labels, _tiny_config(e2=2, neg_aggregate="min"))
    # the hardest-negative objective is strictly harder, so its loss is larger
    assert log_min[-1]["train_loss"] > log_mean[-1]["train_loss"]


# ---- checkpointing ----


def test_checkpoint_round_trip_bit_exact(tiny_data, tmp_path):
    catalog, outfits, labels = tiny_data
    bundle, _, _ = _full_run(catalog, outfits, labels, _tiny_config())
    path = tmp_path / "model.ckpt"
    save_checkpoint(bundle, path)
    loaded = load_checkpoint(path)

    test_outfit = outfits[0]
    feats_in = torch.randn(3, 16, generator=torch.Generator().manual_seed(0))
    with torch.no_grad():
        a_mu, a_lv = bundle.senet(feats_in.unsqueeze(0))
        b_mu, b_lv = loaded.senet(feats_in.unsqueeze(0))
    assert torch.equal(a_mu, b_mu) and torch.equal(a_lv, b_lv)

    rep_a = bundle.rep_for_outfit(test_outfit, catalog)
    rep_b = loaded.rep_for_outfit(test_outfit, catalog)
    assert np.array_equal(rep_a, rep_b)
    assert state_hash(bundle.embedder) == state_hash(loaded.embedder)
    assert loaded.pooled is not None
    for name in loaded.pooled.means:
        assert np.array_equal(loaded.pooled.means[name], bundle.pooled.means[name])


def test_checkpoint_version_mismatch(tiny_data, tmp_path):
    import json
    import zipfile

    catalog, outfits, labels = tiny_data
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    path = tmp_path / "model.ckpt"
    save_checkpoint(bundle, path)
    # rewrite the manifest with a bogus version
    with zipfile.ZipFile(path) as zf:
        names = {n: zf.read(n) for n in zf.namelist()}
    manifest = json.loads(names["manifest.json"])
    manifest["format_version"] = "99"
    names["manifest.json"] = json.dumps(manifest).encode()
    with zipfile.ZipFile(path, "w") as zf:
        for n, payload in names.items():
            zf.writestr(n, payload)
    with pytest.raises(CheckpointError, match="format version"):
        load_checkpoint(path)


def test_checkpoint_corrupt_file(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"definitely not a zip")
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)
    with pytest.raises(CheckpointError, match="no checkpoint"):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_stage1_checkpoint_loads_without_compat_and_trains_stage2(tiny_data, tmp_path):
    catalog, outfits, labels = tiny_data
    config = _tiny_config()
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    train_stage1(bundle, catalog, outfits, config)
    compute_pooled(bundle, catalog, outfits)
    path = tmp_path / "stage1.ckpt"
    save_checkpoint(bundle, path)
    loaded = load_checkpoint(path)
    assert not loaded.has_compat
    log2 = train_stage2(loaded, catalog, outfits, config)
    assert loaded.has_compat
    assert len(log2) == config.stage2.epochs


def test_image_mode_stage1_smoke(tmp_path):
    from stylecompat.data import load_catalog
    from stylecompat.synth import write_dataset

    config = GenConfig(n_outfits=120, mode="image", items_per_fine=16, seed=21)
    catalog, outfits, planted = generate(config)
    write_dataset(tmp_path, catalog, outfits, planted)
    catalog, outfits = load_catalog(tmp_path)
    labels = build_style_labels(outfits)
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=3)
    assert bundle.senet_encoder_config.kind == "tiny_cnn"
    tc = TrainConfig(stage1=Stage1Config(lr=1e-3, batch_size=32, epochs=2), seed=3)
    log = train_stage1(bundle, catalog, outfits, tc)
    assert len(log) == 2
    compute_pooled(bundle, catalog, outfits)
    tc.stage2.epochs = 1
    tc.stage2.batch_size = 16
    log2 = train_stage2(bundle, catalog, outfits, tc)
    assert len(log2) == 1


def test_early_stop_patience(tiny_data):
    catalog, outfits, labels = tiny_data
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=16, d_z=8, seed=5)
    config = _tiny_config(e1=30)
    config.patience = 1
    log = train_stage1(bundle, catalog, outfits, config)
    # with patience 1 on a quickly saturating task, training stops early
    assert len(log) < 30


def test_learned_lambda_trains_and_round_trips(tiny_data, tmp_path):
    catalog, outfits, labels = tiny_data
    config = _tiny_config(e1=2, e2=2)
    bundle = build_bundle(catalog, labels, rep_preset="params+global", d_s=16, d_z=8, seed=5)
    train_stage1(bundle, catalog, outfits, config)
    compute_pooled(bundle, catalog, outfits)
    before = float(bundle.rep_builder.learned_lam.detach())
    assert before == 1.0
    train_stage2(bundle, catalog, outfits, config)
    after = float(bundle.rep_builder.learned_lam.detach())
    assert after != before  # the shared scalar receives gradient
    save_checkpoint(bundle, tmp_path / "m.ckpt")
    loaded = load_checkpoint(tmp_path / "m.ckpt")
    assert float(loaded.rep_builder.learned_lam.detach()) == after


def test_sample_preset_full_pipeline(tiny_data):
    catalog, outfits, labels = tiny_data
    config = _tiny_config(e1=2, e2=2)
    bundle, log1, log2 = _full_run(catalog, outfits, labels, config, rep="sample")
    assert bundle.rep_config.classifier_input == "sample"
    assert len(log2) == 2
    # deterministic eval rep: sampling only happens when an rng is supplied
    rep_a = bundle.rep_for_outfit(outfits[0], catalog)
    rep_b = bundle.rep_for_outfit(outfits[0], catalog)
    assert np.array_equal(rep_a, rep_b)
    rng = np.random.default_rng(0)
    rep_c = bundle.rep_for_outfit(outfits[0], catalog, rng=rng)
    assert not np.array_equal(rep_a, rep_c)
    # second half of a pure-sample representation is zero
    assert np.all(rep_a[16:] == 0.0)
