"""Acceptance suite: one test per release criterion, at stated tolerances.

The end-to-end criteria share a single session-scoped pipeline run (synthetic
data, two training stages, full metric evaluation) plus a style-independent
ablation trained identically for the paired comparisons. Each test prints a
``[PASS]``/``[FAIL]`` line; run with ``pytest tests/test_acceptance.py -v -s``
to watch them live.
"""
import itertools
import time

import numpy as np
import pytest
import torch

import tests.helpers as helpers
from stylecompat.checkpoint import load_checkpoint
from stylecompat.compat_net import (
    CompatConfig,
    SubspaceAttention,
    SubspaceEmbedder,
    compat_loss,
    positive_distance,
    style_compat_loss,
)
from stylecompat.data import HighCategory, Template, build_style_labels
from stylecompat.encoders import EncoderConfig, LinearEncoder
from stylecompat.generation import GenerationRequest, RankedOutfit, beam_generate
from stylecompat.metrics import (
    anchors_across_styles,
    discriminative_category_rate,
    discriminative_sets,
    generate_for_styles,
    random_rank_mrr,
    style_entropy_conditioned,
    style_entropy_unconditioned,
    style_rank_metrics,
)
from stylecompat.model import build_bundle
from stylecompat.scoring import FrozenScorer
from stylecompat.style_encoder import (
    StyleClassifier,
    StyleDistribution,
    StyleEncoderConfig,
    StyleEncoderNet,
    kl_to_unit,
    kl_to_unit_batch,
)
from stylecompat.synth import GenConfig, generate
from stylecompat.training import compute_pooled

from tests.conftest import DATA_CONFIG  # shared pipeline config

RANDOM_MRR_BASELINE = random_rank_mrr(4)  # 0.5208...
TIME_BUDGET_S = 15 * 60


def _report(name: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok




# ------------------------------------------------------------ criterion 1


def test_permutation_invariance(e2e):
    net = e2e.bundle.senet
    enc = e2e.bundle.senet_encoder
    rng = np.random.default_rng(0)
    ids = e2e.catalog.ids()
    worst = 0.0
    with torch.no_grad():
        for k in range(50):
            size = int(rng.integers(2, 7))
            rows = rng.choice(len(ids), size=size, replace=False)
            feats = enc(torch.stack([
                torch.from_numpy(np.asarray(e2e.catalog[ids[r]].features)) for r in rows
            ]))
            mu0, lv0 = net(feats.unsqueeze(0))
            ref = torch.cat([mu0, lv0], dim=-1)
            for _ in range(100):
                perm = rng.permutation(size)
                mu, lv = net(feats[perm].unsqueeze(0))
                got = torch.cat([mu, lv], dim=-1)
                rel = float(torch.linalg.vector_norm(ref - got) / torch.linalg.vector_norm(ref))
                worst = max(worst, rel)
    ok = worst <= 1e-5
    assert _report("permutation-invariance", ok, f"max relative deviation {worst:.2e} (tol 1e-5)")


# ------------------------------------------------------------ criterion 2


def test_kl_correctness():
    unit = StyleDistribution(torch.zeros(8, dtype=torch.float64), torch.ones(8, dtype=torch.float64))
    exact_zero = kl_to_unit(unit) == 0.0
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 10))
        mu = rng.normal(scale=1.5, size=d)
        var = rng.uniform(0.2, 3.0, size=d)
        closed = kl_to_unit(StyleDistribution(torch.tensor(mu), torch.tensor(var)))
        n = 100_000
        x = mu + np.sqrt(var) * rng.standard_normal((n, d))
        log_q = -0.5 * (((x - mu) ** 2) / var + np.log(2 * np.pi * var)).sum(axis=1)
        log_p = -0.5 * ((x**2) + np.log(2 * np.pi)).sum(axis=1)
        mc = float(np.mean(log_q - log_p))
        worst = max(worst, abs(closed - mc) / abs(mc))
    ok = exact_zero and worst < 0.02
    assert _report("kl-correctness", ok, f"unit-KL exact zero: {exact_zero}; worst MC deviation {worst:.3%} (tol 2%)")


# ------------------------------------------------------------ criterion 3


def test_gradient_checks():
    t0 = time.time()
    torch.manual_seed(0)
    d_s, d_z, m = 4, 8, 3

    # stage 1: classification + 0.05 * KL, double precision
    senet = StyleEncoderNet(StyleEncoderConfig(d_s=d_s, d_z=d_z, n_heads=2, classifier_hidden=8, n_styles=m)).double()
    clf = StyleClassifier(2 * d_s, 8, m).double()
    feats = torch.randn(4, 3, d_s, dtype=torch.float64)
    labels = torch.tensor([0, 1, 2, 1])

    def stage1_loss():
        mu, lv = senet(feats)
        logits = clf(torch.cat([mu, lv.exp()], dim=-1))
        ce = torch.nn.functional.cross_entropy(logits, labels)
        return ce + 0.05 * kl_to_unit_batch(mu, lv).mean()

    params1 = [p for p in senet.parameters()] + [p for p in clf.parameters()]
    loss = stage1_loss()
    grads1 = torch.autograd.grad(loss, params1, allow_unused=True)
    grads1 = [g if g is not None else torch.zeros_like(p) for g, p in zip(grads1, params1)]
    fd1 = helpers.finite_diff_grads(stage1_loss, params1, eps=1e-6)
    err1 = helpers.max_relative_error(grads1, fd1)

    # stage 2: compat + 0.5 * style-compat through encoder tail + masks + attention
    torch.manual_seed(1)
    encoder = LinearEncoder(EncoderConfig(kind="identity_linear", d_in=d_s, d_s=d_s)).double()
    embedder = SubspaceEmbedder(CompatConfig(d_s=d_s, n_subspaces=2, attn_hidden=4, margin=0.3), rep_dim=2 * d_s).double()
    raw = torch.randn(6, d_s, dtype=torch.float64)
    cats = torch.tensor([0, 1, 2, 0, 0, 1])
    r_true = torch.randn(2 * d_s, dtype=torch.float64)
    r_wrong = torch.randn(2 * d_s, dtype=torch.float64)

    def stage2_loss():
        E = encoder(raw)
        d_pos = positive_distance(embedder, E[0], 0, E[1:3], cats[1:3], r_true)
        d_negs = [positive_distance(embedder, E[k], 0, E[1:3], cats[1:3], r_true) for k in (3, 4)]
        d_neg = torch.stack(d_negs).mean()
        d_wrong = positive_distance(embedder, E[0], 0, E[1:3], cats[1:3], r_wrong)
        return compat_loss(d_pos, d_neg, 0.3) + 0.5 * style_compat_loss(d_pos, d_wrong, 0.3)

    # both hinges must be active for the check to exercise every path
    with torch.no_grad():
        base = float(stage2_loss())
    assert base > 0.3, "expected active hinges in the gradient-check instance"

    params2 = list(encoder.parameters()) + list(embedder.parameters())
    loss2 = stage2_loss()
    grads2 = torch.autograd.grad(loss2, params2, allow_unused=True)
    grads2 = [g if g is not None else torch.zeros_like(p) for g, p in zip(grads2, params2)]
    fd2 = helpers.finite_diff_grads(stage2_loss, params2, eps=1e-6)
    err2 = helpers.max_relative_error(grads2, fd2)

    elapsed = time.time() - t0
    ok = err1 <= 1e-3 and err2 <= 1e-3 and elapsed < 60
    assert _report(
        "gradient-checks",
        ok,
        f"stage1 max rel err {err1:.2e}, stage2 {err2:.2e} (tol 1e-3), runtime {elapsed:.1f}s (< 60s)",
    )


# ------------------------------------------------------------ criterion 4


def test_attention_validity():
    torch.manual_seed(2)
    att = SubspaceAttention(CompatConfig(d_s=16, n_subspaces=5), rep_dim=32)
    g = torch.Generator().manual_seed(3)
    n = 10_000
    ca = torch.randint(0, 6, (n,), generator=g)
    ct = torch.randint(0, 6, (n,), generator=g)
    rep = torch.randn(n, 32, generator=g) * 3
    with torch.no_grad():
        w = att(ca, ct, rep)
    min_w = float(w.min())
    max_dev = float((w.sum(dim=-1) - 1).abs().max())
    ok = min_w >= 0 and max_dev <= 1e-6
    assert _report("attention-validity", ok, f"min weight {min_w:.2e}, max |sum-1| {max_dev:.2e} over {n} inputs")


# ------------------------------------------------------------ criterion 5


def test_hinge_losses(e2e):
    rng = np.random.default_rng(4)
    margin = 0.3
    inactive_ok = True
    for _ in range(500):
        d_pos = torch.tensor(rng.uniform(0, 3), dtype=torch.float64)
        d_neg = d_pos + margin + torch.tensor(rng.uniform(0, 3), dtype=torch.float64)  # D_N >= D_p + margin
        inactive_ok &= float(compat_loss(d_pos, d_neg, margin)) == 0.0

    # identical style representations -> identical distances -> loss == margin
    outfit = e2e.test[0]
    items = outfit.sorted_items()
    rep = e2e.bundle.rep_for_outfit(outfit, e2e.catalog)
    d_same_1 = e2e.scorer.positive_distance(items[0], items[1:], rep)
    d_same_2 = e2e.scorer.positive_distance(items[0], items[1:], rep.copy())
    style_val = float(
        style_compat_loss(
            torch.tensor(d_same_1, dtype=torch.float64),
            torch.tensor(d_same_2, dtype=torch.float64),
            margin,
        )
    )
    equal_ok = style_val == pytest.approx(margin, abs=1e-12)
    ok = inactive_ok and equal_ok
    assert _report(
        "hinge-losses",
        ok,
        f"compat hinge zero whenever D_N >= D_p + {margin}: {inactive_ok}; "
        f"style hinge equals margin at r_k == r_q: {equal_ok}",
    )


# ------------------------------------------------------------ criterion 6


def test_beam_matches_exhaustive_oracle():
    config = GenConfig(n_outfits=150, n_high_categories=3, fines_per_high=1,
                       items_per_fine=16, seed=23)
    catalog, outfits, _ = generate(config)
    labels = build_style_labels(outfits)
    bundle = build_bundle(catalog, labels, rep_preset="params", d_s=12, d_z=8, seed=3)
    compute_pooled(bundle, catalog, outfits)
    bundle.has_compat = True
    scorer = FrozenScorer.from_bundle(bundle, catalog)
    style = bundle.style_names[0]
    rep = bundle.rep_for_style(style)

    templates = [
        Template((HighCategory.TOPWEAR, HighCategory.BOTTOMWEAR)),
        Template((HighCategory.TOPWEAR, HighCategory.BOTTOMWEAR, HighCategory.FOOTWEAR)),
    ]
    all_equal = True
    for template in templates:
        parent = catalog.by_high(template.slots[0])[2]
        slots = [c for c in template if c != catalog[parent].category.high]
        pools = [catalog.by_high(c) for c in slots]
        fan_out = int(np.prod([len(p) for p in pools]))
        exhaustive = []
        for pick in itertools.product(*pools):
            items = (parent,) + pick
            exhaustive.append(RankedOutfit(items, scorer.outfit_score(list(items), rep)))
        exhaustive.sort(key=lambda r: (-r.score, r.items))
        request = GenerationRequest(parent, template, {style: 1.0}, beam_width=fan_out, top_k=fan_out)
        got = beam_generate(request, bundle, scorer, catalog)
        all_equal &= [g.items for g in got] == [w.items for w in exhaustive]
        all_equal &= np.allclose([g.score for g in got], [w.score for w in exhaustive], atol=1e-9)

    monotone = True
    parent = catalog.by_high(HighCategory.TOPWEAR)[0]
    template = templates[1]
    best = -np.inf
    for width in (1, 2, 4, 8, 16, 64, 256):
        request = GenerationRequest(parent, template, {style: 1.0}, beam_width=width, top_k=1)
        score = beam_generate(request, bundle, scorer, catalog)[0].score
        monotone &= score >= best - 1e-12
        best = max(best, score)
    ok = all_equal and monotone
    assert _report(
        "beam-oracle",
        ok,
        f"beam == exhaustive enumeration on 2- and 3-slot templates: {all_equal}; "
        f"top-1 score non-decreasing in beam width: {monotone}",
    )


# ------------------------------------------------------------ criterion 7


def test_end_to_end_quality(e2e):
    checks = {
        "stage-1 test accuracy >= 0.90": e2e.test_accuracy >= 0.90,
        "soft FITB >= 0.60": e2e.fitb_soft.mean >= 0.60,
        "soft AU-ROC >= 0.85": e2e.auroc_soft.mean >= 0.85,
        "hard FITB <= soft FITB": e2e.fitb_hard.mean <= e2e.fitb_soft.mean,
        "hard AU-ROC <= soft AU-ROC": e2e.auroc_hard.mean <= e2e.auroc_soft.mean,
        f"pipeline < {TIME_BUDGET_S}s": e2e.elapsed_primary < TIME_BUDGET_S,
    }
    ok = all(checks.values())
    assert _report(
        "end-to-end-quality",
        ok,
        f"test acc {e2e.test_accuracy:.3f}; FITB soft {e2e.fitb_soft.mean:.3f}+/-{e2e.fitb_soft.std:.3f} "
        f"hard {e2e.fitb_hard.mean:.3f}; AU-ROC soft {e2e.auroc_soft.mean:.3f} hard {e2e.auroc_hard.mean:.3f}; "
        f"runtime {e2e.elapsed_primary:.0f}s; failed: {[k for k, v in checks.items() if not v] or 'none'}",
    )


# ------------------------------------------------------------ criterion 8


def test_style_conditioning(e2e):
    ranks = style_rank_metrics(e2e.scorer, e2e.bundle, e2e.test, e2e.catalog)
    mrr_ok = ranks["mrr"] >= RANDOM_MRR_BASELINE + 0.10

    anchors = anchors_across_styles(e2e.test, n_anchors=60, seed=0)
    cond = style_entropy_conditioned(e2e.bundle, e2e.scorer, e2e.catalog, e2e.outfits, anchors)
    abl = style_entropy_unconditioned(e2e.ablation, e2e.scorer_ablation, e2e.catalog, e2e.outfits, anchors)
    entropy_ok = cond["entropy"] >= abl["entropy"]

    disc = discriminative_sets(e2e.catalog, e2e.train, e2e.bundle.style_names)
    rate_cond = discriminative_category_rate(
        generate_for_styles(e2e.bundle, e2e.scorer, e2e.catalog, anchors), e2e.catalog, disc
    )
    rate_abl = discriminative_category_rate(
        generate_for_styles(e2e.ablation, e2e.scorer_ablation, e2e.catalog, anchors), e2e.catalog, disc
    )
    rate_ok = rate_cond["overall"] > rate_abl["overall"]

    ok = mrr_ok and entropy_ok and rate_ok
    assert _report(
        "style-conditioning",
        ok,
        f"MRR {ranks['mrr']:.3f} vs baseline+0.10 = {RANDOM_MRR_BASELINE + 0.10:.3f}; "
        f"entropy {cond['entropy']:.3f} (ablation {abl['entropy']:.3f}); "
        f"discriminative rate {rate_cond['overall']:.3f} (ablation {rate_abl['overall']:.3f})",
    )


# ------------------------------------------------------------ criterion 9


def test_determinism(tmp_path):
    from stylecompat.cli import main

    small = dict(DATA_CONFIG)
    small.update(n_outfits=400)
    runs = []
    for tag in ("a", "b"):
        root = tmp_path / tag
        data = root / "data"
        assert main([
            "gen-data", "--out", str(data),
            "--styles", str(small["m_styles"]), "--outfits", str(small["n_outfits"]),
            "--fines-per-high", str(small["fines_per_high"]),
            "--items-per-fine", str(small["items_per_fine"]),
            "--noise", str(small["noise_scale"]), "--seed", str(small["seed"]),
        ]) == 0
        assert main([
            "train-senet", "--data", str(data), "--out", str(root / "s1.ckpt"),
            "--epochs", "2", "--lr", "1e-3", "--seed", "1", "--log", str(root / "s1.csv"),
        ]) == 0
        assert main([
            "train-scanet", "--data", str(data), "--checkpoint", str(root / "s1.ckpt"),
            "--out", str(root / "model.ckpt"), "--epochs", "2", "--lr", "1e-3", "--seed", "1",
            "--log", str(root / "s2.csv"),
        ]) == 0
        assert main([
            "eval", "--data", str(data), "--checkpoint", str(root / "model.ckpt"),
            "--negatives", "soft", "--replications", "2", "--anchors", "5",
            "--out", str(root / "report.json"), "--seed", "0",
        ]) == 0
        runs.append(root)

    same = {}
    for rel in ("data/items.jsonl", "data/outfits.jsonl", "data/planted_structure.json",
                "s1.csv", "s2.csv", "s1.ckpt", "model.ckpt", "report.json"):
        same[rel] = (runs[0] / rel).read_bytes() == (runs[1] / rel).read_bytes()

    # checkpoint round trip reproduces forward outputs bit-exactly
    bundle_a = load_checkpoint(runs[0] / "model.ckpt")
    bundle_b = load_checkpoint(runs[1] / "model.ckpt")
    feats = torch.randn(4, small["d_f"], generator=torch.Generator().manual_seed(0))
    with torch.no_grad():
        ea = bundle_a.senet_encoder(feats)
        eb = bundle_b.senet_encoder(feats)
        mu_a, lv_a = bundle_a.senet(ea.unsqueeze(0))
        mu_b, lv_b = bundle_b.senet(eb.unsqueeze(0))
    round_trip = bool(torch.equal(mu_a, mu_b) and torch.equal(lv_a, lv_b) and torch.equal(ea, eb))

    ok = all(same.values()) and round_trip
    assert _report(
        "determinism",
        ok,
        f"bit-identical artifacts: {[k for k, v in same.items() if not v] or 'all'}; "
        f"checkpoint round-trip forward bit-exact: {round_trip}",
    )
