"""Two-stage training.

Stage 1 trains the style encoder and classifier with cross-entropy plus a
weighted KL pull toward the unit normal. Pooled per-style Gaussians are then
computed from the frozen encoder, and stage 2 trains the compatibility
network (and the compat backbone tail) with hinge triplet losses while the
style side stays bit-frozen.
"""
from __future__ import annotations

import copy
import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .compat_net import CATEGORY_INDEX
from .data import Catalog, Outfit, Split, outfits_by_split
from .encoders import batch_tensor
from .model import ModelBundle
from .style_encoder import PooledStyleStats, kl_to_unit_batch, pool_styles


class TrainingDiverged(RuntimeError):
    def __init__(self, stage: str, epoch: int, batch: int, lr: float):
        super().__init__(
            f"non-finite loss in {stage} at epoch {epoch}, batch {batch} (lr={lr:g})"
        )
        self.epoch = epoch
        self.batch = batch
        self.lr = lr


@dataclass
class Stage1Config:
    lr: float = 5e-5
    batch_size: int = 128
    epochs: int = 20
    alpha_kl: float = 0.05


@dataclass
class Stage2Config:
    lr: float = 1e-5
    batch_size: int = 32
    epochs: int = 30
    alpha_compat: float = 1.0
    alpha_stylecompat: float = 0.5
    n_neg: int = 3
    # "mean" averages the negatives' distances; "min" compares against the
    # hardest sampled negative, which keeps the hinge active long enough to
    # learn the subtler style/fine structure once easy negatives are solved.
    neg_aggregate: str = "mean"
    # Fraction of triplets whose true-style representation is the pooled one
    # rather than the outfit's own. Pooled parameters are assumed
    # representative of a style at generation time; mixing them into the true
    # side keeps that path in-distribution and blocks the degenerate solution
    # of telling pooled and outfit representations apart instead of styles.
    pooled_rep_rate: float = 0.5


@dataclass
class TrainConfig:
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    seed: int = 0
    grad_clip: float = 5.0
    patience: int | None = None

    def validate(self) -> None:
        for name, cfg in (("stage1", self.stage1), ("stage2", self.stage2)):
            if cfg.lr <= 0 or cfg.batch_size <= 0 or cfg.epochs < 0:
                raise ValueError(f"{name} needs positive lr/batch_size and epochs >= 0")
        for w in (self.stage1.alpha_kl, self.stage2.alpha_compat, self.stage2.alpha_stylecompat):
            if w < 0:
                raise ValueError("loss weights must be >= 0")
        if self.stage2.n_neg < 1:
            raise ValueError("need at least one negative per triplet")
        if self.stage2.neg_aggregate not in ("mean", "min"):
            raise ValueError("neg_aggregate must be 'mean' or 'min'")
        if not 0.0 <= self.stage2.pooled_rep_rate <= 1.0:
            raise ValueError("pooled_rep_rate must be in [0, 1]")


def state_hash(module: torch.nn.Module) -> str:
    """Digest of a module's parameters; used to verify freezes."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def write_metrics_csv(log: Sequence[dict], path: str | Path) -> None:
    if not log:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(log[0].keys()))
        writer.writeheader()
        writer.writerows(log)


# ---------------------------------------------------------------- stage 1


def _pad_outfit_batch(bundle: ModelBundle, catalog: Catalog, outfits: Sequence[Outfit]):
    """Stack outfits into padded raw inputs plus a validity mask and labels."""
    sizes = [len(o.items) for o in outfits]
    L = max(sizes)
    rows = []
    for o in outfits:
        items = [catalog[i] for i in o.sorted_items()]
        t = batch_tensor(items, catalog)
        if t.shape[0] < L:
            pad = torch.zeros((L - t.shape[0],) + t.shape[1:], dtype=t.dtype)
            t = torch.cat([t, pad])
        rows.append(t)
    inputs = torch.stack(rows)
    mask = torch.zeros(len(outfits), L, dtype=torch.bool)
    for i, s in enumerate(sizes):
        mask[i, :s] = True
    labels = torch.tensor([o.style.index for o in outfits], dtype=torch.int64)
    return inputs, mask, labels


def _stage1_forward(bundle: ModelBundle, inputs, mask, generator=None):
    b, L = inputs.shape[:2]
    flat = inputs.reshape(b * L, *inputs.shape[2:])
    feats = bundle.senet_encoder(flat).reshape(b, L, -1)
    mu, logvar = bundle.senet(feats, mask)
    if bundle.rep_config.classifier_input == "sample":
        if generator is None:
            cls_in = mu  # deterministic eval path
        else:
            eps = torch.randn(mu.shape, generator=generator)
            cls_in = mu + torch.exp(0.5 * logvar) * eps
    else:
        cls_in = torch.cat([mu, logvar.exp()], dim=-1)
    logits = bundle.classifier(cls_in)
    return mu, logvar, logits


@torch.no_grad()
def _valid_accuracy(bundle: ModelBundle, catalog: Catalog, outfits: Sequence[Outfit], batch_size: int) -> float:
    bundle.eval_mode()
    hits = 0
    for i in range(0, len(outfits), batch_size):
        chunk = outfits[i : i + batch_size]
        inputs, mask, labels = _pad_outfit_batch(bundle, catalog, chunk)
        _, _, logits = _stage1_forward(bundle, inputs, mask, generator=None)
        hits += int((logits.argmax(dim=-1) == labels).sum())
    return hits / max(len(outfits), 1)


@torch.no_grad()
def mean_outfit_kl(bundle: ModelBundle, catalog: Catalog, outfits: Sequence[Outfit], batch_size: int = 256) -> float:
    """Mean per-outfit KL to the unit normal; the smoothness statistic."""
    bundle.eval_mode()
    total = 0.0
    for i in range(0, len(outfits), batch_size):
        chunk = outfits[i : i + batch_size]
        inputs, mask, _ = _pad_outfit_batch(bundle, catalog, chunk)
        b, L = inputs.shape[:2]
        feats = bundle.senet_encoder(inputs.reshape(b * L, *inputs.shape[2:])).reshape(b, L, -1)
        mu, logvar = bundle.senet(feats, mask)
        total += float(kl_to_unit_batch(mu, logvar).sum())
    return total / max(len(outfits), 1)


def train_stage1(
    bundle: ModelBundle,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    config: TrainConfig,
) -> list[dict]:
    """Train style encoder + classifier; returns the per-epoch metrics log.

    The best-validation-accuracy parameters are restored before returning.
    """
    config.validate()
    splits = outfits_by_split(outfits)
    train, valid = splits[Split.TRAIN], splits[Split.VALID]
    if not train or not valid:
        raise ValueError("stage 1 needs non-empty train and valid splits")
    cfg = config.stage1
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    generator = torch.Generator().manual_seed(config.seed + 1)

    params = [p for m in (bundle.senet_encoder, bundle.senet, bundle.classifier) for p in m.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr)
    log: list[dict] = []
    best = (-1.0, None)
    stale = 0
    for epoch in range(cfg.epochs):
        for m in (bundle.senet_encoder, bundle.senet, bundle.classifier):
            m.train()
        order = rng.permutation(len(train))
        tot_loss = tot_ce = tot_kl = 0.0
        n_batches = 0
        for bi, start in enumerate(range(0, len(train), cfg.batch_size)):
            batch = [train[j] for j in order[start : start + cfg.batch_size]]
            inputs, mask, labels = _pad_outfit_batch(bundle, catalog, batch)
            mu, logvar, logits = _stage1_forward(bundle, inputs, mask, generator=generator)
            ce = F.cross_entropy(logits, labels)
            kl = kl_to_unit_batch(mu, logvar).mean()
            loss = ce + cfg.alpha_kl * kl
            if not torch.isfinite(loss):
                raise TrainingDiverged("stage1", epoch, bi, cfg.lr)
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            opt.step()
            tot_loss += float(loss.detach())
            tot_ce += float(ce.detach())
            tot_kl += float(kl.detach())
            n_batches += 1
        acc = _valid_accuracy(bundle, catalog, valid, cfg.batch_size)
        log.append(
            {
                "epoch": epoch,
                "train_loss": tot_loss / n_batches,
                "train_ce": tot_ce / n_batches,
                "train_kl": tot_kl / n_batches,
                "valid_acc": acc,
            }
        )
        if acc > best[0]:
            best = (acc, {
                "senet_encoder": copy.deepcopy(bundle.senet_encoder.state_dict()),
                "senet": copy.deepcopy(bundle.senet.state_dict()),
                "classifier": copy.deepcopy(bundle.classifier.state_dict()),
            })
            stale = 0
        else:
            stale += 1
            if config.patience is not None and stale > config.patience:
                break
    if best[1] is not None:
        bundle.senet_encoder.load_state_dict(best[1]["senet_encoder"])
        bundle.senet.load_state_dict(best[1]["senet"])
        bundle.classifier.load_state_dict(best[1]["classifier"])
    bundle.eval_mode()
    return log


def compute_pooled(bundle: ModelBundle, catalog: Catalog, outfits: Sequence[Outfit]) -> PooledStyleStats:
    """Pooled per-style Gaussians over the training split; stored on the bundle."""
    train = outfits_by_split(outfits)[Split.TRAIN]
    rows = []
    for o in train:
        mu, var = bundle.outfit_distribution(o.sorted_items(), catalog)
        rows.append((o.style.name, mu, var))
    present = {name for name, _, _ in rows}
    missing = [l.name for l in bundle.style_labels if l.name not in present]
    if missing:
        raise ValueError(f"styles with zero training outfits: {missing}")
    bundle.pooled = pool_styles(rows)
    return bundle.pooled


# ---------------------------------------------------------------- stage 2


class _TripletData:
    """Precomputed frozen quantities shared by all stage-2 epochs."""

    def __init__(self, bundle: ModelBundle, catalog: Catalog, outfits: list[Outfit]):
        self.outfits = outfits
        ids = catalog.ids()
        self.row_of = {iid: i for i, iid in enumerate(ids)}
        self.raw = batch_tensor([catalog[i] for i in ids], catalog)
        self.cats = torch.tensor(
            [CATEGORY_INDEX[catalog[i].category.high] for i in ids], dtype=torch.int64
        )
        # same-high-category candidate rows for negative sampling
        self.neg_pool: dict[int, np.ndarray] = {}
        for c in sorted(set(int(x) for x in self.cats)):
            self.neg_pool[c] = np.nonzero(self.cats.numpy() == c)[0]
        # frozen per-outfit style distributions
        mus, vars_ = [], []
        for o in outfits:
            mu, var = bundle.outfit_distribution(o.sorted_items(), catalog)
            mus.append(mu)
            vars_.append(var)
        self.mu = torch.tensor(np.stack(mus), dtype=torch.float32)
        self.var = torch.tensor(np.stack(vars_), dtype=torch.float32)
        self.style_idx = np.array([o.style.index for o in outfits])
        self.item_rows = [
            np.array([self.row_of[i] for i in o.sorted_items()]) for o in outfits
        ]
        self.triplets = [
            (oi, ai) for oi, o in enumerate(outfits) for ai in range(len(o.items))
        ]


def _pooled_tensors(bundle: ModelBundle) -> tuple[torch.Tensor, torch.Tensor]:
    names = [l.name for l in bundle.style_labels]
    mu = torch.tensor(np.stack([bundle.pooled.means[n] for n in names]), dtype=torch.float32)
    var = torch.tensor(np.stack([bundle.pooled.variances[n] for n in names]), dtype=torch.float32)
    return mu, var


def _stage2_batch_loss(
    bundle: ModelBundle,
    data: _TripletData,
    batch: list[tuple[int, int]],
    neg_rows: np.ndarray,
    wrong_styles: np.ndarray,
    use_pooled: np.ndarray,
    samples_true: torch.Tensor | None,
    samples_wrong: torch.Tensor | None,
    cfg: Stage2Config,
    pooled_mu: torch.Tensor,
    pooled_var: torch.Tensor,
):
    b = len(batch)
    needs_pooled = (
        bundle.rep_config.lam_global_mean != 0.0 or bundle.rep_config.lam_global_var != 0.0
    )
    out_idx = np.array([oi for oi, _ in batch])
    true_style = torch.from_numpy(data.style_idx[out_idx])
    r_true_outfit = bundle.rep_builder.from_outfit(
        mu=data.mu[out_idx],
        var=data.var[out_idx],
        pooled_mu=pooled_mu[true_style] if needs_pooled else None,
        pooled_var=pooled_var[true_style] if needs_pooled else None,
        sample=samples_true,
    )
    r_true_pooled = bundle.rep_builder.from_pooled(
        pooled_mu=pooled_mu[true_style],
        pooled_var=pooled_var[true_style],
        sample=samples_true,
    )
    r_true = torch.where(torch.from_numpy(use_pooled)[:, None], r_true_pooled, r_true_outfit)
    wrong = torch.from_numpy(wrong_styles)
    r_wrong = bundle.rep_builder.from_pooled(
        pooled_mu=pooled_mu[wrong],
        pooled_var=pooled_var[wrong],
        sample=samples_wrong,
    )

    # Pair tables. Groups: 0 anchor/query (true rep), 1 negative/query
    # (true rep, segmented per negative), 2 anchor/query (wrong rep).
    left_rows, right_rows, rep_rows = [], [], []
    pos_pairs, neg_pairs, wrong_pairs = [], [], []
    pos_cnt = np.zeros(b)
    for t, (oi, ai) in enumerate(batch):
        rows = data.item_rows[oi]
        anchor = rows[ai]
        queries = np.delete(rows, ai)
        nq = len(queries)
        pos_cnt[t] = nq
        for q in queries:
            pos_pairs.append((len(left_rows), t))
            left_rows.append(anchor); right_rows.append(q); rep_rows.append(t)
        for k, nrow in enumerate(neg_rows[t]):
            for q in queries:
                neg_pairs.append((len(left_rows), t * cfg.n_neg + k))
                left_rows.append(nrow); right_rows.append(q); rep_rows.append(t)
        for q in queries:
            wrong_pairs.append((len(left_rows), t))
            left_rows.append(anchor); right_rows.append(q); rep_rows.append(b + t)

    left_rows = np.array(left_rows)
    right_rows = np.array(right_rows)
    uniq, local = np.unique(np.concatenate([left_rows, right_rows]), return_inverse=True)
    li = torch.from_numpy(local[: len(left_rows)])
    ri = torch.from_numpy(local[len(left_rows) :])
    E = bundle.compat_encoder(data.raw[torch.from_numpy(uniq)])
    lc = data.cats[torch.from_numpy(left_rows)]
    rc = data.cats[torch.from_numpy(right_rows)]
    reps_all = torch.cat([r_true, r_wrong], dim=0)
    pair_reps = reps_all[torch.tensor(rep_rows)]
    f_l = bundle.embedder(E[li], lc, rc, pair_reps)
    f_r = bundle.embedder(E[ri], rc, lc, pair_reps)
    d = torch.linalg.vector_norm(f_l - f_r, dim=-1)

    counts = torch.from_numpy(pos_cnt).float()

    def seg_mean(pairs, n_segs):
        idx = torch.tensor([p for p, _ in pairs])
        seg = torch.tensor([s for _, s in pairs])
        return torch.zeros(n_segs).index_put((seg,), d[idx], accumulate=True)

    d_pos = seg_mean(pos_pairs, b) / counts
    per_neg = seg_mean(neg_pairs, b * cfg.n_neg).view(b, cfg.n_neg) / counts[:, None]
    d_neg = per_neg.min(dim=1).values if cfg.neg_aggregate == "min" else per_neg.mean(dim=1)
    d_wrong = seg_mean(wrong_pairs, b) / counts

    margin = bundle.compat_config.margin
    l_compat = F.relu(d_pos - d_neg + margin).mean()
    l_style = F.relu(d_pos - d_wrong + margin).mean()
    loss = cfg.alpha_compat * l_compat + cfg.alpha_stylecompat * l_style
    return loss, float(l_compat.detach()), float(l_style.detach())


def _draw_batch_randomness(
    data: _TripletData,
    batch: list[tuple[int, int]],
    cfg: Stage2Config,
    n_styles: int,
    rng: np.random.Generator,
    needs_sample: bool,
    pooled_mu: torch.Tensor,
    pooled_var: torch.Tensor,
):
    b = len(batch)
    neg_rows = np.zeros((b, cfg.n_neg), dtype=np.int64)
    for t, (oi, ai) in enumerate(batch):
        anchor = data.item_rows[oi][ai]
        pool = data.neg_pool[int(data.cats[anchor])]
        pool = pool[pool != anchor]
        neg_rows[t] = rng.choice(pool, size=cfg.n_neg, replace=False)
    out_idx = np.array([oi for oi, _ in batch])
    true_style = data.style_idx[out_idx]
    wrong_styles = (true_style + rng.integers(1, n_styles, size=b)) % n_styles
    use_pooled = rng.random(b) < cfg.pooled_rep_rate
    samples_true = samples_wrong = None
    if needs_sample:
        mu = data.mu[out_idx].numpy().copy()
        var = data.var[out_idx].numpy().copy()
        # pooled-substituted triplets sample from the pooled Gaussian instead
        tmu = pooled_mu[torch.from_numpy(true_style)].numpy()
        tvar = pooled_var[torch.from_numpy(true_style)].numpy()
        mu[use_pooled] = tmu[use_pooled]
        var[use_pooled] = tvar[use_pooled]
        samples_true = torch.from_numpy(
            (mu + np.sqrt(var) * rng.standard_normal(mu.shape)).astype(np.float32)
        )
        wmu = pooled_mu[torch.from_numpy(wrong_styles)].numpy()
        wvar = pooled_var[torch.from_numpy(wrong_styles)].numpy()
        samples_wrong = torch.from_numpy(
            (wmu + np.sqrt(wvar) * rng.standard_normal(wmu.shape)).astype(np.float32)
        )
    return neg_rows, wrong_styles, use_pooled, samples_true, samples_wrong


def train_stage2(
    bundle: ModelBundle,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    config: TrainConfig,
) -> list[dict]:
    """Train the compatibility network against the frozen style side."""
    config.validate()
    if bundle.pooled is None:
        raise ValueError("run compute_pooled before stage 2")
    if len(bundle.style_labels) < 2:
        raise ValueError("style-compatibility loss needs at least 2 styles")
    cfg = config.stage2
    splits = outfits_by_split(outfits)
    train, valid = splits[Split.TRAIN], splits[Split.VALID]
    if not train:
        raise ValueError("stage 2 needs a non-empty train split")

    for m in (bundle.senet_encoder, bundle.senet, bundle.classifier):
        m.requires_grad_(False)
        m.eval()
    frozen_before = state_hash(bundle.senet) + state_hash(bundle.senet_encoder)

    torch.manual_seed(config.seed + 100)
    rng = np.random.default_rng(config.seed + 100)
    data = _TripletData(bundle, catalog, list(train))
    valid_data = _TripletData(bundle, catalog, list(valid)) if valid else None
    pooled_mu, pooled_var = _pooled_tensors(bundle)
    n_styles = len(bundle.style_labels)
    needs_sample = bundle.rep_config.needs_sample()

    params = [p for p in bundle.embedder.parameters()]
    params += [p for p in bundle.compat_encoder.parameters() if p.requires_grad]
    params += [p for p in bundle.rep_builder.parameters()]
    opt = torch.optim.Adam(params, lr=cfg.lr)

    # fixed validation triplet set for the early-stop metric
    valid_batches = []
    if valid_data is not None:
        vrng = np.random.default_rng(config.seed + 999)
        vtrips = list(valid_data.triplets)
        for start in range(0, len(vtrips), cfg.batch_size):
            vb = vtrips[start : start + cfg.batch_size]
            if len(vb) < 2:
                continue
            valid_batches.append(
                (vb, *_draw_batch_randomness(valid_data, vb, cfg, n_styles, vrng, needs_sample, pooled_mu, pooled_var))
            )

    log: list[dict] = []
    best: tuple[float, dict | None] = (float("inf"), None)
    stale = 0
    for epoch in range(cfg.epochs):
        bundle.embedder.train()
        bundle.compat_encoder.train()
        order = rng.permutation(len(data.triplets))
        tot = tot_c = tot_s = 0.0
        n_batches = 0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [data.triplets[j] for j in order[start : start + cfg.batch_size]]
            if len(batch) < 2:
                continue
            randomness = _draw_batch_randomness(
                data, batch, cfg, n_styles, rng, needs_sample, pooled_mu, pooled_var
            )
            loss, lc, ls = _stage2_batch_loss(
                bundle, data, batch, *randomness, cfg, pooled_mu, pooled_var
            )
            if not torch.isfinite(loss):
                raise TrainingDiverged("stage2", epoch, bi, cfg.lr)
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            opt.step()
            tot += float(loss.detach())
            tot_c += lc
            tot_s += ls
            n_batches += 1
        entry = {
            "epoch": epoch,
            "train_loss": tot / n_batches,
            "train_compat": tot_c / n_batches,
            "train_stylecompat": tot_s / n_batches,
        }
        if valid_batches:
            with torch.no_grad():
                bundle.embedder.eval()
                bundle.compat_encoder.eval()
                v = 0.0
                for vb, nr, ws, up, st, sw in valid_batches:
                    vloss, _, _ = _stage2_batch_loss(
                        bundle, valid_data, vb, nr, ws, up, st, sw, cfg, pooled_mu, pooled_var
                    )
                    v += float(vloss)
                entry["valid_loss"] = v / len(valid_batches)
            if entry["valid_loss"] < best[0]:
                best = (entry["valid_loss"], {
                    "embedder": copy.deepcopy(bundle.embedder.state_dict()),
                    "compat_encoder": copy.deepcopy(bundle.compat_encoder.state_dict()),
                    "rep_builder": copy.deepcopy(bundle.rep_builder.state_dict()),
                })
                stale = 0
            else:
                stale += 1
        log.append(entry)
        if config.patience is not None and stale > config.patience:
            break
    if best[1] is not None:
        bundle.embedder.load_state_dict(best[1]["embedder"])
        bundle.compat_encoder.load_state_dict(best[1]["compat_encoder"])
        bundle.rep_builder.load_state_dict(best[1]["rep_builder"])

    frozen_after = state_hash(bundle.senet) + state_hash(bundle.senet_encoder)
    if frozen_before != frozen_after:
        raise RuntimeError("frozen style modules changed during stage 2")
    bundle.has_compat = True
    bundle.eval_mode()
    return log
