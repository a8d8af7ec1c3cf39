"""Style encoder: outfit set -> diagonal Gaussian in style space.

A two-block set-attention encoder followed by single-seed attention pooling
produces (mu, log sigma^2) per outfit. The distribution is pulled toward the
unit normal by a KL penalty and supervised through a small style classifier
fed either a reparameterized sample or the distribution parameters. After
training, per-style pooled Gaussians summarize the whole training split and
back the style representation vectors consumed by the compatibility network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


class MultiheadAttentionBlock(nn.Module):
    """MAB(X, Y): residual multi-head attention plus a row-wise feed-forward."""

    def __init__(self, dim_q: int, dim_kv: int, dim_out: int, n_heads: int):
        super().__init__()
        if dim_out % n_heads != 0:
            raise ValueError(f"n_heads={n_heads} must divide dim_out={dim_out}")
        self.n_heads = n_heads
        self.fc_q = nn.Linear(dim_q, dim_out)
        self.fc_k = nn.Linear(dim_kv, dim_out)
        self.fc_v = nn.Linear(dim_kv, dim_out)
        self.fc_o = nn.Linear(dim_out, dim_out)
        self.ln0 = nn.LayerNorm(dim_out)
        self.ln1 = nn.LayerNorm(dim_out)

    def forward(self, query, keyval, key_mask=None):
        # key_mask: (b, n_kv) bool, True marks real (non-padded) elements.
        q = self.fc_q(query)
        k = self.fc_k(keyval)
        v = self.fc_v(keyval)
        b, nq, d = q.shape
        dh = d // self.n_heads
        qh = q.view(b, nq, self.n_heads, dh).transpose(1, 2)
        kh = k.view(b, -1, self.n_heads, dh).transpose(1, 2)
        vh = v.view(b, -1, self.n_heads, dh).transpose(1, 2)
        logits = qh @ kh.transpose(-1, -2) / math.sqrt(dh)
        if key_mask is not None:
            logits = logits.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        ctx = torch.softmax(logits, dim=-1) @ vh
        ctx = ctx.transpose(1, 2).reshape(b, nq, d)
        h = self.ln0(q + ctx)
        return self.ln1(h + F.relu(self.fc_o(h)))


class SetAttentionBlock(nn.Module):
    def __init__(self, dim_in: int, dim_out: int, n_heads: int):
        super().__init__()
        self.mab = MultiheadAttentionBlock(dim_in, dim_in, dim_out, n_heads)

    def forward(self, x, mask=None):
        return self.mab(x, x, key_mask=mask)


class PooledAttention(nn.Module):
    """Pooling by attention with a single learned seed vector."""

    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.seed = nn.Parameter(torch.randn(1, 1, dim))
        self.ff = nn.Linear(dim, dim)
        self.mab = MultiheadAttentionBlock(dim, dim, dim, n_heads)

    def forward(self, z, mask=None):
        seed = self.seed.expand(z.shape[0], -1, -1)
        return self.mab(seed, F.relu(self.ff(z)), key_mask=mask).squeeze(1)


@dataclass
class StyleEncoderConfig:
    d_s: int = 64  # item embedding dim (input) and style-space dim (output)
    d_z: int = 32
    n_heads: int = 2
    classifier_hidden: int = 32
    n_styles: int = 4

    def validate(self) -> None:
        if self.d_z % self.n_heads != 0:
            raise ValueError("n_heads must divide d_z")
        for name in ("d_s", "d_z", "n_heads", "classifier_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_styles < 2:
            raise ValueError("need at least 2 styles")


class StyleEncoderNet(nn.Module):
    """Permutation-invariant map from an outfit's item embeddings to (mu, logvar)."""

    def __init__(self, config: StyleEncoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.sab1 = SetAttentionBlock(config.d_s, config.d_z, config.n_heads)
        self.sab2 = SetAttentionBlock(config.d_z, config.d_z, config.n_heads)
        self.pool = PooledAttention(config.d_z, config.n_heads)
        self.head = nn.Linear(config.d_z, 2 * config.d_s)

    def forward(self, feats: torch.Tensor, mask: torch.Tensor | None = None):
        """feats: (b, L, d_s); mask: (b, L) bool with True for real items."""
        if feats.ndim != 3:
            raise ValueError(f"expected (batch, set, dim) input, got {tuple(feats.shape)}")
        if feats.shape[1] == 0:
            raise ValueError("empty outfit set")
        if not torch.isfinite(feats).all():
            raise ValueError("non-finite item features")
        z = self.sab1(feats, mask)
        z = self.sab2(z, mask)
        pooled = self.pool(z, mask)
        mu, logvar = self.head(pooled).chunk(2, dim=-1)
        return mu, logvar.clamp(LOGVAR_MIN, LOGVAR_MAX)

    def encode_outfit(self, feats: torch.Tensor) -> "StyleDistribution":
        """Single outfit (set_size, d_s) -> its style distribution."""
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise ValueError("an outfit needs at least 2 item embeddings")
        mu, logvar = self.forward(feats.unsqueeze(0))
        return StyleDistribution(mu[0].detach(), logvar[0].detach().exp())


@dataclass
class StyleDistribution:
    """Diagonal Gaussian over the style space."""

    mean: torch.Tensor
    var: torch.Tensor

    def __post_init__(self):
        if torch.any(self.var <= 0):
            raise ValueError("style variances must be strictly positive")
        if not (torch.isfinite(self.mean).all() and torch.isfinite(self.var).all()):
            raise ValueError("style distribution has non-finite parameters")

    def sample(self, generator: torch.Generator | None = None) -> torch.Tensor:
        eps = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype)
        return self.mean + self.var.sqrt() * eps


def kl_to_unit(dist: StyleDistribution) -> float:
    """KL(N(mu, diag(var)) || N(0, I)) in closed form, >= 0."""
    mu, var = dist.mean, dist.var
    return float(0.5 * torch.sum(var + mu * mu - 1.0 - torch.log(var)))


def kl_to_unit_batch(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Per-row KL for (b, d) parameter batches; differentiable."""
    return 0.5 * torch.sum(logvar.exp() + mu * mu - 1.0 - logvar, dim=-1)


class StyleClassifier(nn.Module):
    """Two fully connected layers ending in one logit per style."""

    def __init__(self, d_in: int, hidden: int, n_styles: int):
        super().__init__()
        self.d_in = d_in
        self.net = nn.Sequential(nn.Linear(d_in, hidden), nn.ReLU(), nn.Linear(hidden, n_styles))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.d_in:
            raise ValueError(f"classifier expects dim {self.d_in}, got {x.shape[-1]}")
        return self.net(x)


def classify(x: torch.Tensor, classifier: StyleClassifier) -> torch.Tensor:
    """Probability vector(s) over styles for a sample or parameter input."""
    return torch.softmax(classifier(x), dim=-1)


@dataclass
class PooledStyleStats:
    """Per-style pooled Gaussian: mean of outfit means, variance of their average."""

    means: dict[str, np.ndarray]
    variances: dict[str, np.ndarray]
    counts: dict[str, int]

    def styles(self) -> list[str]:
        return sorted(self.means)

    def to_json(self) -> dict:
        return {
            "means": {k: v.tolist() for k, v in self.means.items()},
            "variances": {k: v.tolist() for k, v in self.variances.items()},
            "counts": dict(self.counts),
        }

    @classmethod
    def from_json(cls, rec: Mapping) -> "PooledStyleStats":
        return cls(
            means={k: np.asarray(v, dtype=np.float32) for k, v in rec["means"].items()},
            variances={k: np.asarray(v, dtype=np.float32) for k, v in rec["variances"].items()},
            counts={k: int(v) for k, v in rec["counts"].items()},
        )


def pool_styles(per_outfit: Sequence[tuple[str, np.ndarray, np.ndarray]]) -> PooledStyleStats:
    """Aggregate (style_name, mu, var) rows from the frozen encoder.

    Pooled mean is the average of outfit means; pooled variance is
    sum(var) / n^2, i.e. the variance of that average.
    """
    by_style: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
    for name, mu, var in per_outfit:
        by_style.setdefault(name, []).append((np.asarray(mu, np.float64), np.asarray(var, np.float64)))
    means, variances, counts = {}, {}, {}
    for name, rows in by_style.items():
        n = len(rows)
        mus = np.stack([m for m, _ in rows])
        vars_ = np.stack([v for _, v in rows])
        means[name] = (mus.sum(axis=0) / n).astype(np.float32)
        variances[name] = (vars_.sum(axis=0) / (n * n)).astype(np.float32)
        counts[name] = n
    return PooledStyleStats(means, variances, counts)


LamValue = float | Literal["learned"]


@dataclass(frozen=True)
class StyleRepConfig:
    """Coefficients of the style representation r = [a, b] with

    a = lam_sample * s + lam_mean * mu + lam_global_mean * pooled_mu
    b = lam_var * var + lam_global_var * pooled_var

    Each coefficient is 0, 1, or the shared learned scalar.
    ``classifier_input`` picks what the style classifier consumes upstream.
    """

    name: str
    lam_sample: LamValue = 0.0
    lam_mean: LamValue = 0.0
    lam_var: LamValue = 0.0
    lam_global_mean: LamValue = 0.0
    lam_global_var: LamValue = 0.0
    classifier_input: Literal["sample", "params"] = "params"

    def uses_learned(self) -> bool:
        return "learned" in (
            self.lam_sample, self.lam_mean, self.lam_var, self.lam_global_mean, self.lam_global_var
        )

    def is_null(self) -> bool:
        lams = (self.lam_sample, self.lam_mean, self.lam_var, self.lam_global_mean, self.lam_global_var)
        return all(l == 0.0 for l in lams)

    def needs_sample(self) -> bool:
        return self.lam_sample != 0.0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lam_sample": self.lam_sample,
            "lam_mean": self.lam_mean,
            "lam_var": self.lam_var,
            "lam_global_mean": self.lam_global_mean,
            "lam_global_var": self.lam_global_var,
            "classifier_input": self.classifier_input,
        }

    @classmethod
    def from_json(cls, rec: Mapping) -> "StyleRepConfig":
        return cls(**rec)


REP_PRESETS: dict[str, StyleRepConfig] = {
    # single reparameterized sample
    "sample": StyleRepConfig("sample", lam_sample=1.0, classifier_input="sample"),
    # outfit-level Gaussian parameters (default; strongest compatibility variant)
    "params": StyleRepConfig("params", lam_mean=1.0, lam_var=1.0, classifier_input="params"),
    # learned mix of outfit mean and pooled mean
    "mean+global-mean": StyleRepConfig(
        "mean+global-mean", lam_mean="learned", lam_global_mean=1.0, classifier_input="sample"
    ),
    # learned outfit parameters plus pooled parameters
    "params+global": StyleRepConfig(
        "params+global",
        lam_mean="learned",
        lam_var="learned",
        lam_global_mean=1.0,
        lam_global_var=1.0,
        classifier_input="params",
    ),
    # learned sample plus pooled mean
    "sample+global-mean": StyleRepConfig(
        "sample+global-mean", lam_sample="learned", lam_global_mean=1.0, classifier_input="sample"
    ),
    # style-independent ablation: r is identically zero
    "none": StyleRepConfig("none"),
}


class StyleRepBuilder(nn.Module):
    """Builds style representation vectors r in R^{2 d_s} for one preset.

    Holds the single shared learned scalar when the preset uses one; it is
    trained alongside the compatibility network.
    """

    def __init__(self, config: StyleRepConfig, d_s: int):
        super().__init__()
        self.config = config
        self.d_s = d_s
        if config.uses_learned():
            self.learned_lam = nn.Parameter(torch.tensor(1.0))
        else:
            self.learned_lam = None

    def _lam(self, value: LamValue):
        if value == "learned":
            return self.learned_lam
        return float(value)

    def rep_dim(self) -> int:
        return 2 * self.d_s

    def from_outfit(
        self,
        mu: torch.Tensor,
        var: torch.Tensor,
        pooled_mu: torch.Tensor | None = None,
        pooled_var: torch.Tensor | None = None,
        sample: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """r for outfits with a reference distribution. Accepts (d,) or (b, d)."""
        cfg = self.config
        first = torch.zeros_like(mu)
        second = torch.zeros_like(var)
        if cfg.lam_sample != 0.0:
            if sample is None:
                raise ValueError(f"rep preset {cfg.name!r} needs a style-space sample")
            first = first + self._lam(cfg.lam_sample) * sample
        if cfg.lam_mean != 0.0:
            first = first + self._lam(cfg.lam_mean) * mu
        if cfg.lam_var != 0.0:
            second = second + self._lam(cfg.lam_var) * var
        if cfg.lam_global_mean != 0.0 or cfg.lam_global_var != 0.0:
            if pooled_mu is None or pooled_var is None:
                raise ValueError(f"rep preset {cfg.name!r} needs pooled style stats")
            if cfg.lam_global_mean != 0.0:
                first = first + self._lam(cfg.lam_global_mean) * pooled_mu
            if cfg.lam_global_var != 0.0:
                second = second + self._lam(cfg.lam_global_var) * pooled_var
        return torch.cat([first, second], dim=-1)

    def from_pooled(
        self,
        pooled_mu: torch.Tensor,
        pooled_var: torch.Tensor,
        sample: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """r when no reference outfit exists: pooled parameters stand in for
        the outfit-level ones, and the sample (if required but not given)
        falls back to the pooled mean."""
        if self.config.needs_sample() and sample is None:
            sample = pooled_mu
        return self.from_outfit(
            mu=pooled_mu, var=pooled_var, pooled_mu=pooled_mu, pooled_var=pooled_var, sample=sample
        )


def rep_config_by_name(name: str) -> StyleRepConfig:
    try:
        return REP_PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown style-rep preset {name!r}; choose from {sorted(REP_PRESETS)}"
        ) from None
