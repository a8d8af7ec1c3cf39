"""Style-conditioned subspace compatibility network.

Item embeddings are gated by learned subspace masks; convex attention
weights over the masks come from (anchor category, target category, style
representation). Compatibility is learned with hinge triplet losses over
anchor/query-set distances, including a second hinge that penalizes the
wrong style yielding smaller distances than the true one.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

from .data import HighCategory

N_CATEGORIES = len(HighCategory)
CATEGORY_INDEX = {c: i for i, c in enumerate(HighCategory)}


@dataclass
class CompatConfig:
    d_s: int = 64
    n_subspaces: int = 5
    attn_hidden: int = 32
    margin: float = 0.3
    n_categories: int = N_CATEGORIES

    def validate(self) -> None:
        if self.n_subspaces < 1:
            raise ValueError("need at least one subspace mask")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        for name in ("d_s", "attn_hidden", "n_categories"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class SubspaceAttention(nn.Module):
    """(one-hot category pair, style rep) -> convex weights over subspaces."""

    def __init__(self, config: CompatConfig, rep_dim: int):
        super().__init__()
        config.validate()
        self.config = config
        self.rep_dim = rep_dim
        self.fc_cat = nn.Linear(2 * config.n_categories, config.attn_hidden)
        self.fc_rep = nn.Linear(rep_dim, config.attn_hidden)
        self.head = nn.Sequential(
            nn.Linear(2 * config.attn_hidden, config.attn_hidden),
            nn.ReLU(),
            nn.Linear(config.attn_hidden, config.n_subspaces),
        )

    def forward(self, cat_a: torch.Tensor, cat_t: torch.Tensor, rep: torch.Tensor) -> torch.Tensor:
        """cat_a, cat_t: (n,) int64 category indices; rep: (n, rep_dim)."""
        if rep.shape[-1] != self.rep_dim:
            raise ValueError(f"style rep dim {rep.shape[-1]}, expected {self.rep_dim}")
        onehots = torch.cat(
            [
                F.one_hot(cat_a, self.config.n_categories),
                F.one_hot(cat_t, self.config.n_categories),
            ],
            dim=-1,
        ).to(rep.dtype)
        h = torch.cat([F.relu(self.fc_cat(onehots)), F.relu(self.fc_rep(rep))], dim=-1)
        return torch.softmax(self.head(h), dim=-1)


class SubspaceEmbedder(nn.Module):
    """f = sum_j w_j (x * mask_j), with w from :class:`SubspaceAttention`."""

    def __init__(self, config: CompatConfig, rep_dim: int):
        super().__init__()
        self.config = config
        self.attention = SubspaceAttention(config, rep_dim)
        self.masks = nn.Parameter(torch.empty(config.n_subspaces, config.d_s).normal_(0.9, 0.7))

    def forward(self, x, cat_a, cat_t, rep):
        """x: (n, d_s) item embeddings, embedded in the role of ``cat_a``
        against targets of category ``cat_t``."""
        if x.shape[-1] != self.config.d_s:
            raise ValueError(f"item embedding dim {x.shape[-1]}, expected {self.config.d_s}")
        weights = self.attention(cat_a, cat_t, rep)
        return x * (weights @ self.masks)

    def pair_distance(self, x_a, cat_a, x_b, cat_b, rep) -> torch.Tensor:
        """Role-symmetric conditional distance between rows of x_a and x_b."""
        f_a = self.forward(x_a, cat_a, cat_b, rep)
        f_b = self.forward(x_b, cat_b, cat_a, rep)
        return torch.linalg.vector_norm(f_a - f_b, dim=-1)


def positive_distance(
    embedder: SubspaceEmbedder,
    anchor_x: torch.Tensor,
    anchor_cat: int,
    query_x: torch.Tensor,
    query_cats: torch.Tensor,
    rep: torch.Tensor,
) -> torch.Tensor:
    """Mean conditional distance from one anchor to its query set.

    anchor_x: (d_s,); query_x: (q, d_s); rep: (rep_dim,) shared by all pairs.
    """
    q = query_x.shape[0]
    if q == 0:
        raise ValueError("query set is empty (singleton outfit)")
    a = anchor_x.unsqueeze(0).expand(q, -1)
    cats_a = torch.full((q,), anchor_cat, dtype=torch.int64)
    reps = rep.unsqueeze(0).expand(q, -1)
    return embedder.pair_distance(a, cats_a, query_x, query_cats, reps).mean()


def compat_loss(d_pos: torch.Tensor, d_neg: torch.Tensor, margin: float) -> torch.Tensor:
    """Hinge on (mean positive distance) - (aggregated negative distance)."""
    return F.relu(d_pos - d_neg + margin)


def style_compat_loss(d_pos_true: torch.Tensor, d_pos_wrong: torch.Tensor, margin: float) -> torch.Tensor:
    """Hinge pushing the true-style distance below the wrong-style distance."""
    return F.relu(d_pos_true - d_pos_wrong + margin)


def outfit_score(
    embedder: SubspaceEmbedder,
    item_x: torch.Tensor,
    item_cats: torch.Tensor,
    rep: torch.Tensor,
) -> torch.Tensor:
    """Negated mean conditional distance over all unordered item pairs."""
    n = item_x.shape[0]
    if n < 2:
        raise ValueError("outfit score needs at least 2 items")
    ia, ib = torch.triu_indices(n, n, offset=1)
    reps = rep.unsqueeze(0).expand(ia.shape[0], -1)
    d = embedder.pair_distance(item_x[ia], item_cats[ia], item_x[ib], item_cats[ib], reps)
    return -d.mean()
