"""Frozen-model scoring over a catalog.

After training, every ranking surface (fill-in-the-blank, AU-ROC, beam
search, the HTTP service) reduces to conditional pair distances between
pre-embedded catalog items. For a fixed style representation the subspace
attention collapses to one effective gate vector per ordered category pair,
so the hot loop is a pure array kernel; see :mod:`stylecompat.kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Catalog
from .model import ModelBundle

_GATE_CACHE_MAX = 64


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class AttentionWeights:
    """Numpy copies of the attention net and masks of a frozen embedder."""

    w_cat: np.ndarray
    b_cat: np.ndarray
    w_rep: np.ndarray
    b_rep: np.ndarray
    w_h1: np.ndarray
    b_h1: np.ndarray
    w_h2: np.ndarray
    b_h2: np.ndarray
    masks: np.ndarray  # (n_subspaces, d_s)
    n_categories: int

    @classmethod
    def from_embedder(cls, embedder) -> "AttentionWeights":
        att = embedder.attention
        grab = lambda t: t.detach().double().numpy()
        return cls(
            w_cat=grab(att.fc_cat.weight),
            b_cat=grab(att.fc_cat.bias),
            w_rep=grab(att.fc_rep.weight),
            b_rep=grab(att.fc_rep.bias),
            w_h1=grab(att.head[0].weight),
            b_h1=grab(att.head[0].bias),
            w_h2=grab(att.head[2].weight),
            b_h2=grab(att.head[2].bias),
            masks=grab(embedder.masks),
            n_categories=att.config.n_categories,
        )

    def subspace_weights(self, rep: np.ndarray) -> np.ndarray:
        """(C*C, n_subspaces) attention weights for every ordered category pair."""
        C = self.n_categories
        pair_onehot = np.zeros((C * C, 2 * C))
        idx = np.arange(C * C)
        pair_onehot[idx, idx // C] = 1.0
        pair_onehot[idx, C + idx % C] = 1.0
        h_cat = _relu(pair_onehot @ self.w_cat.T + self.b_cat)
        h_rep = _relu(self.w_rep @ rep + self.b_rep)
        h = np.concatenate([h_cat, np.tile(h_rep, (C * C, 1))], axis=1)
        logits = _relu(h @ self.w_h1.T + self.b_h1) @ self.w_h2.T + self.b_h2
        return _softmax(logits)

    def gates(self, rep: np.ndarray) -> np.ndarray:
        """(C, C, d_s) effective gate per ordered (anchor, target) pair."""
        C = self.n_categories
        omega = self.subspace_weights(rep)
        return np.ascontiguousarray((omega @ self.masks).reshape(C, C, -1))


class FrozenScorer:
    """Catalog-wide conditional distance oracle over a frozen model."""

    def __init__(
        self,
        ids: list[str],
        embeddings: np.ndarray,
        cat_idx: np.ndarray,
        attention: AttentionWeights,
        backend: str | None = None,
    ):
        self.ids = list(ids)
        self.row_of = {iid: i for i, iid in enumerate(self.ids)}
        self.X = np.ascontiguousarray(embeddings, dtype=np.float64)
        self.cats = np.ascontiguousarray(cat_idx, dtype=np.intp)
        self.attention = attention
        self._kern = kernels.get_backend(backend) if backend else kernels
        self.backend = backend or kernels.BACKEND
        self._gate_cache: dict[bytes, np.ndarray] = {}

    @classmethod
    def from_bundle(cls, bundle: ModelBundle, catalog: Catalog, backend: str | None = None) -> "FrozenScorer":
        if not bundle.has_compat:
            raise ValueError("bundle has no trained compatibility network")
        bundle.eval_mode()
        ids, X, cats = bundle.embed_catalog(catalog)
        return cls(ids, X, cats, AttentionWeights.from_embedder(bundle.embedder), backend=backend)

    def gates(self, rep: np.ndarray) -> np.ndarray:
        rep = np.asarray(rep, dtype=np.float64)
        key = rep.tobytes()
        hit = self._gate_cache.get(key)
        if hit is None:
            if len(self._gate_cache) >= _GATE_CACHE_MAX:
                self._gate_cache.clear()
            hit = self._gate_cache[key] = self.attention.gates(rep)
        return hit

    def _rows(self, item_ids) -> np.ndarray:
        return np.fromiter((self.row_of[i] for i in item_ids), dtype=np.intp, count=len(item_ids))

    def dist_matrix(self, ids_a, ids_b, rep) -> np.ndarray:
        """(len(a), len(b)) conditional distances under one style rep."""
        ra, rb = self._rows(ids_a), self._rows(ids_b)
        gates = self.gates(rep)
        return self._kern.cond_dist_matrix(self.X[ra], self.cats[ra], self.X[rb], self.cats[rb], gates)

    def pair_distance(self, id_a: str, id_b: str, rep) -> float:
        return float(self.dist_matrix([id_a], [id_b], rep)[0, 0])

    def positive_distance(self, anchor_id: str, query_ids, rep) -> float:
        """Mean conditional distance from an anchor to a query set."""
        if not query_ids:
            raise ValueError("query set is empty")
        return float(self.dist_matrix([anchor_id], list(query_ids), rep).mean())

    def outfit_score(self, item_ids, rep) -> float:
        """Negated mean pairwise conditional distance; higher is better."""
        ids = list(item_ids)
        if len(ids) < 2:
            raise ValueError("outfit score needs at least 2 items")
        d = self.dist_matrix(ids, ids, rep)
        iu = np.triu_indices(len(ids), k=1)
        return float(-d[iu].mean())

    def extension_sums(self, candidate_ids, partial_ids, rep) -> np.ndarray:
        """Sum of distances from each candidate to every partial-outfit item."""
        return self.dist_matrix(candidate_ids, partial_ids, rep).sum(axis=1)
