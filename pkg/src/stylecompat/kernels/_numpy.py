"""Pure-numpy scoring kernels (reference backend).

All kernels evaluate role-symmetric conditional distances

    D(a, b) = || x_a * G[c_a, c_b] - x_b * G[c_b, c_a] ||_2

where G[i, j] is the effective subspace gate for an item of category i
embedded against a target of category j under a fixed style representation.
"""
from __future__ import annotations

import numpy as np


def cond_dist_matrix(xa, ca, xb, cb, gates):
    """Distance matrix between two item sets.

    xa: (n, d), xb: (m, d) float64; ca: (n,), cb: (m,) intp; gates: (C, C, d).
    Returns (n, m) float64.
    """
    ga = gates[ca[:, None], cb[None, :]]  # (n, m, d): G[ca_i, cb_j]
    gb = gates[cb[None, :], ca[:, None]]  # (n, m, d): G[cb_j, ca_i]
    diff = xa[:, None, :] * ga - xb[None, :, :] * gb
    return np.sqrt(np.einsum("nmd,nmd->nm", diff, diff))


def pair_dists(xa, ca, xb, cb, gates):
    """Row-paired distances: out[i] = D(xa[i], xb[i]). Returns (n,) float64."""
    ga = gates[ca, cb]
    gb = gates[cb, ca]
    diff = xa * ga - xb * gb
    return np.sqrt(np.einsum("nd,nd->n", diff, diff))
