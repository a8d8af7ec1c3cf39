"""Shared test utilities: finite-difference gradient checking."""
import torch


def finite_diff_grads(loss_fn, params, eps=1e-6):
    """Central-difference gradients of loss_fn() w.r.t. each parameter tensor.

    loss_fn is re-evaluated after in-place perturbations; parameters must be
    float64 for the stated tolerances to hold.
    """
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                up = float(loss_fn())
                flat[i] = orig - eps
                down = float(loss_fn())
                flat[i] = orig
                gflat[i] = (up - down) / (2 * eps)
            grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor) over all tensors."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
        worst = max(worst, float(((a - n).abs() / denom).max()))
    return worst
