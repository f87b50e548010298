"""Gradient verification against central finite differences."""

import numpy as np


def gradient_check(build_loss, params, eps=1e-4):
    """Compare reverse-mode gradients with central finite differences.

    Parameters
    ----------
    build_loss : callable
        Rebuilds the computation and returns the scalar loss tensor. Called
        once per perturbed entry, so keep the configuration tiny.
    params : dict
        name -> Tensor; every entry of every tensor is perturbed.
    eps : float
        Central-difference step.

    Returns
    -------
    dict
        name -> relative error, where relative error is the max absolute
        gradient difference normalized by the largest gradient magnitude in
        that tensor (floored at 1e-6 so zero-gradient parameters do not
        divide by zero).
    """
    for p in params.values():
        p.grad = None
    loss = build_loss()
    loss.backward()
    analytic = {k: np.array(p.grad if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    errors = {}
    for name, p in params.items():
        fd = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = build_loss().item()
            flat[i] = keep - eps
            lo = build_loss().item()
            flat[i] = keep
            fd_flat[i] = (hi - lo) / (2.0 * eps)
        a = analytic[name]
        scale = max(np.abs(a).max(), np.abs(fd).max(), 1e-6)
        errors[name] = float(np.abs(a - fd).max() / scale)
    return errors
