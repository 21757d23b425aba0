"""Central finite-difference gradient verification."""

import numpy as np

from .tensor import no_grad


def grad_check(f, params, step=1e-5, max_components=None, seed=0):
    """Compare analytic gradients of scalar ``f()`` against central differences.

    Returns the max over checked components of
    ``|analytic - numeric| / max(1, |numeric|)``. Non-finite values yield ``inf``.

    ``max_components`` caps how many entries per parameter are probed: entries
    with nonzero analytic gradient come first, then a seeded sample of the rest.
    """
    params = list(params.values()) if isinstance(params, dict) else list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_components is not None and flat.size > max_components:
            nz = np.flatnonzero(a.reshape(-1))[:max_components]
            rest = np.setdiff1d(idx, nz)
            extra = rng.choice(rest, size=min(len(rest), max(0, max_components - len(nz))), replace=False)
            idx = np.concatenate([nz, np.sort(extra)])
        a_flat = a.reshape(-1)
        for i in idx:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + step
                up = f().item()
                flat[i] = orig - step
                down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            if not (np.isfinite(numeric) and np.isfinite(a_flat[i])):
                return float("inf")
            worst = max(worst, abs(a_flat[i] - numeric) / max(1.0, abs(numeric)))
    for p in params:
        p.zero_grad()
    return worst
