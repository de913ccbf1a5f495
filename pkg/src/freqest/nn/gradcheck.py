"""Central finite-difference checks for the gradient tape."""

from __future__ import annotations

from typing import Callable

import numpy as np

from freqest.nn.tensor import Parameter, Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """``||a - n|| / max(||a|| + ||n||, floor)`` over the sampled entries."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: list[Tensor],
    rng: np.random.Generator,
    n_entries: int = 6,
    rel_step: float = 1e-5,
    tol: float = 1e-4,
    refinements: int = 4,
) -> dict[int, float]:
    """Compare backprop against central differences on sampled entries.

    ``loss_fn`` must rebuild the graph from the current ``.data`` of
    ``tensors`` on every call and be deterministic.  Returns the relative
    error per tensor (keyed by position in ``tensors``).

    Denominators are floored at ``1e-3`` times the RMS gradient over all
    checked tensors, so a gradient that is exactly zero (a conv bias feeding
    a batch norm) is judged against the scale of its neighbours rather than
    against its own rounding noise.

    An entry that disagrees at step ``h`` is retried at ``h/10``, ``h/100``, ...
    (up to ``refinements`` times) and the closest estimate is kept: a ReLU
    switching sign inside ``[x - h, x + h]`` corrupts the difference
    quotient, and a smaller step stays inside the smooth region.
    """
    for t in tensors:
        t.grad = np.zeros_like(t.data) if isinstance(t, Parameter) else None
    loss_fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    total = sum(a.size for a in analytic)
    rms = float(np.sqrt(sum(float(np.sum(a.astype(np.float64) ** 2)) for a in analytic) / max(total, 1)))
    unit_floor = max(1e-3 * rms, 1e-12)
    errors = {}
    for k, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_entries, flat.size), replace=False)
        h = rel_step * max(float(np.abs(t.data).max()), 1.0)
        ana = analytic[k].reshape(-1)[picks]
        num = np.empty(len(picks))
        for i, p in enumerate(picks):
            step, best = h, None
            for _ in range(refinements + 1):
                est = _difference(loss_fn, flat, p, step)
                err = relative_error(ana[i], est, unit_floor)
                if best is None or err < best[0]:
                    best = (err, est)
                if err < tol:
                    break
                step /= 10
            num[i] = best[1]
        errors[k] = relative_error(ana, num, unit_floor * np.sqrt(len(picks)))
    return errors


def _difference(loss_fn, flat: np.ndarray, p: int, h: float) -> float:
    orig = flat[p]
    flat[p] = orig + h
    up = float(loss_fn().data)
    flat[p] = orig - h
    down = float(loss_fn().data)
    flat[p] = orig
    return (up - down) / (2 * h)
