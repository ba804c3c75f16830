"""Finite-difference verification of backward rules.

Central differences per coordinate for small leaves; random directional
derivatives for large ones. Run in float64: float32 rounding swamps the
1e-5 tolerances these checks are held to.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def _directional(f: Callable[[], Tensor], leaf: Tensor, d: np.ndarray, step: float) -> float:
    base = leaf.data.copy()
    leaf.data = base + step * d
    fp = f().item()
    leaf.data = base - step * d
    fm = f().item()
    leaf.data = base
    return (fp - fm) / (2.0 * step)


def grad_check(
    f: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    step: float = 1e-4,
    max_coords: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Return the worst relative error between analytic and numeric grads.

    `f` must be a deterministic scalar function of the given leaves,
    re-evaluating the forward pass on each call. Leaves with more than
    `max_coords` elements are checked along random directions instead of
    coordinate-by-coordinate.
    """
    rng = rng or np.random.default_rng(0)
    for leaf in leaves:
        leaf.requires_grad = True
        leaf.grad = None

    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = [np.zeros_like(l.data) if l.grad is None else np.array(l.grad) for l in leaves]

    worst = 0.0
    for leaf, an in zip(leaves, analytic):
        if leaf.size <= max_coords:
            directions = [np.reshape(e, leaf.shape) for e in np.eye(leaf.size, dtype=leaf.dtype)]
        else:
            directions = [
                (lambda v: v / np.linalg.norm(v))(rng.standard_normal(leaf.shape))
                for _ in range(8)
            ]
        for d in directions:
            numeric = _directional(f, leaf, d.astype(leaf.dtype), step)
            exact = float(np.sum(an * d))
            denom = max(abs(numeric), abs(exact), 1e-8)
            worst = max(worst, abs(numeric - exact) / denom)
    return worst
