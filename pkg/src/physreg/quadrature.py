"""Tensor Gauss-Legendre rules on boxes."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["tensor_gauss_legendre", "pairwise_sum"]


@lru_cache(maxsize=64)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def tensor_gauss_legendre(n_per_axis: int, lo, hi, dx: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``(n**dx, dx)`` and weights ``(n**dx,)`` of the product rule on a box.

    ``lo`` and ``hi`` are scalars or length-``dx`` arrays.
    """
    n = int(n_per_axis)
    if n < 1:
        raise ValueError("need at least one node per axis")
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dx,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dx,))
    if np.any(hi <= lo):
        raise ValueError("empty quadrature box")
    x, w = _gl(n)
    axes = [0.5 * (hi[j] - lo[j]) * x + 0.5 * (hi[j] + lo[j]) for j in range(dx)]
    wts = [0.5 * (hi[j] - lo[j]) * w for j in range(dx)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dx)
    weights = wts[0]
    for wj in wts[1:]:
        weights = np.multiply.outer(weights, wj).ravel()
    return grid, np.asarray(weights).ravel()


def pairwise_sum(parts: list[np.ndarray]) -> np.ndarray:
    """Sum arrays in a fixed binary-tree order, independent of how they were produced."""
    if not parts:
        raise ValueError("nothing to sum")
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]
