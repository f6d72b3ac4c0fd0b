"""Truncated real trigonometric basis on the cube [-L, L]^dx.

Basis functions have period 4L in every coordinate, so they are orthogonal
on the enlarged cube [-2L, 2L]^dx. Frequencies are enumerated in shells of
constant sup-norm; inside a shell, representatives with a positive leading
nonzero entry are taken in lexicographic order and each is followed by its
negation. A representative ``k`` yields ``cos(pi <k, x> / (2L))`` and its
negation yields ``sin(pi <k, x> / (2L))``.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .quadrature import tensor_gauss_legendre

__all__ = [
    "FourierCoeffs",
    "frequency_index",
    "index_of",
    "frequencies",
    "basis_eval",
    "design_matrix",
    "normalization",
    "sobolev_weights",
    "sobolev_norm_sq",
    "l2_norm_sq_lebesgue",
    "l2_norm_sq_trajectory",
    "project_function",
    "save_coeffs",
    "load_coeffs",
]


# --------------------------------------------------------------------------
# index map


def _shell_start(n: int, dx: int) -> int:
    """Number of frequencies with sup-norm strictly below ``n``."""
    return 0 if n == 0 else (2 * n - 1) ** dx


@lru_cache(maxsize=256)
def _shell_reps(n: int, dx: int) -> tuple[tuple[int, ...], ...]:
    # itertools.product over an ascending range is already lexicographic
    reps = []
    for k in itertools.product(range(-n, n + 1), repeat=dx):
        if max(abs(c) for c in k) != n:
            continue
        lead = next(c for c in k if c != 0)
        if lead > 0:
            reps.append(k)
    return tuple(reps)


def frequency_index(ell: int, dx: int) -> np.ndarray:
    """Return the integer frequency vector of the ``ell``-th basis function (1-based)."""
    ell = int(ell)
    dx = int(dx)
    if ell < 1 or dx < 1:
        raise ValueError("ell and dx must be positive")
    if ell == 1:
        return np.zeros(dx, dtype=int)
    n = 1
    while (2 * n + 1) ** dx < ell:
        n += 1
    pos = ell - _shell_start(n, dx) - 1
    rep = np.array(_shell_reps(n, dx)[pos // 2], dtype=int)
    return rep if pos % 2 == 0 else -rep


def index_of(k) -> int:
    """Inverse of :func:`frequency_index`."""
    k = tuple(int(c) for c in np.atleast_1d(k))
    dx = len(k)
    n = max(abs(c) for c in k)
    if n == 0:
        return 1
    lead = next(c for c in k if c != 0)
    rep = k if lead > 0 else tuple(-c for c in k)
    reps = _shell_reps(n, dx)
    p = bisect.bisect_left(reps, rep)
    return _shell_start(n, dx) + 2 * p + (0 if lead > 0 else 1) + 1


@lru_cache(maxsize=128)
def _frequency_table(m: int, dx: int) -> tuple[np.ndarray, np.ndarray]:
    ks = np.zeros((m, dx), dtype=int)
    sine = np.zeros(m, dtype=bool)
    ell = 1
    n = 0
    while ell < m:
        n += 1
        for rep in _shell_reps(n, dx):
            for sign in (0, 1):
                if ell >= m:
                    break
                # stored frequency is the positive representative for both members
                ks[ell] = rep
                sine[ell] = bool(sign)
                ell += 1
    ks.setflags(write=False)
    sine.setflags(write=False)
    return ks, sine


def frequencies(m: int, dx: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive representatives and sine flags for the first ``m`` basis functions.

    Returns ``(K, is_sine)`` with ``K`` of shape ``(m, dx)``. Row ``j`` of ``K``
    is the representative whose cosine (``is_sine[j]`` false) or sine is the
    ``j+1``-th basis function.
    """
    if m < 1 or dx < 1:
        raise ValueError("m and dx must be positive")
    return _frequency_table(int(m), int(dx))


# --------------------------------------------------------------------------
# evaluation


def _as_points(x, dx: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if dx == 1 else x.reshape(1, -1)
    if x.shape[1] != dx:
        raise ValueError(f"expected points with {dx} coordinates, got shape {x.shape}")
    return x


def _check_cube(x: np.ndarray, L: float) -> None:
    if np.any(np.abs(x) > L * (1 + 1e-12)):
        raise ValueError(f"points outside the cube [-{L}, {L}]^dx")


def design_matrix(x, m: int, L: float, alpha=None, check_domain: bool = True) -> np.ndarray:
    """Evaluate the first ``m`` basis functions (or their ``alpha`` derivative) at points ``x``.

    Parameters
    ----------
    x : array_like, shape (n, dx)
        Evaluation points.
    m : int
        Truncation.
    L : float
        Cube half-width.
    alpha : sequence of int, optional
        Multi-index of the partial derivative; ``None`` means no derivative.
    check_domain : bool
        Reject points outside ``[-L, L]^dx``. Quadrature on the enlarged cube
        switches this off.

    Returns
    -------
    ndarray, shape (n, m)
    """
    if L <= 0:
        raise ValueError("L must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        dx = x.shape[1]
    else:
        dx = len(alpha) if alpha is not None else 1
    x = _as_points(x, dx)
    if alpha is not None and len(alpha) != dx:
        raise ValueError("multi-index length does not match the input dimension")
    if check_domain:
        _check_cube(x, L)
    K, sine = frequencies(m, dx)
    omega = (np.pi / (2.0 * L)) * K
    phase = x @ omega.T
    if alpha is None or not any(alpha):
        out = np.empty_like(phase)
        out[:, ~sine] = np.cos(phase[:, ~sine])
        out[:, sine] = np.sin(phase[:, sine])
        return out
    alpha = np.asarray(alpha, dtype=int)
    if np.any(alpha < 0):
        raise ValueError("multi-index entries must be nonnegative")
    mult = np.prod(omega ** alpha, axis=1)
    p = int(alpha.sum()) % 4
    c, s = np.cos(phase), np.sin(phase)
    # d^p/dt^p of cos and sin, indexed by p mod 4
    cos_der = (c, -s, -c, s)[p]
    sin_der = (s, c, -s, -c)[p]
    out = np.where(sine, sin_der, cos_der)
    return out * mult


def basis_eval(ell: int, x, L: float) -> np.ndarray | float:
    """Value of the ``ell``-th basis function at ``x`` (one point or a batch)."""
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim <= 1
    dx = 1 if x_arr.ndim == 0 else x_arr.shape[-1]
    pts = _as_points(x_arr, dx)
    _check_cube(pts, L)
    k = frequency_index(ell, dx)
    if ell == 1:
        vals = np.ones(len(pts))
    else:
        lead = k[np.nonzero(k)[0][0]]
        phase = (np.pi / (2.0 * L)) * pts @ (k if lead > 0 else -k)
        vals = np.cos(phase) if lead > 0 else np.sin(phase)
    return float(vals[0]) if scalar else vals


# --------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class FourierCoeffs:
    """Coefficients of a vector-valued function in the truncated basis.

    ``z`` has shape ``(dy, m)``; row ``i`` holds output ``i``.
    """

    z: np.ndarray
    L: float
    dx: int

    def __post_init__(self):
        z = np.array(self.z, dtype=float, copy=True)
        if z.ndim == 1:
            z = z.reshape(1, -1)
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
            raise ValueError("z must be a nonempty dy x m matrix")
        if not np.all(np.isfinite(z)):
            raise ValueError("coefficients must be finite")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if int(self.dx) < 1:
            raise ValueError("dx must be positive")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "dx", int(self.dx))

    @property
    def dy(self) -> int:
        return self.z.shape[0]

    @property
    def m(self) -> int:
        return self.z.shape[1]

    @classmethod
    def zeros(cls, dy: int, m: int, L: float, dx: int) -> "FourierCoeffs":
        return cls(np.zeros((dy, m)), L, dx)

    @classmethod
    def unit(cls, ell: int, m: int, L: float, dx: int, dy: int = 1, output: int = 0) -> "FourierCoeffs":
        z = np.zeros((dy, m))
        z[output, ell - 1] = 1.0
        return cls(z, L, dx)

    def evaluate(self, x, check_domain: bool = True) -> np.ndarray:
        """Function values at points ``x``, shape ``(n, dy)``."""
        return design_matrix(_as_points(x, self.dx), self.m, self.L,
                             check_domain=check_domain) @ self.z.T

    __call__ = evaluate

    def _compatible(self, other: "FourierCoeffs") -> None:
        if (self.z.shape, self.L, self.dx) != (other.z.shape, other.L, other.dx):
            raise ValueError("incompatible coefficient sets")

    def __add__(self, other):
        self._compatible(other)
        return FourierCoeffs(self.z + other.z, self.L, self.dx)

    def __sub__(self, other):
        self._compatible(other)
        return FourierCoeffs(self.z - other.z, self.L, self.dx)

    def __mul__(self, a):
        return FourierCoeffs(float(a) * self.z, self.L, self.dx)

    __rmul__ = __mul__

    def __neg__(self):
        return FourierCoeffs(-self.z, self.L, self.dx)


def normalization(m: int, dx: int, L: float) -> np.ndarray:
    """Squared Lebesgue norms of the basis functions over [-2L, 2L]^dx."""
    vol = (4.0 * L) ** dx
    out = np.full(m, vol / 2.0)
    out[0] = vol
    return out


def sobolev_weights(m: int, s: float, dx: int) -> np.ndarray:
    return np.arange(1, m + 1, dtype=float) ** (2.0 * s / dx)


def sobolev_norm_sq(f: FourierCoeffs, s: int) -> float:
    """Weighted coefficient norm with weight ell^(2s/dx)."""
    if s < 2 * f.dx:
        warnings.warn(f"smoothness s={s} is below 2*dx={2 * f.dx}", stacklevel=2)
    return float(np.sum(f.z ** 2 * sobolev_weights(f.m, s, f.dx)))


def l2_norm_sq_lebesgue(f: FourierCoeffs) -> float:
    """Lebesgue L2 norm squared over the enlarged cube, by Parseval."""
    return float(np.sum(f.z ** 2 * normalization(f.m, f.dx, f.L)))


def l2_norm_sq_trajectory(f: FourierCoeffs, g: FourierCoeffs, trajectories) -> float:
    """Monte Carlo trajectory norm of ``f - g``.

    ``trajectories`` is a sequence of arrays of shape ``(T, dx)``, all of the
    same length.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories supplied")
    diff = f - g
    lengths = {len(np.asarray(tr)) for tr in trajectories}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError("trajectories must share one positive length")
    per = [np.mean(np.sum(diff.evaluate(tr) ** 2, axis=1)) for tr in trajectories]
    return float(np.mean(per))


def project_function(target: Callable, m: int, L: float, dx: int,
                     n_per_axis: int | None = None, box=None) -> FourierCoeffs:
    """Least-squares projection of ``target`` onto the first ``m`` basis functions.

    The inner product is tensor Gauss-Legendre quadrature over ``box``
    (default: the cube ``[-L, L]^dx``). ``target`` maps an ``(n, dx)`` array to
    ``(n,)`` or ``(n, dy)`` values.
    """
    if n_per_axis is None:
        n_per_axis = int(np.ceil(4 * m ** (1.0 / dx)))
    lo, hi = (-L, L) if box is None else box
    nodes, w = tensor_gauss_legendre(n_per_axis, lo, hi, dx)
    if len(nodes) < m:
        raise ValueError(f"{len(nodes)} quadrature nodes cannot resolve {m} basis functions")
    vals = np.asarray(target(nodes), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    Phi = design_matrix(nodes, m, L, check_domain=False)
    sw = np.sqrt(w)[:, None]
    A = sw * Phi
    z, _, rank, sv = np.linalg.lstsq(A, sw * vals, rcond=None)
    if rank < m or sv[-1] < 1e-13 * sv[0]:
        raise ValueError("quadrature Gram is singular; increase nodes or reduce m")
    return FourierCoeffs(z.T, L, dx)


# --------------------------------------------------------------------------
# CSV


def save_coeffs(f: FourierCoeffs, path) -> None:
    """Write ``f`` as CSV: a ``dy,m,dx,L`` row, then one row of ``m`` coefficients per output."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.dy, f.m, f.dx, f"{f.L:.17g}"])
        for row in f.z:
            w.writerow([f"{v:.17g}" for v in row])


def load_coeffs(path) -> FourierCoeffs:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty coefficient file")
    try:
        dy, m, dx = (int(v) for v in rows[0][:3])
        L = float(rows[0][3])
        z = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed coefficient file") from exc
    if z.shape != (dy, m):
        raise ValueError(f"{path}: expected {dy}x{m} coefficients, found {z.shape}")
    return FourierCoeffs(z, L, dx)
