"""Linear differential operators acting component-wise on Fourier expansions.

``LinearDiffOp`` maps output ``i`` of a function to
``sum_alpha p_{i,alpha}(x) d^alpha f_i(x)``. The penalty ``R(f) = ||D f||^2``
is a quadratic form in the coefficients and is assembled once per truncation
as an :class:`OperatorGram`.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .fourier import FourierCoeffs, design_matrix, frequencies, normalization
from .quadrature import pairwise_sum, tensor_gauss_legendre

__all__ = [
    "LinearDiffOp",
    "Measure",
    "OperatorGram",
    "EllipticityReport",
    "ProperReport",
    "apply_operator",
    "regularizer_value",
    "operator_gram",
    "ellipticity_check",
    "proper_regularizer_probe",
    "parse_expression",
    "operator_from_spec",
]

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]

SYMBOL_TOL = 1e-9


# --------------------------------------------------------------------------
# expression strings


_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class _Expr:
    """Callable compiled from a restricted arithmetic expression in x1..xd."""

    def __init__(self, text: str, dx: int):
        self.text = text
        self.dx = dx
        try:
            self._tree = ast.parse(text, mode="eval").body
        except SyntaxError as exc:
            raise ValueError(f"cannot parse coefficient expression {text!r}") from exc
        self._check(self._tree)

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ValueError(f"unsupported literal in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in _CONSTS and self._var_index(node.id) is None:
                raise ValueError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ValueError(f"unsupported operator in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ValueError(f"unsupported function in {self.text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ValueError(f"functions take one argument in {self.text!r}")
            self._check(node.args[0])
        else:
            raise ValueError(f"unsupported syntax in {self.text!r}")

    def _var_index(self, name: str):
        if name == "x" and self.dx == 1:
            return 0
        if name.startswith("x") and name[1:].isdigit():
            j = int(name[1:]) - 1
            if 0 <= j < self.dx:
                return j
        return None

    def _eval(self, node, x):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            return x[:, self._var_index(node.id)]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        return _FUNCS[node.func.id](self._eval(node.args[0], x))

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.broadcast_to(np.asarray(self._eval(self._tree, x), dtype=float), (len(x),)).copy()

    def __repr__(self):
        return f"expr({self.text!r})"


def parse_expression(text: str, dx: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a coefficient expression.

    Grammar: numbers, the variables ``x1 .. x<dx>`` (``x`` alone when dx = 1),
    the constants ``pi`` and ``e``, the operators ``+ - * / **`` and the
    functions ``sin``, ``cos``, ``tan``.
    """
    return _Expr(text, dx)


# --------------------------------------------------------------------------
# operator


@dataclass(frozen=True)
class LinearDiffOp:
    """Component-wise linear differential operator.

    ``terms[i]`` lists ``(alpha, coeff)`` pairs for output ``i``. ``coeff`` is
    a number or a callable on ``(n, dx)`` point arrays.
    """

    dx: int
    terms: tuple
    order: int

    def __post_init__(self):
        norm_terms = []
        for out_terms in self.terms:
            row = []
            for alpha, coeff in out_terms:
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != self.dx or any(a < 0 for a in alpha):
                    raise ValueError(f"bad multi-index {alpha} for dx={self.dx}")
                if sum(alpha) > self.order:
                    raise ValueError(f"term {alpha} exceeds operator order {self.order}")
                if not callable(coeff):
                    coeff = float(coeff)
                    if not np.isfinite(coeff):
                        raise ValueError("operator coefficients must be finite")
                row.append((alpha, coeff))
            norm_terms.append(tuple(row))
        if not norm_terms:
            raise ValueError("operator needs at least one output")
        object.__setattr__(self, "terms", tuple(norm_terms))

    @property
    def dy(self) -> int:
        return len(self.terms)

    @property
    def constant(self) -> bool:
        return all(not callable(c) for row in self.terms for _, c in row)

    @classmethod
    def identity(cls, dx: int, dy: int = 1) -> "LinearDiffOp":
        return cls(dx, tuple((((0,) * dx, 1.0),) for _ in range(dy)), 0)

    @classmethod
    def laplacian(cls, dx: int, dy: int = 1) -> "LinearDiffOp":
        row = tuple((tuple(2 if j == i else 0 for j in range(dx)), 1.0) for i in range(dx))
        return cls(dx, tuple(row for _ in range(dy)), 2)

    @classmethod
    def partial(cls, alpha: Sequence[int], coeff: Coefficient = 1.0, dy: int = 1) -> "LinearDiffOp":
        alpha = tuple(alpha)
        return cls(len(alpha), tuple(((alpha, coeff),) for _ in range(dy)), sum(alpha))


def operator_from_spec(spec, dx: int, dy: int) -> LinearDiffOp:
    """Build an operator from a config value.

    ``spec`` is ``"identity"``, ``"laplacian"``, or a JSON list of objects
    ``{"output": i, "alpha": [...], "coeff": number-or-expression}`` with
    1-based outputs. Order is the largest ``|alpha|`` present.
    """
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key == "identity":
            return LinearDiffOp.identity(dx, dy)
        if key == "laplacian":
            return LinearDiffOp.laplacian(dx, dy)
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ValueError(f"operator spec is neither a preset nor JSON: {spec!r}") from exc
    if not isinstance(spec, list) or not spec:
        raise ValueError("operator spec must be a nonempty list of terms")
    rows: list[list] = [[] for _ in range(dy)]
    order = 0
    for term in spec:
        try:
            out = int(term["output"]) - 1
            alpha = tuple(int(a) for a in term["alpha"])
            coeff = term.get("coeff", 1.0)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed operator term {term!r}") from exc
        if not 0 <= out < dy:
            raise ValueError(f"operator output {out + 1} outside 1..{dy}")
        if isinstance(coeff, str):
            coeff = parse_expression(coeff, dx)
        rows[out].append((alpha, coeff))
        order = max(order, sum(alpha))
    return LinearDiffOp(dx, tuple(tuple(r) for r in rows), order)


# --------------------------------------------------------------------------
# measures and Gram matrices


@dataclass(frozen=True)
class Measure:
    """Integration measure for the penalty.

    ``kind="lebesgue_cube"`` integrates over the enlarged cube ``[-2L, 2L]^dx``
    (closed form for constant coefficients). ``kind="quadrature"`` uses tensor
    Gauss-Legendre on ``box`` (default ``[-L, L]^dx``), optionally weighted.
    """

    kind: str = "lebesgue_cube"
    box: tuple | None = None
    n_per_axis: int | None = None
    weight: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("lebesgue_cube", "quadrature"):
            raise ValueError(f"unknown measure kind {self.kind!r}")


def _multiplier_matrix(alpha, m: int, dx: int, L: float) -> np.ndarray:
    """Matrix of d^alpha on coefficients, shape (m_out, m).

    ``m_out`` is ``m + 1`` when the truncation ends on a cosine whose sine
    partner receives mass from an odd-order derivative.
    """
    alpha = np.asarray(alpha, dtype=int)
    order = int(alpha.sum())
    p = order % 4
    split = m % 2 == 0 and p % 2 == 1
    m_out = m + 1 if split else m
    K, sine = frequencies(m_out, dx)
    omega = (np.pi / (2.0 * L)) * K
    mult = np.prod(omega ** alpha, axis=1)
    M = np.zeros((m_out, m))
    M[0, 0] = 1.0 if order == 0 else 0.0
    same = (1.0, 0.0, -1.0, 0.0)[p]
    for j in range(1, m):
        if same:
            M[j, j] = same * mult[j]
        if p % 2:
            if sine[j]:
                # sine feeds the cosine below it
                M[j - 1, j] = (1.0 if p == 1 else -1.0) * mult[j]
            else:
                M[j + 1, j] = (-1.0 if p == 1 else 1.0) * mult[j]
    return M


def _constant_matrix(op: LinearDiffOp, i: int, m: int, L: float) -> np.ndarray:
    mats = [c * _multiplier_matrix(alpha, m, op.dx, L) for alpha, c in op.terms[i]]
    if not mats:
        return np.zeros((m, m))
    rows = max(M.shape[0] for M in mats)
    out = np.zeros((rows, m))
    for M in mats:
        out[: M.shape[0]] += M
    return out


def apply_operator(op: LinearDiffOp, f: FourierCoeffs) -> FourierCoeffs:
    """Coefficients of ``D f`` in the same truncated basis (constant coefficients only)."""
    if not op.constant:
        raise NotImplementedError(
            "variable-coefficient operators have no Fourier multiplier; use operator_gram")
    if op.dx != f.dx or op.dy != f.dy:
        raise ValueError("operator and function dimensions differ")
    z = np.zeros_like(f.z)
    for i in range(f.dy):
        M = _constant_matrix(op, i, f.m, f.L)
        out = M @ f.z[i]
        if M.shape[0] > f.m and abs(out[-1]) > 0:
            raise ValueError(
                "truncation splits a cosine/sine pair; use an odd m for odd-order terms")
        z[i] = out[: f.m]
    return FourierCoeffs(z, f.L, f.dx)


@dataclass(frozen=True)
class OperatorGram:
    """Per-output quadratic forms of the penalty: ``R(f) = sum_i z_i' Q_i z_i``."""

    blocks: tuple
    measure: str
    n_nodes: int = 0

    @property
    def dy(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return self.blocks[0].shape[0]

    def full(self) -> np.ndarray:
        """Block-diagonal matrix acting on the output-major stacked coefficients."""
        from scipy.linalg import block_diag

        return block_diag(*self.blocks)

    def quad_form(self, f: FourierCoeffs) -> float:
        return float(sum(zi @ Q @ zi for zi, Q in zip(f.z, self.blocks)))


def _default_nodes(m: int, dx: int) -> int:
    return int(math.ceil(4 * m ** (1.0 / dx)))


def _min_nodes(m: int, dx: int) -> int:
    return int(math.ceil((4 * m) ** (1.0 / dx) - 1e-12))


def _quadrature_setup(measure: Measure, m: int, dx: int, L: float):
    n = measure.n_per_axis or _default_nodes(m, dx)
    if n < _min_nodes(m, dx):
        raise ValueError(
            f"{n} nodes per axis is too few for m={m}; need at least {_min_nodes(m, dx)}")
    if measure.kind == "lebesgue_cube":
        lo, hi = -2.0 * L, 2.0 * L
    else:
        lo, hi = measure.box if measure.box is not None else (-L, L)
    nodes, w = tensor_gauss_legendre(n, lo, hi, dx)
    if measure.weight is not None:
        w = w * np.asarray(measure.weight(nodes), dtype=float)
    return nodes, w


def _applied_design(op: LinearDiffOp, i: int, nodes: np.ndarray, m: int, L: float) -> np.ndarray:
    A = np.zeros((len(nodes), m))
    for alpha, c in op.terms[i]:
        coeff = c(nodes)[:, None] if callable(c) else c
        A += coeff * design_matrix(nodes, m, L, alpha=alpha, check_domain=False)
    return A


_CHUNK = 4096


def operator_gram(op: LinearDiffOp, m: int, L: float, measure: Measure | None = None) -> OperatorGram:
    """Assemble the penalty's quadratic form on the first ``m`` basis functions."""
    measure = measure or Measure()
    if measure.kind == "lebesgue_cube" and op.constant and measure.weight is None:
        N = normalization(m + 1, op.dx, L)
        blocks = []
        for i in range(op.dy):
            M = _constant_matrix(op, i, m, L)
            Q = M.T @ (N[: M.shape[0], None] * M)
            blocks.append(0.5 * (Q + Q.T))
        return OperatorGram(tuple(blocks), "lebesgue_cube")
    nodes, w = _quadrature_setup(measure, m, op.dx, L)
    blocks = []
    for i in range(op.dy):
        parts = []
        for a in range(0, len(nodes), _CHUNK):
            A = _applied_design(op, i, nodes[a:a + _CHUNK], m, L)
            parts.append(A.T @ (w[a:a + _CHUNK, None] * A))
        Q = pairwise_sum(parts)
        blocks.append(0.5 * (Q + Q.T))
    return OperatorGram(tuple(blocks), measure.kind, len(nodes))


def regularizer_value(op: LinearDiffOp, f: FourierCoeffs, measure: Measure | None = None) -> float:
    """``||D f||^2`` under ``measure``."""
    measure = measure or Measure()
    if op.dx != f.dx or op.dy != f.dy:
        raise ValueError("operator and function dimensions differ")
    if measure.kind == "lebesgue_cube" and op.constant and measure.weight is None:
        N = normalization(f.m + 1, f.dx, f.L)
        total = 0.0
        for i in range(f.dy):
            g = _constant_matrix(op, i, f.m, f.L) @ f.z[i]
            total += float(np.sum(N[: len(g)] * g ** 2))
        return total
    nodes, w = _quadrature_setup(measure, f.m, f.dx, f.L)
    total = 0.0
    for i in range(f.dy):
        g = _applied_design(op, i, nodes, f.m, f.L) @ f.z[i]
        total += float(np.sum(w * g ** 2))
    return total


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class EllipticityReport:
    elliptic: bool
    min_abs_symbol: float


def _probe_directions(dx: int, n: int, rng: np.random.Generator) -> np.ndarray:
    fixed = [np.eye(dx)]
    if dx > 1:
        diag = np.array(list(np.ndindex(*(2,) * dx)), dtype=float) * 2 - 1
        fixed.append(diag / np.sqrt(dx))
    rand = rng.standard_normal((n, dx))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.vstack(fixed + [rand])


def ellipticity_check(op: LinearDiffOp, n_directions: int = 256, seed=0,
                      L: float = 1.0) -> EllipticityReport:
    """Sample the top-order symbol on unit directions (and points, for variable coefficients)."""
    if n_directions < 1:
        raise ValueError("n_directions must be positive")
    rng = np.random.default_rng(seed)
    xi = _probe_directions(op.dx, n_directions, rng)
    if op.constant:
        pts = np.zeros((1, op.dx))
    else:
        # odd grid hits the center and the faces, where coefficients often vanish
        g = max(3, int(round(64 ** (1.0 / op.dx))) | 1)
        axis = np.linspace(-L, L, g)
        grid = np.stack(np.meshgrid(*(axis,) * op.dx, indexing="ij"), -1).reshape(-1, op.dx)
        pts = np.vstack([grid, rng.uniform(-L, L, size=(n_directions, op.dx))])
    worst = math.inf
    for row in op.terms:
        top = [(a, c) for a, c in row if sum(a) == op.order]
        if not top:
            return EllipticityReport(False, 0.0)
        sym = np.zeros((len(xi), len(pts)))
        for alpha, c in top:
            mono = np.prod(xi ** np.asarray(alpha), axis=1)
            cv = c(pts) if callable(c) else np.full(len(pts), c)
            sym += np.outer(mono, cv)
        worst = min(worst, float(np.min(np.abs(sym))))
    return EllipticityReport(worst > SYMBOL_TOL, worst)


@dataclass(frozen=True)
class ProperReport:
    triangle_ok: bool
    scaling_ok: bool
    even_ok: bool
    zero_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.triangle_ok and self.scaling_ok and self.even_ok and self.zero_ok


def proper_regularizer_probe(op: LinearDiffOp, f: FourierCoeffs, h: FourierCoeffs, a: float,
                             measure: Measure | None = None, slack: float = 1e-10) -> ProperReport:
    """Check the four defining properties of a 2-proper penalty at ``(f, h, a)``."""
    if not 0.0 <= a <= 1.0:
        raise ValueError("a must lie in [0, 1]")
    R = lambda g: regularizer_value(op, g, measure)  # noqa: E731
    rf, rh = R(f), R(h)
    tol = slack * max(1.0, rf + rh)
    return ProperReport(
        triangle_ok=R(f + h) <= 2.0 * (rf + rh) + tol,
        scaling_ok=R(a * f) <= a * a * rf + tol,
        even_ok=abs(R(-f) - rf) <= tol,
        zero_ok=R(0.0 * f) <= tol,
    )
