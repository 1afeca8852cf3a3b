"""Brute-force references: exhaustive lattice profile search and refinement quadrature.

Nothing here calls the closed-form moment machinery of :mod:`nlphase.kernel`;
kernels enter only through their radial densities.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .kernel import KernelSpec, _breakpoints, radial_profile, sphere_area
from .potential import Potential1D
from .profile1d import MonotoneProfile, _as_line, _cell_model


class OracleError(RuntimeError):
    pass


class BudgetExceeded(OracleError):
    def __init__(self, count: int, budget: int):
        super().__init__(f"search space of {count} lattice profiles exceeds the budget of {budget}")
        self.count = count
        self.budget = budget


# ---------------------------------------------------------------------------
# Exhaustive lattice search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TinyInstance:
    """``n_nodes`` grid nodes on ``[-R, R]`` and ``n_levels`` equispaced values in ``[a, b]``."""

    kernel: object
    potential: Potential1D
    R: float = 2.0
    n_nodes: int = 12
    n_levels: int = 9
    levels: Optional[tuple] = None

    def __post_init__(self) -> None:
        if not 2 <= self.n_nodes <= 24:
            raise OracleError("tiny instances have between 2 and 24 nodes")
        if not 2 <= self.n_levels <= 17:
            raise OracleError("tiny instances have between 2 and 17 levels")

    @property
    def a(self) -> float:
        return float(self.potential.a)

    @property
    def b(self) -> float:
        return float(self.potential.b)

    @property
    def dt(self) -> float:
        return 2.0 * self.R / (self.n_nodes - 1)

    @property
    def value_levels(self) -> np.ndarray:
        if self.levels is not None:
            return np.asarray(self.levels, dtype=float)
        return np.linspace(self.a, self.b, self.n_levels)

    def search_size(self) -> int:
        L = self.value_levels.size
        return math.comb(self.n_nodes + L - 1, L - 1)


@dataclass
class BruteResult:
    profile: MonotoneProfile
    energy: float
    searched: int


DEFAULT_BUDGET = 10 ** 8


def brute_profile(inst: TinyInstance, budget: int = DEFAULT_BUDGET, chunk: int = 1 << 16) -> BruteResult:
    """Global minimizer over nondecreasing lattice profiles with tails at the wells.

    Sequences are enumerated in lexicographic order; ties keep the first.
    """
    count = inst.search_size()
    if count > budget:
        raise BudgetExceeded(count, budget)
    lv = inst.value_levels
    n = inst.n_nodes
    model = _cell_model(_as_line(inst.kernel), inst.dt, n, inst.a, inst.b)
    w_level = inst.dt * np.asarray(inst.potential.W(lv), dtype=float)
    P = model.P
    # per-level one-body terms: tail interactions and the potential
    tails = 0.5 * (model.left[None, :] * (lv[:, None] - inst.a) ** 2
                   + model.right[None, :] * (lv[:, None] - inst.b) ** 2)
    const = 0.5 * model.k_far * (inst.b - inst.a) ** 2
    best_e, best_idx = math.inf, None
    it = itertools.combinations_with_replacement(range(lv.size), n)
    cols = np.arange(n)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        idx = block.reshape(-1, n)
        g = lv[idx]
        one = tails[idx, cols].sum(axis=1) + w_level[idx].sum(axis=1)
        # 1/4 sum_ij P_ij (g_i - g_j)^2 = 1/2 (sum_i g_i^2 rowsum_i - g^T P g)
        gP = g @ P
        quad = 0.5 * (np.sum(g * g * P.sum(axis=1)[None, :], axis=1) - np.sum(gP * g, axis=1))
        e = quad + one + const
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e, best_idx = float(e[k]), idx[k].copy()
    prof = MonotoneProfile(lv[best_idx], -inst.R, inst.dt, inst.a, inst.b)
    return BruteResult(prof, best_e, count)


# ---------------------------------------------------------------------------
# Refinement quadrature
# ---------------------------------------------------------------------------


@dataclass
class QuadratureResult:
    value: float
    error: float
    trapezoid: float
    midpoint: float
    levels: int
    trapezoid_error: float = 0.0
    midpoint_error: float = 0.0
    history: list = field(default_factory=list)

    @property
    def ladders_agree(self) -> bool:
        """Both ladders agree within their combined estimates (plus a rounding floor)."""
        slack = self.trapezoid_error + self.midpoint_error + 1e-14 * max(abs(self.value), 1.0)
        return abs(self.trapezoid - self.midpoint) <= slack


def _richardson(seq: list[float]) -> list[list[float]]:
    """Romberg table for sums with an even power expansion in the step."""
    table = [[s] for s in seq]
    for i in range(1, len(seq)):
        for j in range(1, i + 1):
            f = 4.0 ** j
            table[i].append((f * table[i][j - 1] - table[i - 1][j - 1]) / (f - 1.0))
    return table


def _rule_1d(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n: int, kind: str) -> float:
    h = (hi - lo) / n
    if kind == "trapezoid":
        x = lo + h * np.arange(n + 1)
        y = f(x)
        return h * (float(np.sum(y)) - 0.5 * float(y[0] + y[-1]))
    x = lo + h * (np.arange(n) + 0.5)
    return h * float(np.sum(f(x)))


def _rule_2d(f: Callable[[np.ndarray, np.ndarray], np.ndarray], box, n: int, kind: str) -> float:
    (x0, x1), (y0, y1) = box
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    if kind == "trapezoid":
        w = np.ones(n + 1)
        w[0] = w[-1] = 0.5
        x = x0 + hx * np.arange(n + 1)
        y = y0 + hy * np.arange(n + 1)
    else:
        w = np.ones(n)
        x = x0 + hx * (np.arange(n) + 0.5)
        y = y0 + hy * (np.arange(n) + 0.5)
    total = 0.0
    for i0 in range(0, x.size, 256):
        xs = x[i0:i0 + 256]
        vals = f(xs[:, None], y[None, :])
        total += float(w[i0:i0 + 256] @ vals @ w)
    return hx * hy * total


def _ladder(rule: Callable[[int, str], float], start: int, levels: int, tol: float) -> QuadratureResult:
    trap, mid = [], []
    n = start
    for _ in range(levels):
        trap.append(rule(n, "trapezoid"))
        mid.append(rule(n, "midpoint"))
        n *= 2
    rt, rm = _richardson(trap), _richardson(mid)
    vt, vm = rt[-1][-1], rm[-1][-1]
    err_t = abs(rt[-1][-1] - rt[-1][-2]) if levels > 1 else math.inf
    err_m = abs(rm[-1][-1] - rm[-1][-2]) if levels > 1 else math.inf
    err = max(err_t, err_m)
    scale = max(abs(vt), 1.0)
    if not math.isfinite(vt) or err > tol * scale:
        raise OracleError(f"refinement did not converge: estimate {err:.3g} after {levels} levels")
    return QuadratureResult(vt, err, vt, vm, levels, err_t, err_m, [row[-1] for row in rt])


def _reach(spec: KernelSpec, rel: float = 1e-22) -> float:
    """Radius beyond which the radial density times r^3 is negligible."""
    r = max(1.0, *(_breakpoints(spec) or [1.0])) * spec.scale
    peak = float(radial_profile(spec, r))
    while float(radial_profile(spec, r)) * r ** 3 > rel * max(peak, 1e-300):
        r *= 1.5
    return r


def _line_density(spec: KernelSpec) -> Callable[[np.ndarray], np.ndarray]:
    if spec.dim != 1:
        raise OracleError("this expression needs a kernel on the line")
    return lambda x: radial_profile(spec, x)


def _singular_split(spec: KernelSpec) -> float:
    return float(spec.rho * spec.scale) if spec.family == "fractional" else 0.0


def _first_moment(spec: KernelSpec, levels: int, tol: float) -> QuadratureResult:
    """``int J(h) |h| dh`` in dimension ``m`` via the radial integral."""
    m = spec.dim
    L = _reach(spec)
    area = sphere_area(m - 1)
    g = lambda r: radial_profile(spec, r) * r ** m
    cut = _singular_split(spec)
    if cut > 0:
        # r = cut * x^q removes the r^(-eta) endpoint singularity for q = 1/(1-eta)
        q = 1.0 / (1.0 - spec.eta)
        inner = lambda x: g(cut * np.maximum(x, 1e-12) ** q) * cut * q * np.maximum(x, 1e-12) ** (q - 1.0)
        a = _ladder(lambda n, k: _rule_1d(inner, 0.0, 1.0, n, k), 16, levels, tol)
        b = _ladder(lambda n, k: _rule_1d(g, cut, L, n, k), 64, levels, tol)
        return _combine([a, b], area)
    edges = [0.0] + [p for p in _breakpoints(spec) if p < L] + [L]
    parts = [_ladder(lambda n, k, lo=lo, hi=hi: _rule_1d(g, lo, hi, n, k), 64, levels, tol)
             for lo, hi in zip(edges[:-1], edges[1:])]
    return _combine(parts, area)


def _combine(parts: list[QuadratureResult], factor: float = 1.0) -> QuadratureResult:
    return QuadratureResult(factor * sum(p.value for p in parts), factor * sum(p.error for p in parts),
                            factor * sum(p.trapezoid for p in parts), factor * sum(p.midpoint for p in parts),
                            max(p.levels for p in parts), factor * sum(p.trapezoid_error for p in parts),
                            factor * sum(p.midpoint_error for p in parts))


def _tail_oracle(spec: KernelSpec, power: int = 0, n: int = 1024) -> Callable[[np.ndarray], np.ndarray]:
    """``u -> int_u^L (s-u)^power / power! J(s) ds`` by a fixed fine Romberg rule."""
    J = _line_density(spec)
    L = _reach(spec)

    def tail(u):
        u = np.asarray(u, dtype=float)
        flat = np.minimum(u.ravel(), L)
        out = np.empty(flat.size)
        for i0 in range(0, flat.size, 1024):
            lo = flat[i0:i0 + 1024]
            width = L - lo
            vals = []
            for m in (n // 4, n // 2, n):
                w = np.linspace(0.0, 1.0, m + 1)
                s = lo[:, None] + width[:, None] * w[None, :]
                y = J(s) * (s - lo[:, None]) ** power / math.factorial(power)
                vals.append(width * (y.sum(axis=1) - 0.5 * (y[:, 0] + y[:, -1])) / m)
            out[i0:i0 + 1024] = _richardson(vals)[-1][-1]
        return out.reshape(u.shape)
    return tail


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def _expr_first_moment(params, levels, tol):
    return _first_moment(params["kernel"], levels, tol)


def _expr_tail_mass(params, levels, tol):
    spec, u = params["kernel"], float(params.get("u", 0.0))
    J = _line_density(spec)
    L = _reach(spec)
    if u < 0:
        raise OracleError("tail mass is registered for nonnegative arguments")
    return _half_line(spec, J, u, L, levels, tol, order=0)


def _expr_moment(params, levels, tol):
    spec, u, p = params["kernel"], float(params.get("u", 0.0)), int(params.get("order", 1))
    J = _line_density(spec)
    L = _reach(spec)
    f = lambda s: J(s) * np.maximum(s - u, 0.0) ** p / math.factorial(p)
    return _half_line(spec, f, u, L, levels, tol, order=p)


def _half_line(spec: KernelSpec, f, u: float, L: float, levels: int, tol: float, order: int) -> QuadratureResult:
    """``int_u^L f``, with the origin singularity of fractional kernels mapped away."""
    cut = _singular_split(spec)
    if cut <= u:
        return _ladder(lambda n, k: _rule_1d(f, u, L, n, k), 64, levels, tol)
    if u == 0.0 and order - 1 - spec.eta <= -1:
        raise OracleError("the integral diverges at the origin for this singular kernel")
    if u == 0.0:
        # s = cut x^q flattens the s^(order-1-eta) endpoint behaviour
        q = 1.0 / (1.0 - spec.eta)
        inner = lambda x: f(cut * np.maximum(x, 1e-12) ** q) * cut * q * np.maximum(x, 1e-12) ** (q - 1.0)
    else:
        # geometric map for the steep but smooth stretch [u, cut]
        span = math.log(cut / u)
        inner = lambda x: f(u * np.exp(span * x)) * u * np.exp(span * x) * span
    a = _ladder(lambda n, k: _rule_1d(inner, 0.0, 1.0, n, k), 16, levels, tol)
    b = _ladder(lambda n, k: _rule_1d(f, cut, L, n, k), 64, levels, tol)
    return _combine([a, b])


def _expr_directional(params, levels, tol):
    """``J^xi(s) = int_{xi-perp} J(s xi + y) dy`` for radial kernels on the plane."""
    spec, s = params["kernel"], abs(float(params["s"]))
    if spec.dim != 2:
        raise OracleError("the directional slice is registered for planar kernels")
    L = _reach(spec)
    f = lambda y: 2.0 * radial_profile(spec, np.hypot(s, y))
    cuts = [math.sqrt(r * r - s * s) for r in _breakpoints(spec) if r > s]
    edges = [0.0] + [c for c in cuts if c < L] + [L]
    return _combine([_ladder(lambda n, k, lo=lo, hi=hi: _rule_1d(f, lo, hi, n, k), 64, levels, tol)
                     for lo, hi in zip(edges[:-1], edges[1:])])


def _expr_hat_mass(params, levels, tol):
    """``||Jhat||_1 = |S| int_0^L int_rho^L j(s) s^(m-1) ds d rho`` on the triangle, mapped to a square."""
    spec = params["kernel"]
    if spec.singular:
        raise OracleError("hat mass is registered for integrable kernels")
    m = spec.dim
    L = _reach(spec)

    def f(rho, w):
        s = rho + (L - rho) * w
        return radial_profile(spec, s) * s ** (m - 1) * (L - rho)

    res = _ladder(lambda n, k: _rule_2d(f, ((0.0, L), (0.0, 1.0)), n, k), 32, levels, tol)
    return _combine([res], sphere_area(m - 1))


def _expr_H(params, levels, tol):
    """``iint_{a<t'<s<t<b} T(v(t) - v(t')) dt dt'`` for an inverse profile callback ``v``."""
    spec = params["kernel"]
    a, b, s = float(params.get("a", -1.0)), float(params.get("b", 1.0)), float(params["s"])
    v = params.get("v", lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    T = _tail_oracle(spec, 0)

    def f(tp, t):
        d = v(t) - v(tp)
        return T(d)

    return _ladder(lambda n, k: _rule_2d(f, ((a, s), (s, b)), n, k), 8, levels, tol)


def _expr_energy(params, levels, tol):
    """``1/4 iint J(h) (g(t+h) - g(t))^2 dh dt + int W(g(t)) dt`` on a window."""
    spec, W, g = params["kernel"], params["potential"], params["profile"]
    window = float(params.get("window", 8.0))
    J = _line_density(spec)
    L = min(_reach(spec), 4.0 * window)

    def f(t, h):
        return 0.25 * J(h) * (g(t + h) - g(t)) ** 2

    nl = _ladder(lambda n, k: _rule_2d(f, ((-window, window), (-L, L)), n, k), 32, levels, tol)
    pot = _ladder(lambda n, k: _rule_1d(lambda t: W.W(g(t)), -window, window, n, k), 64, levels, tol)
    return _combine([nl, pot])


REGISTRY: dict[str, Callable] = {
    "first_moment": _expr_first_moment,
    "tail_mass": _expr_tail_mass,
    "moment": _expr_moment,
    "directional": _expr_directional,
    "hat_mass": _expr_hat_mass,
    "H": _expr_H,
    "energy": _expr_energy,
}


_DEFAULT_LEVELS = {"H": 5, "energy": 5, "hat_mass": 6}


def reference_quadrature(expr: str, params: dict, refinement: Optional[int] = None,
                         tol: float = 1e-8) -> QuadratureResult:
    """Richardson-extrapolated trapezoid and midpoint ladders for a registered expression.

    ``refinement`` is the number of halvings in each ladder.
    """
    if expr not in REGISTRY:
        raise OracleError(f"unknown expression {expr!r}; registered: {sorted(REGISTRY)}")
    if refinement is None:
        refinement = _DEFAULT_LEVELS.get(expr, 7)
    if refinement < 2:
        raise OracleError("at least two refinement levels are needed for an error estimate")
    return REGISTRY[expr](params, refinement, tol)


__all__ = ["OracleError", "BudgetExceeded", "TinyInstance", "BruteResult", "brute_profile",
           "QuadratureResult", "reference_quadrature", "REGISTRY", "DEFAULT_BUDGET"]
