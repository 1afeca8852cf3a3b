"""Space-dependent double-well potentials with moving wells.

A :class:`PotentialSpec` couples a :class:`WellPair` ``x -> (z1(x), z2(x))``
with a shape ``W(x, t)`` and its derivatives in ``t``. Freezing ``x`` gives a
:class:`Potential1D`, the object used by the one-dimensional solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "PotentialError",
    "QNonInvertibleError",
    "SlabTooWideError",
    "FlatProfileError",
    "WellPair",
    "PotentialSpec",
    "Potential1D",
    "QuarticPotential1D",
    "TabulatedPotential1D",
    "AssumptionReport",
    "SlabPotential",
    "constant_wells",
    "affine_wells",
    "holder_wells",
    "make_quartic_moving",
    "quartic_1d",
    "validate_assumptions",
    "q_map",
    "p_inverse",
    "transition_map",
    "slab_potential",
    "manufacture_potential",
]


class PotentialError(ValueError):
    pass


class QNonInvertibleError(PotentialError):
    """``Q = dW/dt + t`` decreases somewhere between the wells."""

    def __init__(self, msg: str, interval: tuple[float, float]):
        super().__init__(f"Q-noninvertible: {msg} on [{interval[0]:.6g}, {interval[1]:.6g}]")
        self.interval = interval


class SlabTooWideError(PotentialError):
    pass


class FlatProfileError(PotentialError):
    pass


def _point(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# Wells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WellPair:
    """Two well callbacks on R^m with their declared Hoelder data.

    The callbacks take points of shape ``(..., m)`` and return arrays of shape ``(...)``.
    """

    z1: Callable[[np.ndarray], np.ndarray]
    z2: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    alpha: float = 1.0
    holder_constants: tuple[float, float] = (0.0, 0.0)
    name: str = "wells"
    params: dict = field(default_factory=dict, compare=False, hash=False)

    def at(self, x) -> tuple[float, float]:
        x = _point(x)
        return float(self.z1(x)), float(self.z2(x))

    def values(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=float)
        return np.asarray(self.z1(pts), dtype=float), np.asarray(self.z2(pts), dtype=float)

    def holder_quotient(self, pts: np.ndarray) -> float:
        """Largest sampled quotient ``|z_i(x)-z_i(x')| / |x-x'|^alpha``."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        z1, z2 = self.values(pts)
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        off = d > 0
        q = 0.0
        for z in (z1, z2):
            dz = np.abs(z[:, None] - z[None, :])
            q = max(q, float(np.max(dz[off] / d[off] ** self.alpha)))
        return q


def constant_wells(a: float = -1.0, b: float = 1.0, dim: int = 1) -> WellPair:
    return WellPair(lambda x: np.full(np.shape(x)[:-1], float(a)),
                    lambda x: np.full(np.shape(x)[:-1], float(b)),
                    dim=dim, alpha=1.0, holder_constants=(0.0, 0.0), name="constant",
                    params={"kind": "constant", "a": a, "b": b})


def affine_wells(a: float, b: float, slope1: Sequence[float], slope2: Optional[Sequence[float]] = None,
                 dim: Optional[int] = None) -> WellPair:
    """``z1 = a + slope1 . x``, ``z2 = b + slope2 . x`` (exact exponent 1)."""
    s1 = np.atleast_1d(np.asarray(slope1, dtype=float))
    s2 = s1 if slope2 is None else np.atleast_1d(np.asarray(slope2, dtype=float))
    dim = dim or s1.size
    return WellPair(lambda x: a + np.asarray(x, dtype=float) @ s1,
                    lambda x: b + np.asarray(x, dtype=float) @ s2,
                    dim=dim, alpha=1.0,
                    holder_constants=(float(np.linalg.norm(s1)), float(np.linalg.norm(s2))),
                    name="affine", params={"kind": "affine", "a": a, "b": b,
                                           "slope1": s1.tolist(), "slope2": s2.tolist()})


def holder_wells(a: float, b: float, c: float, x0: Sequence[float], alpha: float,
                 c2: Optional[float] = None) -> WellPair:
    """``z1 = a + c |x - x0|^alpha``, ``z2 = b + c2 |x - x0|^alpha`` (exact exponent alpha)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    c2 = c if c2 is None else c2

    def bump(x):
        return np.linalg.norm(np.asarray(x, dtype=float) - x0, axis=-1) ** alpha

    return WellPair(lambda x: a + c * bump(x), lambda x: b + c2 * bump(x), dim=x0.size,
                    alpha=alpha, holder_constants=(abs(c), abs(c2)), name="holder",
                    params={"kind": "holder", "a": a, "b": b, "c": c, "c2": c2,
                            "x0": x0.tolist(), "alpha": alpha})


# ---------------------------------------------------------------------------
# One-dimensional potentials
# ---------------------------------------------------------------------------


class Potential1D:
    """A double well ``W(t)`` on the line with wells ``a < b``."""

    a: float
    b: float

    def W(self, t) -> np.ndarray:
        raise NotImplementedError

    def dW(self, t) -> np.ndarray:
        raise NotImplementedError

    def d2W(self, t) -> np.ndarray:
        raise NotImplementedError

    def Q(self, t) -> np.ndarray:
        return self.dW(t) + np.asarray(t, dtype=float)

    def check_q_monotone(self, n: int = 4001, tol: float = 1e-12) -> None:
        t = np.linspace(self.a, self.b, n)
        q = self.Q(t)
        drop = np.diff(q) < -tol * max(1.0, float(np.max(np.abs(q))))
        if np.any(drop):
            i = int(np.argmax(drop))
            j = i
            while j + 1 < drop.size and drop[j + 1]:
                j += 1
            raise QNonInvertibleError("Q decreases", (float(t[i]), float(t[j + 1])))

    def P(self, s, tol: float = 1e-13) -> np.ndarray:
        """Smallest ``t`` in ``[a, b]`` with ``Q(t) >= s`` (clamped outside the range)."""
        s = np.asarray(s, dtype=float)
        lo = np.full(s.shape, self.a)
        hi = np.full(s.shape, self.b)
        n_iter = int(math.ceil(math.log2(max(self.b - self.a, 1e-300) / tol))) + 2
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            up = self.Q(mid) >= s
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        out = hi
        out = np.where(s <= self.Q(np.float64(self.a)), self.a, out)
        out = np.where(s >= self.Q(np.float64(self.b)), self.b, out)
        return out


class QuarticPotential1D(Potential1D):
    """``W(t) = c (t - a)^2 (t - b)^2``."""

    def __init__(self, a: float, b: float, c: float):
        if not a < b:
            raise PotentialError("wells must satisfy a < b")
        self.a, self.b, self.c = float(a), float(b), float(c)

    def W(self, t):
        t = np.asarray(t, dtype=float)
        return self.c * (t - self.a) ** 2 * (t - self.b) ** 2

    def dW(self, t):
        t = np.asarray(t, dtype=float)
        return 2.0 * self.c * (t - self.a) * (t - self.b) * (2.0 * t - self.a - self.b)

    def d2W(self, t):
        t = np.asarray(t, dtype=float)
        p, q = t - self.a, t - self.b
        return 2.0 * self.c * (p * p + 4.0 * p * q + q * q)

    def Q(self, t):
        # expanded about the midpoint so the linear terms cancel before rounding
        x = np.asarray(t, dtype=float) - 0.5 * (self.a + self.b)
        h = 0.5 * (self.b - self.a)
        return 4.0 * self.c * x ** 3 + (1.0 - 4.0 * self.c * h * h) * x + 0.5 * (self.a + self.b)

    def __repr__(self) -> str:
        return f"QuarticPotential1D(a={self.a}, b={self.b}, c={self.c})"


def quartic_1d(a: float = -1.0, b: float = 1.0, c: float = 0.25) -> QuarticPotential1D:
    return QuarticPotential1D(a, b, c)


class _ShapePotential1D(Potential1D):
    """A :class:`PotentialSpec` frozen at ``x``."""

    def __init__(self, spec: "PotentialSpec", x: np.ndarray):
        self.spec, self.x = spec, x
        self.a, self.b = spec.wells.at(x)

    def W(self, t):
        return self.spec.shape(self.x, np.asarray(t, dtype=float))

    def dW(self, t):
        return self.spec.dshape(self.x, np.asarray(t, dtype=float))

    def d2W(self, t):
        return self.spec.d2shape(self.x, np.asarray(t, dtype=float))


class TabulatedPotential1D(Potential1D):
    """Piecewise cubic Hermite potential from a value table.

    Each interval carries its own endpoint slopes, so a derivative jump at a
    node is represented exactly. Outside ``[a, b]`` the potential grows
    quadratically from the boundary values.
    """

    def __init__(self, nodes, values, slope_right, slope_left, a: float, b: float):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.sr = np.asarray(slope_right, dtype=float)  # slope at the left end of each interval
        self.sl = np.asarray(slope_left, dtype=float)   # slope at the right end of each interval
        self.a, self.b = float(a), float(b)

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, self.nodes.size - 2)
        x0, x1 = self.nodes[i], self.nodes[i + 1]
        h = x1 - x0
        return t, i, h, (t - x0) / h

    def W(self, t):
        t, i, h, u = self._locate(t)
        f0, f1 = self.values[i], self.values[i + 1]
        d0, d1 = self.sr[i], self.sl[i]
        out = ((2 * u ** 3 - 3 * u ** 2 + 1) * f0 + (u ** 3 - 2 * u ** 2 + u) * h * d0
               + (-2 * u ** 3 + 3 * u ** 2) * f1 + (u ** 3 - u ** 2) * h * d1)
        out = np.where(t < self.a, self.values[0] + (self.a - t) ** 2, out)
        return np.where(t > self.b, self.values[-1] + (t - self.b) ** 2, out)

    def dW(self, t):
        t, i, h, u = self._locate(t)
        f0, f1 = self.values[i], self.values[i + 1]
        d0, d1 = self.sr[i], self.sl[i]
        out = ((6 * u ** 2 - 6 * u) * f0 / h + (3 * u ** 2 - 4 * u + 1) * d0
               + (-6 * u ** 2 + 6 * u) * f1 / h + (3 * u ** 2 - 2 * u) * d1)
        out = np.where(t < self.a, -2.0 * (self.a - t), out)
        return np.where(t > self.b, 2.0 * (t - self.b), out)

    def d2W(self, t):
        t, i, h, u = self._locate(t)
        f0, f1 = self.values[i], self.values[i + 1]
        d0, d1 = self.sr[i], self.sl[i]
        out = ((12 * u - 6) * f0 / h ** 2 + (6 * u - 4) * d0 / h
               + (-12 * u + 6) * f1 / h ** 2 + (6 * u - 2) * d1 / h)
        return np.where((t < self.a) | (t > self.b), 2.0, out)

    def to_rows(self) -> list[tuple[float, float, float]]:
        """Rows ``(t, W, dW)`` with the right-sided slope at each node."""
        slopes = np.concatenate([self.sr, [self.sl[-1]]])
        return [(float(t), float(w), float(d)) for t, w, d in zip(self.nodes, self.values, slopes)]


# ---------------------------------------------------------------------------
# Space-dependent potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialSpec:
    """``W(x, t) >= 0`` vanishing at the moving wells, with derivatives in ``t``."""

    wells: WellPair
    shape: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dshape: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d2shape: Callable[[np.ndarray, np.ndarray], np.ndarray]
    growth_bound: float = 4.0
    envelope: Callable[[np.ndarray], np.ndarray] = field(default=lambda s: s * s + s ** 4)
    name: str = "potential"
    params: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def dim(self) -> int:
        return self.wells.dim

    def at(self, x) -> Potential1D:
        x = _point(x)
        p = self.params
        if p.get("kind") == "quartic" and not callable(p.get("c")):
            a, b = self.wells.at(x)
            return QuarticPotential1D(a, b, float(p["c"]) if p["c"] != "normalized" else 1.0 / (b - a) ** 2)
        return _ShapePotential1D(self, x)

    def W(self, x, t) -> np.ndarray:
        return self.shape(_point(x), np.asarray(t, dtype=float))

    def field_values(self, pts: np.ndarray, u: np.ndarray) -> np.ndarray:
        """``W(x_k, u_k)`` for arrays of points ``(..., m)`` and values ``(...)``."""
        return self.shape(np.asarray(pts, dtype=float), np.asarray(u, dtype=float))


def make_quartic_moving(wells: WellPair, c=0.25, growth_bound: Optional[float] = None) -> PotentialSpec:
    """``W(x, t) = c(x) (t - z1(x))^2 (t - z2(x))^2``.

    ``c`` is a positive number, a callback ``x -> c(x)``, or ``"normalized"``
    for ``c = (z2 - z1)^(-2)`` (which keeps ``dW/dt + t`` nondecreasing).
    """
    if c == "normalized":
        cf = lambda x: 1.0 / (wells.z2(x) - wells.z1(x)) ** 2
    elif callable(c):
        cf = c
    else:
        cv = float(c)
        if cv <= 0:
            raise PotentialError("quartic scale must be positive")
        cf = lambda x: cv

    def shape(x, t):
        z1, z2 = wells.z1(x), wells.z2(x)
        return cf(x) * (t - z1) ** 2 * (t - z2) ** 2

    def dshape(x, t):
        z1, z2 = wells.z1(x), wells.z2(x)
        return 2.0 * cf(x) * (t - z1) * (t - z2) * (2.0 * t - z1 - z2)

    def d2shape(x, t):
        z1, z2 = wells.z1(x), wells.z2(x)
        p, q = t - z1, t - z2
        return 2.0 * cf(x) * (p * p + 4.0 * p * q + q * q)

    return PotentialSpec(wells=wells, shape=shape, dshape=dshape, d2shape=d2shape,
                         growth_bound=growth_bound if growth_bound is not None else 4.0,
                         name="quartic", params={"kind": "quartic", "c": c})


# ---------------------------------------------------------------------------
# Structural assumptions
# ---------------------------------------------------------------------------


@dataclass
class AssumptionReport:
    passed: dict
    delta: float
    deltas: dict
    witnesses: dict

    @property
    def all_pass(self) -> bool:
        return all(self.passed.values())


def _box_samples(box, density: int) -> np.ndarray:
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    axes = [np.linspace(lo, hi, density) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def validate_assumptions(spec: PotentialSpec, box, density: int = 9, n_t: int = 401) -> AssumptionReport:
    """Sampled check of the five structural assumptions on ``box``.

    ``box`` is a sequence of ``(lo, hi)`` pairs, one per space dimension. The
    reported ``delta`` is the largest value compatible with every sampled
    inequality (capped at 1).
    """
    xs = _box_samples(box, density)
    z1, z2 = spec.wells.values(xs)
    passed, deltas, witnesses = {}, {}, {}

    sep = z2 - z1
    i_min = int(np.argmin(sep))
    deltas["H2"] = float(sep[i_min] / 8.0)
    passed["H2"] = bool(sep[i_min] > 0)
    if not passed["H2"]:
        witnesses["H2"] = {"x": xs[i_min].tolist(), "z1": float(z1[i_min]), "z2": float(z2[i_min])}

    lo_t = float(np.min(z1)) - 2.0
    hi_t = float(np.max(z2)) + 2.0
    t = np.linspace(lo_t, hi_t, n_t)
    # the lattice plus each well midpoint, where the quartic sandwich is tightest
    X = np.concatenate([np.repeat(xs, t.size, axis=0), xs])
    T = np.concatenate([np.tile(t, xs.shape[0]), 0.5 * (z1 + z2)])
    Z1 = np.concatenate([np.repeat(z1, t.size), z1])
    Z2 = np.concatenate([np.repeat(z2, t.size), z2])
    Wv = spec.field_values(X, T)
    dist = np.minimum(np.abs(T - Z1), np.abs(T - Z2))
    zero_tol = 1e-12
    at1 = np.abs(spec.field_values(xs, z1))
    at2 = np.abs(spec.field_values(xs, z2))
    away = dist > 1e-6 * max(1.0, hi_t - lo_t)
    bad_zero = away & (Wv <= zero_tol)
    h1_ok = bool(np.all(at1 <= zero_tol) and np.all(at2 <= zero_tol) and not np.any(bad_zero))
    passed["H1"] = h1_ok
    if not h1_ok:
        if np.any(bad_zero):
            k = int(np.argmax(bad_zero))
            witnesses["H1"] = {"x": X[k].tolist(), "t": float(T[k]), "W": float(Wv[k])}
        else:
            k = int(np.argmax(np.maximum(at1, at2)))
            witnesses["H1"] = {"x": xs[k].tolist(), "W_at_well": float(max(at1[k], at2[k]))}

    f = spec.envelope(dist[away])
    ratio = Wv[away] / f
    if ratio.size and np.all(ratio > 0):
        d3 = float(min(np.min(ratio), 1.0 / np.max(ratio)))
    else:
        d3 = 0.0
    deltas["H3"] = d3
    passed["H3"] = d3 > 0
    if not passed["H3"] and ratio.size:
        k = int(np.argmin(ratio))
        witnesses["H3"] = {"x": X[away][k].tolist(), "t": float(T[away][k])}

    def h4_holds(d: float) -> bool:
        s = np.linspace(-d, d, 21)
        for z in (z1, z2):
            XX = np.repeat(xs, s.size, axis=0)
            TT = (z[:, None] + s[None, :]).ravel()
            if np.min(spec.d2shape(XX, TT)) < d:
                return False
        return True

    deltas["H4"] = _largest_delta(h4_holds)
    passed["H4"] = deltas["H4"] > 0
    if not passed["H4"]:
        witnesses["H4"] = {"min_d2W_at_wells": float(np.min(spec.d2shape(xs, z1)))}

    def h5_holds(d: float) -> bool:
        far = 1.0 / d
        tt = np.concatenate([np.geomspace(far, 50.0 * far, 40), -np.geomspace(far, 50.0 * far, 40)])
        XX = np.repeat(xs, tt.size, axis=0)
        TT = np.tile(tt, xs.shape[0])
        return bool(np.all(spec.field_values(XX, TT) >= d * np.abs(TT)))

    deltas["H5"] = _largest_delta(h5_holds)
    passed["H5"] = deltas["H5"] > 0
    delta = min(1.0, *[v for v in deltas.values()]) if all(passed.values()) else 0.0
    return AssumptionReport(passed=passed, delta=float(max(delta, 0.0)), deltas=deltas,
                            witnesses=witnesses)


def _largest_delta(holds: Callable[[float], bool], lo: float = 1e-6, hi: float = 1.0) -> float:
    if holds(hi):
        return hi
    if not holds(lo):
        return 0.0
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Derived maps
# ---------------------------------------------------------------------------


def q_map(spec, x, t) -> np.ndarray:
    """``Q(x, t) = dW/dt(x, t) + t``."""
    pot = spec.at(x) if isinstance(spec, PotentialSpec) else spec
    return pot.Q(t)


def p_inverse(spec, x, s) -> np.ndarray:
    """Left inverse of ``Q(x, .)`` on ``[z1(x), z2(x)]``, clamped outside its range."""
    pot = spec.at(x) if isinstance(spec, PotentialSpec) else spec
    pot.check_q_monotone()
    return pot.P(s)


def transition_map(wells: WellPair, rho: float, x, xp, t) -> np.ndarray:
    """Affine map of ``[z1(x), z2(x)]`` onto ``[z1(x + rho xp), z2(x + rho xp)]``."""
    x = np.asarray(x, dtype=float)
    y = x + rho * np.asarray(xp, dtype=float)
    if wells.dim == 1 and x.ndim == 0:
        x, y = x[None], y[None]
    a0, b0 = wells.values(x)
    a1, b1 = wells.values(y)
    lam = (np.asarray(t, dtype=float) - a0) / (b0 - a0)
    return lam * b1 + (1.0 - lam) * a1


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                tol: float = 1e-10) -> np.ndarray:
    """Vectorized golden-section search for the minimizer of ``f`` on ``[lo, hi]``."""
    lo, hi = lo.copy(), hi.copy()
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    while np.max(hi - lo) > tol:
        left = fc <= fd  # ties move toward the smaller s
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = hi - _GOLDEN * (hi - lo)
        new_d = lo + _GOLDEN * (hi - lo)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, f(new_c), fd)
        fd_next = np.where(left, fc, f(new_d))
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    return 0.5 * (lo + hi)


@dataclass
class SlabPotential:
    """``inf_{|s| <= rho/2} W(x + y + s xi, t)`` with its effective wells."""

    spec: PotentialSpec
    center: np.ndarray
    direction: np.ndarray
    width: float
    n_samples: int = 33

    def _offsets(self) -> np.ndarray:
        return np.linspace(-self.width / 2, self.width / 2, self.n_samples)

    def _minimize(self, g: Callable[[np.ndarray, np.ndarray], np.ndarray], n: int) -> np.ndarray:
        """Pointwise min over ``s`` of ``g(s, k)`` for ``n`` independent problems."""
        if self.width == 0.0:
            return g(np.zeros(n), np.arange(n))
        s = self._offsets()
        idx = np.arange(n)
        vals = np.stack([g(np.full(n, si), idx) for si in s], axis=1)
        j = np.argmin(vals, axis=1)  # first minimum: the smaller s on ties
        lo = s[np.maximum(j - 1, 0)]
        hi = s[np.minimum(j + 1, s.size - 1)]
        best_s = _golden_min(lambda ss: g(ss, idx), lo, hi)
        refined = g(best_s, idx)
        return np.minimum(refined, vals[idx, j])

    def values(self, y, t) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        base = self.center + y

        def g(s, k):
            pts = base[None, :] + s[:, None] * self.direction[None, :]
            return self.spec.field_values(pts, t[k])

        return self._minimize(g, t.size)

    def effective_wells(self, y) -> tuple[float, float]:
        y = np.asarray(y, dtype=float).reshape(-1)
        base = self.center + y
        pts = lambda s: base[None, :] + s[:, None] * self.direction[None, :]
        a = -self._minimize(lambda s, k: -self.spec.wells.z1(pts(s)), 1)[0]
        b = self._minimize(lambda s, k: self.spec.wells.z2(pts(s)), 1)[0]
        return float(a), float(b)


def slab_potential(spec: PotentialSpec, x, xi, rho: float, check_points=None) -> SlabPotential:
    """Infimum of ``W`` over a slab of width ``rho`` in direction ``xi``."""
    x = _point(x)
    xi = _point(xi)
    xi = xi / np.linalg.norm(xi)
    slab = SlabPotential(spec=spec, center=x, direction=xi, width=float(rho))
    pts = [np.zeros_like(x)] if check_points is None else check_points
    for y in pts:
        a, b = slab.effective_wells(y)
        if not a < b:
            raise SlabTooWideError(f"slab-too-wide: effective wells overlap (a={a:.6g}, b={b:.6g})")
    return slab


def manufacture_potential(gamma0, kernel, mode: str = "linear", refine: int = 2) -> TabulatedPotential1D:
    """The potential for which ``gamma0`` is an optimal profile: ``W = H(gamma0^{-1})``.

    ``mode`` selects the inverse (``"linear"`` interpolation or ``"cell"``
    steps, see :func:`nlphase.profile1d.invert_profile`). The table holds
    exact values and one-sided derivatives at every level of the inverse,
    refined ``refine`` times per piece, so the Hermite interpolant is exact
    for the piecewise quadratic potentials produced by cell profiles.
    """
    from .profile1d import HOperator, invert_profile

    values = np.asarray(gamma0.values, dtype=float)
    inner = (values > gamma0.a) & (values < gamma0.b)
    if np.any(np.diff(values[inner]) <= 0):
        raise FlatProfileError("flat-profile: the profile must be strictly increasing between the wells")
    inv = invert_profile(gamma0, mode=mode)
    H = HOperator(inv, kernel)
    lv = inv.levels
    sub = np.linspace(0.0, 1.0, refine + 1)[:-1]
    nodes = np.concatenate([(lv[:-1, None] + (lv[1:] - lv[:-1])[:, None] * sub[None, :]).ravel(), [lv[-1]]])
    vals = H.value(nodes)
    vals[0] = vals[-1] = 0.0
    sr = H.derivative(nodes[:-1], side="right")
    sl = H.derivative(nodes[1:], side="left")
    return TabulatedPotential1D(nodes, vals, sr, sl, inv.a, inv.b)
