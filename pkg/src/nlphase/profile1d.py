"""One-dimensional optimal transition profiles.

Profiles are nondecreasing node sequences on a uniform grid with constant
tails. Energies use the cell model: the profile is read as constant on each
grid cell, and every pairwise cell interaction is an exact second difference
of the kernel's conjugate ``K``. This makes the discrete energy the exact
nonlocal energy of a step function, so it is translation invariant for node
shifts and agrees with the conjugate functional of the step inverse.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, toeplitz
from scipy.optimize import isotonic_regression

from .kernel import (DirectionalKernel1D, Kernel1D, KernelError, KernelSpec, _as_line,
                     directional_kernel, truncate)
from .potential import Potential1D, PotentialError, PotentialSpec

__all__ = [
    "ProfileError",
    "NonMonotoneError",
    "InfiniteEnergyError",
    "SolverFailure",
    "MonotoneProfile",
    "InverseProfile",
    "WeightFunction",
    "OptimalityCertificate",
    "ProfileSolution",
    "SolverOptions",
    "PicardOptions",
    "HOperator",
    "make_grid_profile",
    "energy_1d",
    "energy_parts",
    "apply_LJ",
    "el_residual",
    "solve_profile_descent",
    "solve_profile_picard",
    "invert_profile",
    "profile_from_inverse",
    "conjugate_energy",
    "conjugate_parts",
    "apply_H",
    "h_bound",
    "certify_optimality",
    "center_profile",
    "weight_sigma",
    "profile_distance",
    "HolderScanResult",
    "holder_scan",
    "surface_tension",
    "clear_tension_cache",
    "measure_holder_in_t",
    "continuous_dependence_sweep",
    "transition_family",
]

KernelLike = Union[Kernel1D, DirectionalKernel1D, KernelSpec]


class ProfileError(ValueError):
    pass


class NonMonotoneError(ProfileError):
    pass


class InfiniteEnergyError(ProfileError):
    pass


class SolverFailure(RuntimeError):
    def __init__(self, msg: str, point=None):
        super().__init__(msg if point is None else f"{msg} (at x={point})")
        self.point = point


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MonotoneProfile:
    """Node values ``values[i]`` at ``start + i*dt`` with tails ``a`` (left) and ``b`` (right)."""

    values: np.ndarray
    start: float
    dt: float
    a: float
    b: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 2:
            raise ProfileError("a profile needs at least two nodes")
        if not self.a < self.b:
            raise ProfileError("tails must satisfy a < b")
        tol = 1e-12 * (self.b - self.a)
        if np.any(np.diff(v) < -tol):
            raise NonMonotoneError("profile values must be nondecreasing")
        if v[0] < self.a - tol or v[-1] > self.b + tol:
            raise NonMonotoneError("profile values must lie between the tails")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def grid(self) -> np.ndarray:
        return self.start + self.dt * np.arange(self.n)

    @property
    def end(self) -> float:
        return self.start + self.dt * (self.n - 1)

    @property
    def mid(self) -> float:
        return 0.5 * (self.a + self.b)

    def evaluate(self, t, kind: str = "linear") -> np.ndarray:
        """Piecewise-linear (``kind="linear"``) or cell (``"cell"``) reading of the profile."""
        t = np.asarray(t, dtype=float)
        if kind == "cell":
            i = np.floor((t - self.start) / self.dt + 0.5).astype(int)
            out = self.values[np.clip(i, 0, self.n - 1)]
            out = np.where(i < 0, self.a, out)
            return np.where(i >= self.n, self.b, out)
        xs = np.concatenate([[self.start - self.dt], self.grid, [self.end + self.dt]])
        ys = np.concatenate([[self.a], self.values, [self.b]])
        return np.interp(t, xs, ys, left=self.a, right=self.b)

    def shifted(self, shift: float) -> "MonotoneProfile":
        """The profile ``t -> gamma(t - shift)`` (same node values, moved grid)."""
        return replace(self, start=self.start + shift)

    def resample(self, start: float, dt: float, n: int) -> "MonotoneProfile":
        t = start + dt * np.arange(n)
        return MonotoneProfile(self.evaluate(t), start, dt, self.a, self.b)

    def total_variation(self) -> float:
        return float(self.values[-1] - self.values[0]) + float(self.values[0] - self.a) + float(self.b - self.values[-1])


def make_grid_profile(func: Callable[[np.ndarray], np.ndarray], R: float, dt: float,
                      a: float, b: float) -> MonotoneProfile:
    """Sample ``func`` on the symmetric grid ``-R, -R+dt, ..., R``."""
    n = int(round(2 * R / dt)) + 1
    t = -R + dt * np.arange(n)
    vals = np.clip(np.maximum.accumulate(np.asarray(func(t), dtype=float)), a, b)
    return MonotoneProfile(vals, -R, dt, a, b)


# ---------------------------------------------------------------------------
# Cell model of the nonlocal energy
# ---------------------------------------------------------------------------


class _CellModel:
    """Quadratic form ``E_nl = 1/2 g^T A g - g . lin + c0`` of the cell energy."""

    def __init__(self, k1: Kernel1D, dt: float, n: int, a: float, b: float):
        self.dt, self.n, self.a, self.b = dt, n, a, b
        k = dt * np.arange(n + 2)
        Kv = np.asarray(k1.moment(1, k), dtype=float)
        P = np.zeros(n)
        P[1:] = Kv[0:n - 1] - 2.0 * Kv[1:n] + Kv[2:n + 1]
        self.P = toeplitz(P)
        self.left = Kv[0:n] - Kv[1:n + 1]          # interaction of cell i with the left tail
        self.right = self.left[::-1].copy()
        self.k_far = float(Kv[n])
        diag = self.P.sum(axis=1) + self.left + self.right
        self.A = -self.P
        self.A[np.diag_indices(n)] = diag
        self.lin = self.left * a + self.right * b
        self.c0 = 0.5 * float(np.sum(self.left * a * a + self.right * b * b)) + 0.5 * self.k_far * (b - a) ** 2
        # total cell mass 2(K(0) - K(dt)) is the same on every row
        self.row_mass = float(diag[n // 2])
        self.lam_max = 2.0 * float(np.max(diag))

    def nonlocal_energy(self, g: np.ndarray) -> float:
        # squared-difference form avoids cancellation for nearly constant g
        quad = 0.25 * float(np.sum(self.P * (g[:, None] - g[None, :]) ** 2))
        tails = float(np.sum(self.left * (g - self.a) ** 2 + self.right * (g - self.b) ** 2))
        return quad + 0.5 * tails + 0.5 * self.k_far * (self.b - self.a) ** 2

    def nonlocal_grad(self, g: np.ndarray) -> np.ndarray:
        return self.A @ g - self.lin

    def nonlocal_fast(self, g: np.ndarray, Ag: np.ndarray) -> float:
        return 0.5 * float(g @ Ag) - float(g @ self.lin) + self.c0


_MODEL_CACHE: dict = {}
_MODEL_LOCK = threading.Lock()


def _cell_model(k1: Kernel1D, dt: float, n: int, a: float, b: float) -> _CellModel:
    key = (id(k1), round(dt, 15), n, a, b)
    with _MODEL_LOCK:
        hit = _MODEL_CACHE.get(key)
    if hit is not None and hit[0] is k1:
        return hit[1]
    model = _CellModel(k1, dt, n, a, b)
    with _MODEL_LOCK:
        if len(_MODEL_CACHE) > 32:
            _MODEL_CACHE.clear()
        _MODEL_CACHE[key] = (k1, model)
    return model


def _check_tails(gamma: MonotoneProfile, W: Potential1D) -> None:
    wa, wb = float(W.W(gamma.a)), float(W.W(gamma.b))
    scale = max(1.0, float(np.max(np.abs(W.W(np.linspace(gamma.a, gamma.b, 11))))))
    if abs(wa) > 1e-10 * scale or abs(wb) > 1e-10 * scale:
        raise InfiniteEnergyError("infinite-energy: profile tails are not wells of the potential")


def energy_parts(gamma: MonotoneProfile, kernel: KernelLike, W: Potential1D) -> tuple[float, float]:
    """Nonlocal and potential parts of the cell energy."""
    _check_tails(gamma, W)
    k1 = _as_line(kernel)
    model = _cell_model(k1, gamma.dt, gamma.n, gamma.a, gamma.b)
    nl = model.nonlocal_energy(gamma.values)
    pot = gamma.dt * float(np.sum(W.W(gamma.values)))
    return nl, pot


def energy_1d(gamma: MonotoneProfile, kernel: KernelLike, W: Potential1D) -> float:
    """``1/4 iint J(t-t') (g(t)-g(t'))^2 + int W(g)`` for the cell reading of ``gamma``."""
    nl, pot = energy_parts(gamma, kernel, W)
    return nl + pot


def apply_LJ(gamma: MonotoneProfile, kernel: KernelLike, nodes=None) -> np.ndarray:
    """Second-difference nonlocal operator at grid nodes.

    ``sum_j w_j (g(t+s_j) + g(t-s_j) - 2 g(t))`` over offsets ``s_j = j dt``,
    where ``w_j`` is the kernel mass of the offset cell. Values beyond the
    grid are the constant tails, summed in closed form.
    """
    k1 = _as_line(kernel)
    n, dt = gamma.n, gamma.dt
    j = np.arange(n)
    T = lambda u: np.asarray(k1.moment(0, u), dtype=float)
    w = np.zeros(n)
    w[1:] = T((j[1:] - 0.5) * dt) - T((j[1:] + 0.5) * dt)
    g = gamma.values
    out = (toeplitz(w) @ g + gamma.b * T((n - 1 - j + 0.5) * dt) + gamma.a * T((j + 0.5) * dt)
           - 2.0 * float(T(0.5 * dt)) * g)
    if nodes is not None:
        out = out[np.asarray(nodes)]
    return out


def el_residual(gamma: MonotoneProfile, kernel: KernelLike, W: Potential1D,
                window: Optional[float] = None) -> float:
    """Sup over interior nodes of ``|L_J g - W'(g)|``; ``window`` limits to ``|t| <= window``."""
    r = np.abs(apply_LJ(gamma, kernel) - W.dW(gamma.values))
    t = gamma.grid
    mask = np.ones(gamma.n, dtype=bool)
    mask[[0, -1]] = False
    if window is not None:
        mask &= np.abs(t) <= window
    return float(np.max(r[mask]))


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


@dataclass
class SolverOptions:
    R: float = 8.0
    dt: Optional[float] = None          # default R / 512
    max_iter: int = 20000
    tol: float = 1e-8
    init: Union[str, MonotoneProfile] = "tanh"
    bb_iter: int = 400                  # gradient steps before Newton polishing
    adaptive_R: bool = False
    boundary_tol: float = 1e-4
    R_cap: float = 256.0
    record_history: bool = True


@dataclass
class PicardOptions:
    R: float = 8.0
    dt: Optional[float] = None
    theta: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10000
    init: Union[str, MonotoneProfile] = "tanh"
    stall_window: int = 200


@dataclass
class ProfileSolution:
    profile: MonotoneProfile
    energy: float
    iterations: int
    converged: bool
    residual: float
    history: list = field(default_factory=list)
    method: str = "descent"

    @property
    def flag(self) -> str:
        return "converged" if self.converged else "unconverged"


def _grid_for(R: float, dt: Optional[float]) -> tuple[float, float, int]:
    dt = R / 512.0 if dt is None else float(dt)
    n = int(round(2 * R / dt)) + 1
    return -R, dt, n


def _initial(init, start: float, dt: float, n: int, a: float, b: float) -> np.ndarray:
    t = start + dt * np.arange(n)
    if isinstance(init, MonotoneProfile):
        return init.evaluate(t)
    if init == "step":
        # jump between two nodes: a node-centred start is a saddle of the lattice energy
        return np.where(t < 0.5 * dt, a, b)
    if init == "tanh":
        # off-lattice centre: symmetric starts can stall at lattice saddles
        return 0.5 * (a + b) + 0.5 * (b - a) * np.tanh(t - 0.3 * dt)
    if init == "well":
        return np.full(n, a)
    raise ProfileError(f"unknown initializer {init!r}")


def _project(y: np.ndarray, a: float, b: float) -> np.ndarray:
    return np.clip(isotonic_regression(y).x, a, b)


def _check_wells(W: Potential1D, a: float, b: float) -> None:
    scale = max(1.0, float(np.max(np.abs(W.W(np.linspace(a, b, 101))))))
    if abs(float(W.W(a))) > 1e-10 * scale or abs(float(W.W(b))) > 1e-10 * scale:
        raise PotentialError("the endpoints must be zeros of the potential")
    inner = np.linspace(a, b, 203)[1:-1]
    if np.any(W.W(inner) <= 0):
        raise PotentialError("the potential must be positive between the wells")


def _descent_on_grid(k1: Kernel1D, W: Potential1D, a: float, b: float, start: float, dt: float,
                     n: int, x0: np.ndarray, opts: SolverOptions) -> ProfileSolution:
    model = _cell_model(k1, dt, n, a, b)

    def evaluate(x):
        Ax = model.A @ x
        f = model.nonlocal_fast(x, Ax) + dt * float(np.sum(W.W(x)))
        g = Ax - model.lin + dt * W.dW(x)
        return f, g

    def stationarity(x, g):
        return float(np.max(np.abs(x - _project(x - g / dt, a, b))))

    def newton_step(x, f, g, mu):
        """Damped Newton on the free nodes; returns the accepted point or None."""
        tie = np.zeros(n, dtype=bool)
        eq = np.diff(x) <= 1e-14 * (b - a)
        tie[:-1] |= eq
        tie[1:] |= eq
        # nodes held at a well or tied to a neighbour stay fixed
        free = ~(((x <= a) & (g >= 0)) | ((x >= b) & (g <= 0)) | tie)
        if not np.any(free):
            return None, mu
        Hf = model.A[np.ix_(free, free)] + np.diag(dt * W.d2W(x[free]))
        eye = np.eye(Hf.shape[0])
        for _ in range(30):
            try:
                d = np.zeros(n)
                d[free] = -cho_solve(cho_factor(Hf + mu * dt * eye), g[free])
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            xn = _project(x + d, a, b)
            fn, gn = evaluate(xn)
            if fn <= f + 1e-14 * max(1.0, abs(f)) and stationarity(xn, gn) < stationarity(x, g):
                return (xn, fn, gn), max(mu / 10.0, 1e-12)
            mu *= 10.0
        return None, 1e-3

    x = _project(x0, a, b)
    f, g = evaluate(x)
    history = [f]
    curv = model.lam_max / dt + float(np.max(np.abs(W.d2W(np.linspace(a, b, 201)))))
    step = 1.0 / curv
    it = 0
    res = stationarity(x, g)
    next_newton = opts.bb_iter
    mu = 1e-3
    while res >= opts.tol and it < opts.max_iter:
        it += 1
        moved = None
        if it > next_newton:
            moved, mu = newton_step(x, f, g, mu)
            if moved is None:
                next_newton = it + opts.bb_iter
        if moved is None:
            for _ in range(60):
                xn = _project(x - step * g / dt, a, b)
                fn, gn = evaluate(xn)
                if fn <= f + 1e-4 * float(g @ (xn - x)):
                    break
                step *= 0.5
            if fn > f:  # never accept an increase
                break
            sv = xn - x
            yv = (gn - g) / dt
            sy = float(sv @ yv)
            step = float(sv @ sv) / sy if sy > 0 else 2.0 * step
            step = min(max(step, 1e-3 / curv), 1e6 / curv)
            moved = (xn, fn, gn)
        x, f, g = moved
        if opts.record_history:
            history.append(f)
        res = stationarity(x, g)
    prof = MonotoneProfile(x, start, dt, a, b)
    return ProfileSolution(prof, f, it, res < opts.tol, res, history, "descent")


def solve_profile_descent(kernel: KernelLike, W: Potential1D, a: Optional[float] = None,
                          b: Optional[float] = None, opts: Optional[SolverOptions] = None,
                          **overrides) -> ProfileSolution:
    """Minimize the cell energy over nondecreasing profiles.

    Gradient steps use Barzilai-Borwein lengths with an Armijo backtrack and
    an isotone projection; after ``bb_iter`` steps a damped Newton polish
    drives the projected gradient below ``tol``. Every accepted step lowers
    the energy. With ``adaptive_R`` the half-width doubles until the end
    nodes are within ``boundary_tol`` of the wells.
    """
    opts = replace(opts or SolverOptions(), **overrides)
    a = W.a if a is None else float(a)
    b = W.b if b is None else float(b)
    _check_wells(W, a, b)
    k1 = _as_line(kernel)
    R = opts.R
    while True:
        start, dt, n = _grid_for(R, opts.dt)
        x0 = _initial(opts.init, start, dt, n, a, b)
        sol = _descent_on_grid(k1, W, a, b, start, dt, n, x0, opts)
        v = sol.profile.values
        ok = v[0] - a <= opts.boundary_tol and b - v[-1] <= opts.boundary_tol
        if not opts.adaptive_R or ok or 2 * R > opts.R_cap:
            return sol
        R *= 2.0


def solve_profile_picard(kernel: KernelLike, W: Potential1D, a: Optional[float] = None,
                         b: Optional[float] = None, opts: Optional[PicardOptions] = None,
                         **overrides) -> ProfileSolution:
    """Damped fixed-point iteration ``g <- (1-theta) g + theta P(J*g)``.

    ``J*g`` is the cell convolution with the exact self-cell closure, so the
    fixed points are exactly the discrete stationary profiles. The damping is
    halved whenever a step would increase the residual.
    """
    opts = replace(opts or PicardOptions(), **overrides)
    a = W.a if a is None else float(a)
    b = W.b if b is None else float(b)
    k1 = _as_line(kernel)
    if not math.isclose(k1.mass, 1.0, rel_tol=0, abs_tol=1e-8):
        raise KernelError("the fixed-point form needs a unit-mass kernel")
    W.check_q_monotone()
    start, dt, n = _grid_for(opts.R, opts.dt)
    model = _cell_model(k1, dt, n, a, b)
    self_weight = 1.0 - model.row_mass / dt

    def conv(x):
        return (model.P @ x + model.lin) / dt + self_weight * x

    x = np.clip(_initial(opts.init, start, dt, n, a, b), a, b)
    px = W.P(conv(x))
    res = float(np.max(np.abs(px - x)))
    theta = opts.theta
    it = 0
    history = [res]
    while res >= opts.tol and it < opts.max_iter and theta > 1e-12:
        it += 1
        xn = (1.0 - theta) * x + theta * px
        pn = W.P(conv(xn))
        rn = float(np.max(np.abs(pn - xn)))
        if rn > res:
            theta *= 0.5
            continue
        x, px, res = xn, pn, rn
        theta = min(opts.theta, 2.0 * theta)
        history.append(res)
        # a lattice translation mode can leave a neutral direction; stop when stalled
        if len(history) > opts.stall_window and res > (1.0 - 1e-6) * history[-opts.stall_window]:
            break
    x = np.maximum.accumulate(np.clip(x, a, b))
    prof = MonotoneProfile(x, start, dt, a, b)
    return ProfileSolution(prof, energy_1d(prof, k1, W), it, res < opts.tol, res, history, "picard")


# ---------------------------------------------------------------------------
# Generalized inverse
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InverseProfile:
    """Nondecreasing map ``v`` on ``(a, b)``, linear on each value segment.

    On ``(levels[k], levels[k+1]]`` the map is ``pos[k] + slope[k] (s - levels[k])``.
    Jumps of ``v`` between segments are the atoms of its derivative measure.
    """

    levels: np.ndarray
    pos: np.ndarray
    slope: np.ndarray

    def __post_init__(self) -> None:
        lv = np.asarray(self.levels, dtype=float)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float))
        object.__setattr__(self, "slope", np.asarray(self.slope, dtype=float))
        if np.any(np.diff(lv) <= 0):
            raise ProfileError("inverse levels must be strictly increasing")
        if np.any(self.slope < 0) or np.any(np.diff(self.start_times_end()) < -1e-12):
            raise NonMonotoneError("inverse map must be nondecreasing")

    def start_times_end(self) -> np.ndarray:
        ends = self.pos + self.slope * np.diff(self.levels)
        return np.column_stack([self.pos, ends]).ravel()

    @property
    def a(self) -> float:
        return float(self.levels[0])

    @property
    def b(self) -> float:
        return float(self.levels[-1])

    @property
    def ends(self) -> np.ndarray:
        return self.pos + self.slope * np.diff(self.levels)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.levels, s, side="left") - 1, 0, self.pos.size - 1)
        return self.pos[k] + self.slope[k] * (s - self.levels[k])

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Interior levels where ``v`` jumps and the jump sizes."""
        jumps = self.pos[1:] - self.ends[:-1]
        keep = jumps > 0
        return self.levels[1:-1][keep], jumps[keep]

    def total_mass(self) -> float:
        return float(self.ends[-1] - self.pos[0])

    def map_average(self, other: "InverseProfile", weight: float = 0.5) -> "InverseProfile":
        """Pointwise convex combination ``(1-w) self + w other`` on merged levels."""
        if self.a != other.a or self.b != other.b:
            raise ProfileError("inverse profiles must share the domain")
        lv = np.union1d(self.levels, other.levels)
        lo = lv[:-1]

        def piece(inv):
            k = np.clip(np.searchsorted(inv.levels, lo, side="right") - 1, 0, inv.pos.size - 1)
            return inv.pos[k] + inv.slope[k] * (lo - inv.levels[k]), inv.slope[k]
        p1, s1 = piece(self)
        p2, s2 = piece(other)
        return InverseProfile(lv, (1 - weight) * p1 + weight * p2, (1 - weight) * s1 + weight * s2)


def invert_profile(gamma: MonotoneProfile, mode: str = "cell") -> InverseProfile:
    """Left-continuous inverse ``v(s) = inf{t : g(t) >= s}``.

    ``mode="cell"`` inverts the cell reading (every node value becomes a flat
    piece of ``v`` at a cell edge); ``mode="linear"`` inverts the
    piecewise-linear reading, whose tails are reached one spacing beyond
    the end nodes.
    """
    g, dt, a, b = gamma.values, gamma.dt, gamma.a, gamma.b
    vals = np.concatenate([[a], g, [b]])
    if mode == "cell":
        edges = gamma.start - 0.5 * dt + dt * np.arange(gamma.n + 1)
        rise = vals[1:] > vals[:-1]
        levels = np.concatenate([[a], vals[1:][rise]])
        pos = edges[rise]
        return InverseProfile(levels, pos, np.zeros(pos.size))
    if mode == "linear":
        times = gamma.start + dt * np.arange(-1, gamma.n + 1)
        rise = vals[1:] > vals[:-1]
        levels = np.concatenate([[a], vals[1:][rise]])
        pos = times[:-1][rise]
        slope = dt / (vals[1:][rise] - vals[:-1][rise])
        return InverseProfile(levels, pos, slope)
    raise ProfileError(f"unknown inversion mode {mode!r}")


def profile_from_inverse(v: InverseProfile, start: float, dt: float, n: int) -> MonotoneProfile:
    """Inverse of the inverse, ``g(t) = inf{s : v(s) >= t}``, sampled at nodes."""
    t = start + dt * np.arange(n)
    ends = v.ends
    out = np.empty(n)
    # first segment whose end reaches t
    k = np.searchsorted(ends, t, side="left")
    for i, (ti, ki) in enumerate(zip(t, k)):
        if ki >= v.pos.size:
            out[i] = v.b
        elif ti <= v.pos[ki]:
            out[i] = v.levels[ki]
        else:
            out[i] = v.levels[ki] + (ti - v.pos[ki]) / v.slope[ki]
    return MonotoneProfile(np.clip(out, v.a, v.b), start, dt, v.a, v.b)


# ---------------------------------------------------------------------------
# Interactions between pieces of the pushed-forward measure
# ---------------------------------------------------------------------------

_ATOM_WIDTH = 2e-4


def _atomize(lo, hi):
    """Pieces narrower than ``_ATOM_WIDTH`` become atoms at their midpoint."""
    narrow = (hi - lo) < _ATOM_WIDTH
    mid = 0.5 * (lo + hi)
    return np.where(narrow, mid, lo), np.where(narrow, mid, hi)


def _pair(k1: Kernel1D, order: int, pa, pb, pm, qa, qb, qm) -> np.ndarray:
    """``iint T_order(tau - tau') dmu_p(tau) dmu_q(tau')`` for ``p`` after ``q``.

    Pieces carry uniform mass ``m`` on ``[a, b]`` (an atom when ``a == b``).
    ``order=0`` integrates the tail mass, ``order=1`` the conjugate ``K``.
    """
    pa, pb = _atomize(pa, pb)
    qa, qb = _atomize(qa, qb)
    Lp, Lq = pb - pa, qb - qa
    pat, qat = Lp <= 0, qb - qa <= 0
    Lp_s = np.where(pat, 1.0, Lp)
    Lq_s = np.where(qat, 1.0, Lq)
    M = lambda n, x: np.asarray(k1.moment(n + order, np.maximum(x, 0.0)), dtype=float)
    mm = pm * qm
    with np.errstate(invalid="ignore"):
        aa = M(0, pa - qa)
        ia = (M(1, pa - qa) - M(1, pb - qa)) / Lp_s
        ai = (M(1, pa - qb) - M(1, pa - qa)) / Lq_s
        ii = (M(2, pa - qb) - M(2, pa - qa) - M(2, pb - qb) + M(2, pb - qa)) / (Lp_s * Lq_s)
    val = np.where(pat & qat, aa, np.where(qat, ia, np.where(pat, ai, ii)))
    return np.where(mm == 0, 0.0, mm * val)


def _self(k1: Kernel1D, lo, hi, m) -> np.ndarray:
    """``iint_{tau<tau'} K(tau'-tau)`` within one uniform piece."""
    lo, hi = _atomize(lo, hi)
    L = hi - lo
    at = L <= 0
    Ls = np.where(at, 1.0, L)
    K = lambda n, x: np.asarray(k1.moment(n, x), dtype=float)
    inter = (m / Ls) ** 2 * (Ls * K(2, np.zeros_like(Ls)) - K(3, np.zeros_like(Ls)) + K(3, Ls))
    atom = 0.5 * m * m * K(1, np.zeros_like(Ls))
    return np.where(at, atom, inter)


class _Pieces:
    def __init__(self, v: InverseProfile):
        self.s_lo = v.levels[:-1]
        self.s_hi = v.levels[1:]
        self.m = self.s_hi - self.s_lo
        self.lo = v.pos
        self.hi = v.ends
        self.M = self.m.size


class HOperator:
    """``Hv(s) = iint_{t' < s < t} T(v(t) - v(t')) dt dt'`` evaluated exactly on pieces."""

    def __init__(self, v: InverseProfile, kernel: KernelLike, chunk: int = 256):
        self.v = v
        self.k1 = _as_line(kernel)
        self.p = _Pieces(v)
        self.chunk = chunk
        p = self.p
        I = _pair(self.k1, 0, p.lo[:, None], p.hi[:, None], p.m[:, None],
                  p.lo[None, :], p.hi[None, :], p.m[None, :])
        I = np.where(np.tri(p.M, k=-1, dtype=bool), I, 0.0)
        # block[c] = sum_{p > c} sum_{q < c} I[p, q]
        below_rows = np.cumsum(I[::-1], axis=0)[::-1]         # sum over p' >= p
        acc = np.cumsum(below_rows, axis=1)                   # sum over q' <= q
        self.block = np.zeros(p.M)
        for c in range(1, p.M - 1):
            self.block[c] = acc[c + 1, c - 1]

    def _split(self, s, side: str):
        p = self.p
        if side == "left":
            c = np.searchsorted(p.s_hi, s, side="left")
        else:
            c = np.searchsorted(p.s_lo, s, side="right") - 1
        c = np.clip(c, 0, p.M - 1)
        frac = np.clip((s - p.s_lo[c]) / p.m[c], 0.0, 1.0)
        tau = p.lo[c] + frac * (p.hi[c] - p.lo[c])
        return c, tau, s - p.s_lo[c], p.s_hi[c] - s

    def value(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros(s.shape)
        inside = (s > self.v.a) & (s < self.v.b)
        idx = np.nonzero(inside)[0]
        p = self.p
        for lo_i in range(0, idx.size, self.chunk):
            sel = idx[lo_i:lo_i + self.chunk]
            c, tau, m_below, m_above = self._split(s[sel], "left")
            q = np.arange(p.M)[None, :]
            cc = c[:, None]
            up = _pair(self.k1, 0, tau[:, None], p.hi[c][:, None], m_above[:, None],
                       p.lo[None, :], p.hi[None, :], p.m[None, :])
            dn = _pair(self.k1, 0, p.lo[None, :], p.hi[None, :], p.m[None, :],
                       p.lo[c][:, None], tau[:, None], m_below[:, None])
            part = np.where(q < cc, up, 0.0).sum(axis=1) + np.where(q > cc, dn, 0.0).sum(axis=1)
            own = _pair(self.k1, 0, tau, p.hi[c], m_above, p.lo[c], tau, m_below)
            out[sel] = self.block[c] + part + own
        return out

    def derivative(self, s, side: str = "left") -> np.ndarray:
        """One-sided ``dHv/ds``; ``side`` picks the piece containing ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        p = self.p
        c, tau, m_below, m_above = self._split(s, side)
        k1 = self.k1
        out = np.empty(s.shape)
        for lo_i in range(0, s.size, self.chunk):
            sl = slice(lo_i, lo_i + self.chunk)
            cs, ts = c[sl][:, None], tau[sl][:, None]
            q = np.arange(p.M)[None, :]
            # pushforward of pieces above and below, seen from tau
            above = _line_integral(k1, p.lo[None, :] - ts, p.hi[None, :] - ts, p.m[None, :])
            below = _line_integral(k1, ts - p.hi[None, :], ts - p.lo[None, :], p.m[None, :])
            a_sum = np.where(q > cs, above, 0.0).sum(axis=1)
            b_sum = np.where(q < cs, below, 0.0).sum(axis=1)
            cc = c[sl]
            own_up = _line_integral(k1, np.zeros(cc.size), p.hi[cc] - tau[sl], m_above[sl])
            own_dn = _line_integral(k1, np.zeros(cc.size), tau[sl] - p.lo[cc], m_below[sl])
            out[sl] = a_sum + own_up - b_sum - own_dn
        return out


def _line_integral(k1: Kernel1D, d_lo, d_hi, m) -> np.ndarray:
    """``int T(d) dmu`` for mass ``m`` spread uniformly over distances ``[d_lo, d_hi]``."""
    d_lo, d_hi = _atomize(np.maximum(d_lo, 0.0), np.maximum(d_hi, 0.0))
    L = d_hi - d_lo
    at = L <= 0
    Ls = np.where(at, 1.0, L)
    with np.errstate(invalid="ignore"):
        val = np.where(at, np.asarray(k1.moment(0, d_lo), dtype=float),
                       (np.asarray(k1.moment(1, d_lo)) - np.asarray(k1.moment(1, d_hi))) / Ls)
    return np.where(m == 0, 0.0, m * val)


def apply_H(v: InverseProfile, kernel: KernelLike, s) -> np.ndarray:
    return HOperator(v, kernel).value(s)


def h_bound(s, a: float, b: float, mass: float = 1.0) -> np.ndarray:
    """``[1 - ((2s - a - b)/(b - a))^2] * mass``."""
    s = np.asarray(s, dtype=float)
    return (1.0 - ((2.0 * s - a - b) / (b - a)) ** 2) * mass


def conjugate_parts(v: InverseProfile, kernel: KernelLike, W: Potential1D) -> tuple[float, float]:
    """Interaction and potential parts of the conjugate functional."""
    k1 = _as_line(kernel)
    p = _Pieces(v)
    I = _pair(k1, 1, p.lo[:, None], p.hi[:, None], p.m[:, None],
              p.lo[None, :], p.hi[None, :], p.m[None, :])
    inter = float(np.sum(np.where(np.tri(p.M, k=-1, dtype=bool), I, 0.0)))
    inter += float(np.sum(_self(k1, p.lo, p.hi, p.m)))
    lv, jumps = v.atoms()
    pot = float(np.sum(W.W(lv) * jumps))
    dens = v.slope > 0
    if np.any(dens):
        x, w = np.polynomial.legendre.leggauss(12)
        lo, hi = p.s_lo[dens], p.s_hi[dens]
        pts = 0.5 * (hi - lo)[:, None] * (x[None, :] + 1.0) + lo[:, None]
        pot += float(np.sum(v.slope[dens] * 0.5 * (hi - lo) * (W.W(pts) @ w)))
    return inter, pot


def conjugate_energy(v: InverseProfile, kernel: KernelLike, W: Potential1D) -> float:
    """``iint_{s<s'} K(v(s') - v(s)) ds ds' + int W dv``."""
    inter, pot = conjugate_parts(v, kernel, W)
    return inter + pot


# ---------------------------------------------------------------------------
# Optimality certificate
# ---------------------------------------------------------------------------


@dataclass
class OptimalityCertificate:
    sup_gap: float
    support_gap: float
    tol: float
    n_samples: int
    n_support: int

    @property
    def passed(self) -> bool:
        return self.sup_gap < self.tol and self.support_gap < self.tol

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


def certify_optimality(gamma: MonotoneProfile, kernel: KernelLike, W: Potential1D,
                       tol: float = 1e-6, mode: str = "cell", refine: int = 4) -> OptimalityCertificate:
    """Compare ``W`` with ``H(gamma^{-1})`` on the value grid.

    The sup gap uses every level and ``refine`` interior points per segment.
    The support gap uses the levels carrying atoms of the inverse derivative
    and the segments where it has density above ``1e-12`` of the total.
    """
    v = invert_profile(gamma, mode=mode)
    H = HOperator(v, kernel)
    lv = v.levels
    sub = np.linspace(0.0, 1.0, refine + 2)[1:-1]
    inner = (lv[:-1, None] + np.diff(lv)[:, None] * sub[None, :]).ravel()
    s_all = np.concatenate([lv[1:-1], inner])
    gap = H.value(s_all) - W.W(s_all)
    sup_gap = float(max(0.0, np.max(gap))) if gap.size else 0.0
    total = v.total_mass()
    atom_lv, jumps = v.atoms()
    supp = [atom_lv[jumps > 1e-12 * total]]
    seg_mass = v.slope * np.diff(lv)
    dense = seg_mass > 1e-12 * total
    if np.any(dense):
        supp.append((lv[:-1][dense, None] + np.diff(lv)[dense, None] * sub[None, :]).ravel())
    s_sup = np.concatenate(supp)
    s_sup = s_sup[(s_sup > v.a) & (s_sup < v.b)]
    support_gap = float(np.max(np.abs(W.W(s_sup) - H.value(s_sup)))) if s_sup.size else 0.0
    return OptimalityCertificate(sup_gap, support_gap, tol, s_all.size, s_sup.size)


# ---------------------------------------------------------------------------
# Centering, weights, distances
# ---------------------------------------------------------------------------


def center_profile(gamma: MonotoneProfile) -> tuple[MonotoneProfile, float]:
    """Shift so the last point at or below the midpoint value sits at the origin.

    The crossing of the piecewise-linear reading is snapped to the nearest
    node; the returned profile has the same node values on a moved grid.
    """
    mid = gamma.mid
    v, t = gamma.values, gamma.grid
    above = np.nonzero(v > mid)[0]
    if above.size == 0:
        cross = gamma.end + gamma.dt
    elif above[0] == 0:
        cross = gamma.start - gamma.dt
        if gamma.a < mid:  # ramp from the left tail
            cross = gamma.start - gamma.dt + gamma.dt * (mid - gamma.a) / (v[0] - gamma.a)
    else:
        i = above[0]
        lo, hi = v[i - 1], v[i]
        cross = t[i - 1] + gamma.dt * (mid - lo) / (hi - lo)
    k = gamma.start + gamma.dt * round((cross - gamma.start) / gamma.dt)
    return gamma.shifted(-k), k


@dataclass(frozen=True)
class WeightFunction:
    """``t -> min(1, min_{|t0| <= 2R'} J(t - t0))``."""

    kernel: Kernel1D
    radius: float
    n_grid: int = 2001

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t0 = np.linspace(-2 * self.radius, 2 * self.radius, self.n_grid)
        out = np.empty(t.shape)
        flat = t.ravel()
        res = np.empty(flat.size)
        for i in range(0, flat.size, 512):
            blk = flat[i:i + 512]
            d = np.abs(blk[:, None] - t0[None, :])
            dens = np.asarray(self.kernel.density(np.maximum(d, 1e-300)), dtype=float)
            res[i:i + 512] = np.min(dens, axis=1)
        out[...] = np.minimum(1.0, res.reshape(t.shape))
        return out


def weight_sigma(kernel: KernelLike, radius: float, n_grid: int = 2001) -> WeightFunction:
    return WeightFunction(_as_line(kernel), float(radius), n_grid)


def _common_grid(g1: MonotoneProfile, g2: MonotoneProfile, window=None) -> np.ndarray:
    dt = min(g1.dt, g2.dt)
    lo = min(g1.start, g2.start) - dt
    hi = max(g1.end, g2.end) + dt
    if window is not None:
        lo, hi = -float(window), float(window)
    same = math.isclose(g1.dt, g2.dt) and abs(((g1.start - g2.start) / dt) - round((g1.start - g2.start) / dt)) < 1e-9
    if same:
        k0 = math.floor((lo - g1.start) / dt + 1e-9)
        k1 = math.ceil((hi - g1.start) / dt - 1e-9)
        return g1.start + dt * np.arange(k0, k1 + 1)
    n = int(math.ceil((hi - lo) / dt)) + 1
    return np.linspace(lo, hi, n)


def profile_distance(g1: MonotoneProfile, g2: MonotoneProfile, weight: Optional[Callable] = None,
                     kind: str = "l1", window: Optional[float] = None) -> float:
    """Weighted ``L1`` (or truncated squared ``L2``) distance of piecewise-linear readings."""
    t = _common_grid(g1, g2, window)
    d = g1.evaluate(t) - g2.evaluate(t)
    w = np.ones_like(t) if weight is None else np.asarray(weight(t), dtype=float)
    integrand = np.abs(d) * w if kind == "l1" else d * d * w
    if kind not in ("l1", "l2"):
        raise ProfileError("distance kind must be 'l1' or 'l2'")
    return float(np.trapezoid(integrand, t))


# ---------------------------------------------------------------------------
# Surface tension and scans
# ---------------------------------------------------------------------------


_TENSION_CACHE: dict = {}
_TENSION_LOCK = threading.Lock()


def clear_tension_cache() -> None:
    with _TENSION_LOCK:
        _TENSION_CACHE.clear()


def _directional(spec: KernelSpec, xi) -> Kernel1D:
    if spec.dim == 1:
        return _as_line(spec)
    return directional_kernel(spec, xi, spacing=1.0, half_width=1.0).kernel


def _tension_key(x, xi, spec: KernelSpec, potential, opts: SolverOptions):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    # J is even, so xi and -xi share an entry
    j = int(np.flatnonzero(np.abs(xi) > 1e-14)[0]) if np.any(xi != 0) else 0
    if xi[j] < 0:
        xi = -xi
    return (tuple(np.round(np.atleast_1d(x), 14)), tuple(np.round(xi, 14)), spec.key(), id(potential),
            opts.R, opts.dt, opts.tol, opts.adaptive_R)


def surface_tension(x, xi, kernel: KernelSpec, potential: Union[PotentialSpec, Potential1D],
                    opts: Optional[SolverOptions] = None, use_cache: bool = True,
                    return_solution: bool = False):
    """Minimal one-dimensional energy with the directional kernel and the wells at ``x``."""
    opts = opts or SolverOptions(adaptive_R=True)
    key = _tension_key(x, xi, kernel, potential, opts)
    if use_cache and not return_solution:
        with _TENSION_LOCK:
            if key in _TENSION_CACHE:
                return _TENSION_CACHE[key]
    k1 = _directional(kernel, xi)
    W = potential.at(x) if isinstance(potential, PotentialSpec) else potential
    sol = solve_profile_descent(k1, W, opts=opts)
    if use_cache:
        with _TENSION_LOCK:
            _TENSION_CACHE[key] = sol.energy
    return (sol.energy, sol) if return_solution else sol.energy


@dataclass
class HolderScanResult:
    points: np.ndarray
    separations: np.ndarray
    distances: np.ndarray
    exponent: float
    constant: float
    degenerate: bool
    energies: np.ndarray
    l2_distances: np.ndarray


def holder_scan(potential: PotentialSpec, kernel: KernelSpec, xi, points, opts: Optional[SolverOptions] = None,
                weight_radius: float = 2.0, l2_window: float = 4.0) -> HolderScanResult:
    """Centered optimal profiles along ``points``; fit ``log d ~ beta log|x - x'| + log L``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 6:
        raise ProfileError("a Hoelder scan needs at least six sample points")
    opts = opts or SolverOptions()
    k1 = _directional(kernel, xi)
    profiles, energies = [], []
    for x in pts:
        try:
            sol = solve_profile_descent(k1, potential.at(x), opts=opts)
        except Exception as exc:
            raise SolverFailure(f"profile solve failed: {exc}", point=x.tolist()) from exc
        profiles.append(center_profile(sol.profile)[0])
        energies.append(sol.energy)
    w = weight_sigma(k1, weight_radius)
    seps, dists, l2 = [], [], []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            seps.append(float(np.linalg.norm(pts[i] - pts[j])))
            dists.append(profile_distance(profiles[i], profiles[j], w))
            l2.append(profile_distance(profiles[i], profiles[j], kind="l2", window=l2_window))
    seps, dists = np.array(seps), np.array(dists)
    degenerate = bool(np.all(dists < 1e-12))
    if degenerate:
        beta, const = math.nan, 0.0
    else:
        ok = dists > 1e-14
        beta, logc = np.polyfit(np.log(seps[ok]), np.log(dists[ok]), 1)
        const = math.exp(logc)
    return HolderScanResult(pts, seps, dists, float(beta), float(const), degenerate,
                            np.array(energies), np.array(l2))


def measure_holder_in_t(gamma: MonotoneProfile, window: float, exponents: Sequence[float],
                        jump_factor: float = 50.0) -> dict:
    """Discrete Hoelder quotients ``max |g_i - g_j| / |t_i - t_j|^alpha`` over nodes in the window.

    A quotient is flagged when a single spacing carries a jump larger than
    ``jump_factor`` times the median one-step increment.
    """
    t = gamma.grid
    sel = np.abs(t) <= window + 1e-12
    tt, gg = t[sel], gamma.values[sel]
    dt_ = np.abs(tt[:, None] - tt[None, :])
    dg = np.abs(gg[:, None] - gg[None, :])
    off = dt_ > 0
    steps = np.abs(np.diff(gg))
    med = float(np.median(steps)) if steps.size else 0.0
    suspect = bool(steps.size and np.max(steps) > jump_factor * max(med, 1e-15) and np.max(steps) > 1e-8)
    out = {}
    for alpha in exponents:
        q = float(np.max(dg[off] / dt_[off] ** alpha)) if np.any(off) else 0.0
        out[float(alpha)] = {"seminorm": q, "discontinuity_suspected": suspect}
    return out


def transition_family(base, rho_to_wells: Callable[[float], tuple[float, float]],
                      scale: Callable[[float], float] = lambda r: 1.0) -> Callable[[float], Potential1D]:
    """``rho -> W_rho`` with ``W_rho(t) = scale(rho) * W_0(T_rho^{-1} t)`` for the affine well map ``T_rho``."""
    class _Mapped(Potential1D):
        def __init__(self, rho):
            self.a, self.b = rho_to_wells(rho)
            self.k = (base.b - base.a) / (self.b - self.a)
            self.s = scale(rho)

        def _back(self, t):
            return base.a + (np.asarray(t, dtype=float) - self.a) * self.k

        def W(self, t):
            return self.s * base.W(self._back(t))

        def dW(self, t):
            return self.s * self.k * base.dW(self._back(t))

        def d2W(self, t):
            return self.s * self.k ** 2 * base.d2W(self._back(t))

    return _Mapped


def continuous_dependence_sweep(family: Callable[[float], Potential1D], kernel: KernelLike,
                                rhos: Sequence[float], opts: Optional[SolverOptions] = None) -> dict:
    """Minimal energies along a family of potentials and their gaps to the ``rho = 0`` minimum."""
    opts = opts or SolverOptions()
    k1 = _as_line(kernel)
    base = solve_profile_descent(k1, family(0.0), opts=opts).energy
    rows = []
    for rho in rhos:
        e = solve_profile_descent(k1, family(float(rho)), opts=opts).energy
        rows.append({"rho": float(rho), "energy": e, "gap": abs(e - base), "relative_gap": abs(e - base) / base})
    return {"base_energy": base, "rows": rows, "final_relative_gap": rows[-1]["relative_gap"] if rows else 0.0}


def truncation_tensions(spec: KernelSpec, caps: Sequence[float], x, xi, potential,
                        opts: Optional[SolverOptions] = None) -> tuple[list, float]:
    """Surface tensions for the truncated kernels ``min(J, N)`` and for ``J`` itself."""
    out = [surface_tension(x, xi, truncate(spec, float(N)), potential, opts) for N in caps]
    return out, surface_tension(x, xi, spec, potential, opts)
