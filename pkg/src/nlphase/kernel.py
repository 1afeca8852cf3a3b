"""Interaction kernels: construction, rescaling, slicing, truncation and tail integrals.

All kernel families are radial, ``J(h) = j(|h|)``. One-dimensional work goes
through :class:`Kernel1D`, which exposes the density together with the tail
moments

    K_n(u) = int J(s) (s - u)_+^n / n! ds,      n = 0, 1, 2, 3,

so that ``K_0`` is the tail mass ``T`` and ``K_1`` the conjugate kernel ``K``.
Every energy in the package is assembled from differences of these moments,
which keeps power-law singularities at the origin exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "KernelError",
    "SingularOriginError",
    "KernelSpec",
    "Kernel1D",
    "DirectionalKernel1D",
    "HatKernel",
    "ClassReport",
    "gaussian",
    "exponential",
    "fractional",
    "custom",
    "kernel_eval",
    "radial_profile",
    "kernel_mass",
    "first_moment",
    "rescale",
    "truncate",
    "line_kernel",
    "directional_kernel",
    "hat_kernel",
    "tail_mass",
    "conjugate_kernel",
    "verify_class",
    "restrict_kernel",
    "fiber_kernel",
]


class KernelError(ValueError):
    """Invalid kernel construction or evaluation."""


class SingularOriginError(KernelError):
    """Evaluation of a singular kernel at the origin."""


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^(k+1)."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


# ---------------------------------------------------------------------------
# Specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Declarative description of an even radial kernel on R^m.

    Families and parameters:

    * ``gaussian``: ``sigma``; unit mass.
    * ``exponential``: ``rate``; unit mass, ``J ~ exp(-rate |h|)``.
    * ``fractional``: ``eta, lam, rho, tail_rate``; ``J = lam |h|^(-m-eta)``
      on ``|h| < rho`` continued by ``lam rho^(-m-eta) exp(-tail_rate (|h|-rho))``.
    * ``truncated``: ``base`` and ``cap``; ``J = min(J_base, cap)``.
    * ``custom``: ``radial`` callback ``r -> j(r)`` with a declared
      exponential ``tail_rate`` and optional ``singular_exponent`` eta.

    ``scale`` implements the rescaling ``J_eps(h) = eps^(-m) J(h / eps)``.
    """

    family: str
    dim: int = 1
    sigma: float = 1.0
    rate: float = 1.0
    eta: float = 0.5
    lam: float = 1.0
    rho: float = 1.0
    tail_rate: float = 1.0
    cap: float = math.inf
    base: Optional["KernelSpec"] = None
    radial: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    singular_exponent: Optional[float] = None
    name: str = ""
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise KernelError("dimension must be a positive integer")
        if self.family not in {"gaussian", "exponential", "fractional", "truncated", "custom"}:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.scale <= 0:
            raise KernelError("scale must be positive")
        if self.family == "fractional" and not 0.0 < self.eta < 1.0:
            raise KernelError("fractional exponent eta must lie in (0, 1)")
        if self.family == "truncated" and (self.base is None or not self.cap > 0):
            raise KernelError("truncated kernels need a base kernel and a positive cap")
        if self.family == "custom" and self.radial is None:
            raise KernelError("custom kernels need a radial density callback")

    @property
    def singular(self) -> bool:
        if self.family == "fractional":
            return True
        if self.family == "custom":
            return self.singular_exponent is not None
        return False

    @property
    def integrable(self) -> bool:
        return not self.singular

    def key(self) -> tuple:
        base = self.base.key() if self.base is not None else None
        custom_id = id(self.radial) if self.radial is not None else None
        return (self.family, self.dim, self.sigma, self.rate, self.eta, self.lam, self.rho,
                self.tail_rate, self.cap, base, custom_id, self.singular_exponent, self.scale)

    def describe(self) -> dict:
        out = {"family": self.family, "dim": self.dim, "scale": self.scale}
        if self.family == "gaussian":
            out["sigma"] = self.sigma
        elif self.family == "exponential":
            out["rate"] = self.rate
        elif self.family == "fractional":
            out.update(eta=self.eta, lam=self.lam, rho=self.rho, tail_rate=self.tail_rate)
        elif self.family == "truncated":
            out.update(cap=self.cap, base=self.base.describe())
        else:
            out.update(name=self.name, tail_rate=self.tail_rate,
                       singular_exponent=self.singular_exponent)
        return out


def gaussian(dim: int = 1, sigma: float = 1.0) -> KernelSpec:
    return KernelSpec("gaussian", dim=dim, sigma=float(sigma))


def exponential(dim: int = 1, rate: float = 1.0) -> KernelSpec:
    return KernelSpec("exponential", dim=dim, rate=float(rate))


def fractional(dim: int = 1, eta: float = 0.5, lam: float = 1.0, rho: float = 1.0,
               tail_rate: float = 1.0) -> KernelSpec:
    if not 0.0 < lam <= 1.0:
        raise KernelError("fractional amplitude lam must lie in (0, 1]")
    if rho <= 0 or tail_rate <= 0:
        raise KernelError("cutoff radius and tail rate must be positive")
    return KernelSpec("fractional", dim=dim, eta=float(eta), lam=float(lam), rho=float(rho),
                      tail_rate=float(tail_rate))


def custom(radial: Callable[[np.ndarray], np.ndarray], dim: int = 1, tail_rate: float = 1.0,
           singular_exponent: Optional[float] = None, name: str = "custom") -> KernelSpec:
    """Kernel from a radial density ``r -> j(r)``.

    ``tail_rate`` declares an exponential envelope for ``r`` large; when
    ``singular_exponent`` is set, ``j(r) ~ c r^(-dim-eta)`` is assumed near 0.
    """
    return KernelSpec("custom", dim=dim, radial=radial, tail_rate=float(tail_rate),
                      singular_exponent=singular_exponent, name=name)


# ---------------------------------------------------------------------------
# Radial densities
# ---------------------------------------------------------------------------


def _unit_radial(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    """Radial density at scale one."""
    m = spec.dim
    if spec.family == "gaussian":
        s = spec.sigma
        return (2.0 * math.pi * s * s) ** (-m / 2) * np.exp(-0.5 * (r / s) ** 2)
    if spec.family == "exponential":
        a = spec.rate
        c = a ** m / (sphere_area(m - 1) * math.gamma(m))
        return c * np.exp(-a * r)
    if spec.family == "fractional":
        p = m + spec.eta
        edge = spec.lam * spec.rho ** (-p)
        with np.errstate(divide="ignore", over="ignore"):
            inner = spec.lam * np.power(r, -p)
        outer = edge * np.exp(-spec.tail_rate * (r - spec.rho))
        return np.where(r < spec.rho, inner, outer)
    if spec.family == "truncated":
        return np.minimum(radial_profile(spec.base, r), spec.cap)
    return np.asarray(spec.radial(r), dtype=float).reshape(np.shape(r))


def radial_profile(spec: KernelSpec, r) -> np.ndarray:
    """Radial density ``j(r)`` including the scale factor."""
    r = np.abs(np.asarray(r, dtype=float))
    e = spec.scale
    if e == 1.0:
        return _unit_radial(spec, r)
    return e ** (-spec.dim) * _unit_radial(spec, r / e)


def kernel_eval(spec: KernelSpec, h) -> np.ndarray:
    """Evaluate ``J(h)``; ``h`` has trailing dimension ``m`` (scalars allowed for m = 1)."""
    h = np.asarray(h, dtype=float)
    if spec.dim == 1 and (h.ndim == 0 or h.shape[-1] != 1):
        r = np.abs(h)
    else:
        if h.shape[-1] != spec.dim:
            raise KernelError(f"point of dimension {h.shape[-1]} for a kernel on R^{spec.dim}")
        r = np.linalg.norm(h, axis=-1)
    if spec.singular and np.any(r == 0):
        raise SingularOriginError("singular-origin: kernel is unbounded at h = 0")
    return radial_profile(spec, r)


def _radial_integral(spec: KernelSpec, power: int) -> float:
    """``|S^{m-1}| int_0^inf j(r) r^(m-1+power) dr`` by adaptive quadrature."""
    m = spec.dim
    pts = _breakpoints(spec)
    f = lambda r: float(radial_profile(spec, r)) * r ** (m - 1 + power)
    total = 0.0
    edges = [0.0] + pts + [math.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += _quad(f, lo, hi)
    return sphere_area(m - 1) * total


def _breakpoints(spec: KernelSpec) -> list[float]:
    """Radii where the radial density has a kink, at the kernel's own scale."""
    pts: list[float] = []
    if spec.family == "fractional":
        pts.append(spec.rho)
    elif spec.family == "truncated":
        pts += _breakpoints(spec.base)
        s_cap = _cap_radius(spec)
        if s_cap > 0:
            pts.append(s_cap)
    return sorted({p * spec.scale for p in pts if p > 0})


def _cap_radius(spec: KernelSpec) -> float:
    """Radius where a truncated kernel meets its cap (0 when the cap is inactive)."""
    base = spec.base
    cap = spec.cap
    if not base.singular:
        peak = float(radial_profile(base, 0.0))
        if cap >= peak:
            return 0.0
    hi = 1.0 * base.scale
    while float(radial_profile(base, hi)) > cap:
        hi *= 2.0
    lo = hi / 2.0
    while float(radial_profile(base, lo)) <= cap and lo > 1e-300:
        lo /= 2.0
    return optimize.brentq(lambda r: float(radial_profile(base, r)) - cap, lo, hi,
                           xtol=1e-15 * hi, rtol=1e-15, maxiter=500)


def _quad(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Adaptive quadrature with geometric splitting of wide positive ranges."""
    if hi <= lo:
        return 0.0
    if math.isinf(hi):
        val, _ = integrate.quad(f, lo, math.inf, limit=400, epsabs=0.0, epsrel=1e-13)
        return val
    if lo > 0 and hi / lo > 8.0:
        edges = np.geomspace(lo, hi, int(math.ceil(math.log(hi / lo) / math.log(8.0))) + 1)
    elif lo == 0.0:
        edges = np.concatenate([[0.0], np.geomspace(hi * 1e-12, hi, 14)])
    else:
        edges = np.array([lo, hi])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, float(a), float(b), limit=200, epsabs=0.0, epsrel=1e-13)
        total += val
    return total


def kernel_mass(spec: KernelSpec) -> float:
    """Total mass; ``inf`` for kernels singular at the origin."""
    if spec.singular:
        return math.inf
    if spec.family in ("gaussian", "exponential"):
        return 1.0
    return _radial_integral(spec, 0)


def first_moment(spec: KernelSpec) -> float:
    """``int J(h) |h| dh``."""
    if spec.family == "gaussian":
        m, s = spec.dim, spec.sigma * spec.scale
        return s * math.sqrt(2.0) * math.gamma((m + 1) / 2) / math.gamma(m / 2)
    if spec.family == "exponential":
        return spec.dim / spec.rate * spec.scale
    if spec.family == "custom" and not _shells_decay(spec, 1):
        return math.inf
    return _radial_integral(spec, 1)


def _shells_decay(spec: KernelSpec, power: int, n_shells: int = 64) -> bool:
    """Whether the dyadic shells of ``int j(r) r^(m-1+power) dr`` become negligible."""
    m = spec.dim
    f = lambda r: float(radial_profile(spec, r)) * r ** (m - 1 + power)
    shells = []
    lo = spec.scale
    for _ in range(n_shells):
        val, _ = integrate.quad(f, lo, 2.0 * lo, limit=100)
        shells.append(val)
        lo *= 2.0
    total = sum(shells)
    return total == 0.0 or shells[-1] < 1e-6 * total


def rescale(spec: KernelSpec, eps: float) -> KernelSpec:
    """``J_eps(h) = eps^(-m) J(h/eps)``."""
    if not eps > 0:
        raise KernelError("domain error: rescaling factor must be positive")
    if eps == 1.0:
        return spec
    return replace(spec, scale=spec.scale * eps)


def truncate(spec: KernelSpec, cap: float) -> KernelSpec:
    """``J ^ N`` (pointwise minimum with the constant ``cap``)."""
    if not cap > 0:
        raise KernelError("truncation level must be positive")
    if spec.family == "truncated":
        return replace(spec, cap=min(spec.cap, float(cap)))
    if not spec.singular and cap >= float(radial_profile(spec, 0.0)):
        return spec
    return KernelSpec("truncated", dim=spec.dim, base=spec, cap=float(cap))


# ---------------------------------------------------------------------------
# One-dimensional kernels with tail moments
# ---------------------------------------------------------------------------


class Kernel1D:
    """Even kernel on the line with tail moments ``K_n``."""

    singular: bool = False
    mass: float = 1.0

    def density(self, s) -> np.ndarray:
        raise NotImplementedError

    def _moment_pos(self, n: int, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def moment(self, n: int, u) -> np.ndarray:
        """``K_n(u) = int J(s) (s-u)_+^n / n! ds`` for ``n`` in 0..3."""
        if n not in (0, 1, 2, 3):
            raise KernelError("moment order must be 0, 1, 2 or 3")
        u = np.asarray(u, dtype=float)
        if np.all(u >= 0):
            return self._moment_pos(n, u)
        if self.singular:
            raise KernelError("tail moments at negative arguments need an integrable kernel")
        neg = u < 0
        out = np.empty_like(u)
        out[~neg] = self._moment_pos(n, u[~neg])
        v = -u[neg]
        # x_+^n = x^n - (-1)^n (-x)_+^n, integrated against the even density
        poly = np.zeros_like(v)
        for k in range(0, n + 1, 2):
            mu_k = 2.0 * math.factorial(k) * float(self._moment_pos(k, np.zeros(1))[0])
            poly += math.comb(n, k) * mu_k * v ** (n - k)
        out[neg] = poly / math.factorial(n) - (-1) ** n * self._moment_pos(n, v)
        return out

    def tail(self, u) -> np.ndarray:
        return self.moment(0, u)

    def conj(self, u) -> np.ndarray:
        return self.moment(1, u)

    @property
    def first_moment(self) -> float:
        return 2.0 * float(self.moment(1, 0.0))

    def scaled(self, eps: float) -> "Kernel1D":
        if eps == 1.0:
            return self
        return _Scaled1D(self, eps)

    def support_radius(self, rel: float = 1e-14) -> float:
        """Radius beyond which the tail moments are negligible (relative to K_1(0))."""
        ref = float(self.moment(1, 0.0))
        r = 1.0
        while float(self.moment(1, r)) > rel * ref:
            r *= 1.5
        return r


class _Gaussian1D(Kernel1D):
    def __init__(self, sigma: float):
        self.sigma = float(sigma)
        self.sup = 1.0 / (math.sqrt(2 * math.pi) * self.sigma)

    def density(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-0.5 * (s / self.sigma) ** 2) * self.sup

    def _moment_pos(self, n, u):
        s = self.sigma
        z = u / s
        phi = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        tail = special.ndtr(-z)
        if n == 0:
            return tail
        if n == 1:
            return s * (phi - z * tail)
        if n == 2:
            return 0.5 * s * s * ((1 + z * z) * tail - z * phi)
        return s ** 3 / 6.0 * ((z * z + 2) * phi - (3 * z + z ** 3) * tail)


class _Exponential1D(Kernel1D):
    def __init__(self, rate: float):
        self.rate = float(rate)
        self.sup = 0.5 * self.rate

    def density(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * self.rate * np.exp(-self.rate * np.abs(s))

    def _moment_pos(self, n, u):
        return 0.5 * np.exp(-self.rate * u) / self.rate ** n


def _power_moment(n: int, u: np.ndarray, c: float, p: float, hi: float) -> np.ndarray:
    """``int_u^hi c s^(-p) (s-u)^n / n! ds`` for ``0 <= u <= hi`` and non-integer p."""
    out = np.zeros_like(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(n + 1):
            e = k - p + 1.0
            coef = math.comb(n, k) * (-1.0) ** (n - k)
            upper = u ** (n - k) * hi ** e
            lower = np.where(u > 0, u ** (n - k + e), 0.0 if n - k + e > 0 else np.inf)
            out += coef * (upper - lower) / e
    return c * out / math.factorial(n)


class _Fractional1D(Kernel1D):
    singular = True
    mass = math.inf

    def __init__(self, eta: float, lam: float, rho: float, tail_rate: float):
        self.eta, self.lam, self.rho, self.kappa = eta, lam, rho, tail_rate
        self.edge = lam * rho ** (-1.0 - eta)
        self.sup = math.inf

    def density(self, s):
        r = np.abs(np.asarray(s, dtype=float))
        if np.any(r == 0):
            raise SingularOriginError("singular-origin: kernel is unbounded at h = 0")
        return np.where(r < self.rho, self.lam * r ** (-1.0 - self.eta),
                        self.edge * np.exp(-self.kappa * (r - self.rho)))

    def _exp_part(self, n, d):
        """Moment of the exponential piece seen from distance ``d = rho - u >= 0``."""
        out = np.zeros_like(d)
        for k in range(n + 1):
            out += d ** (n - k) / math.factorial(n - k) / self.kappa ** (k + 1)
        return self.edge * out

    def _moment_pos(self, n, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        far = u >= self.rho
        out[far] = self.edge * np.exp(-self.kappa * (u[far] - self.rho)) / self.kappa ** (n + 1)
        near = ~far
        un = u[near]
        out[near] = (_power_moment(n, un, self.lam, 1.0 + self.eta, self.rho)
                     + self._exp_part(n, self.rho - un))
        return out


class _Truncated1D(Kernel1D):
    """``min(J, N)`` for a radially nonincreasing base kernel."""

    def __init__(self, base: Kernel1D, cap: float, s_cap: float):
        self.base, self.cap, self.s_cap = base, float(cap), float(s_cap)
        self.singular = False
        self.sup = min(cap, getattr(base, "sup", math.inf))
        if s_cap > 0:
            self._base_at = [float(base.moment(k, s_cap)) for k in range(4)]
            self.mass = 2.0 * (self._base_at[0] + cap * s_cap)
        else:
            self.mass = base.mass

    def density(self, s):
        r = np.abs(np.asarray(s, dtype=float))
        out = np.full_like(r, self.cap)
        far = r > self.s_cap
        if np.any(far):
            out[far] = np.minimum(self.base.density(r[far]), self.cap)
        return out

    def _moment_pos(self, n, u):
        u = np.asarray(u, dtype=float)
        if self.s_cap <= 0:
            return self.base._moment_pos(n, u)
        out = np.empty_like(u)
        far = u >= self.s_cap
        out[far] = self.base._moment_pos(n, u[far])
        d = self.s_cap - u[~far]
        acc = self.cap * d ** (n + 1) / math.factorial(n + 1)
        for k in range(n + 1):
            acc = acc + d ** (n - k) / math.factorial(n - k) * self._base_at[k]
        out[~far] = acc
        return out


class _Scaled1D(Kernel1D):
    def __init__(self, base: Kernel1D, eps: float):
        self.base, self.eps = base, float(eps)
        self.singular = base.singular
        self.mass = base.mass
        self.sup = getattr(base, "sup", math.inf) / eps

    def density(self, s):
        return self.base.density(np.asarray(s, dtype=float) / self.eps) / self.eps

    def _moment_pos(self, n, u):
        return self.eps ** n * self.base._moment_pos(n, np.asarray(u, dtype=float) / self.eps)

    def scaled(self, eps):
        return _Scaled1D(self.base, self.eps * eps)


# A_n weights: integral over the angular cap {cos(theta) > c} of
# (cos(theta) - c)^n / n!, used to slice a planar radial kernel along a line.
def _cap_weight(n: int, c: np.ndarray) -> np.ndarray:
    c = np.clip(c, -1.0, 1.0)
    th = np.arccos(c)
    s = np.sqrt(np.maximum(1.0 - c * c, 0.0))
    if n == 0:
        return 2.0 * th
    if n == 1:
        return 2.0 * (s - c * th)
    if n == 2:
        return 0.5 * ((1.0 + 2.0 * c * c) * th - 3.0 * c * s)
    return (2.0 * s - (2.0 / 3.0) * s ** 3 + 3.0 * c * c * s - (3.0 * c + 2.0 * c ** 3) * th) / 6.0


class _Tabulated1D(Kernel1D):
    """Numerically tabulated line kernel with exact power-law handling near 0.

    The density is sampled at composite Gauss-Legendre points on a mesh that is
    geometric near the origin; moments at mesh nodes are exact sums over the
    points above the node, and moments between nodes use cubic Hermite
    interpolation with the next lower moment as derivative. Below the first
    node the density is modeled as ``c0 s^(-1-eta) + b``.
    """

    GL_POINTS = 8

    def __init__(self, density: Callable[[np.ndarray], np.ndarray], *, length: float,
                 reach: float, eta: Optional[float], breaks: tuple[float, ...] = (),
                 ratio: float = 1.06, u_min_rel: float = 1e-7, lin_step_rel: float = 0.04):
        self._dens = density
        self.singular = eta is not None
        self.eta = eta
        u_min = u_min_rel * length
        geo = np.geomspace(u_min, length, int(math.ceil(math.log(1 / u_min_rel) / math.log(ratio))) + 1)
        lin = np.arange(length, reach + length * lin_step_rel, length * lin_step_rel)
        nodes = np.unique(np.concatenate([geo, lin, [b for b in breaks if u_min < b < reach]]))
        self.nodes = nodes
        x, w = np.polynomial.legendre.leggauss(self.GL_POINTS)
        a, b = nodes[:-1, None], nodes[1:, None]
        pts = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
        wts = (0.5 * (b - a) * w).ravel()
        vals = np.asarray(density(pts), dtype=float)
        self._pts, self._wj = pts, wts * vals
        self.j_nodes = np.asarray(density(nodes), dtype=float)
        # moments at nodes: sum over quadrature points above each node
        self.table = np.zeros((4, nodes.size))
        order = np.argsort(pts)
        pts_s, wj_s = pts[order], self._wj[order]
        for n in range(4):
            for i, u in enumerate(nodes):
                sel = pts_s > u
                d = pts_s[sel] - u
                self.table[n, i] = np.sum(wj_s[sel] * d ** n) / math.factorial(n)
        # near-origin model
        s0 = nodes[0]
        if self.singular:
            s1 = nodes[1]
            j0, j1 = self.j_nodes[0], self.j_nodes[1]
            p = 1.0 + eta
            c0 = (j0 - j1) / (s0 ** -p - s1 ** -p)
            self._c0, self._b0 = c0, j0 - c0 * s0 ** -p
        else:
            self._c0, self._b0 = 0.0, float(self.j_nodes[0])
        self._moments_all = [float(np.sum(self._wj * pts ** k)) for k in range(4)]
        self.u_min = s0
        self.reach = nodes[-1]
        if self.singular:
            self.mass = math.inf
            self.sup = math.inf
        else:
            self.mass = 2.0 * float(self.moment(0, 0.0))
            self.sup = float(self._b0)

    def density(self, s):
        r = np.abs(np.asarray(s, dtype=float))
        if self.singular and np.any(r == 0):
            raise SingularOriginError("singular-origin: kernel is unbounded at h = 0")
        return np.asarray(self._dens(r), dtype=float)

    def _near_origin(self, n, u):
        """Moments for ``0 <= u < u_min``: mesh contribution plus the modeled cell."""
        out = np.zeros_like(u)
        for k in range(n + 1):
            out += math.comb(n, k) * (-u) ** (n - k) * self._moments_all[k]
        out /= math.factorial(n)
        s0 = self.u_min
        if self._c0 != 0.0:
            out += _power_moment(n, u, self._c0, 1.0 + self.eta, s0)
        out += self._b0 * (s0 - u) ** (n + 1) / math.factorial(n + 1)
        return out

    def _moment_pos(self, n, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        lo = u < self.u_min
        if np.any(lo):
            out[lo] = self._near_origin(n, u[lo])
        mid = (~lo) & (u < self.reach)
        if np.any(mid):
            um = u[mid]
            nodes = self.nodes
            i = np.clip(np.searchsorted(nodes, um, side="right") - 1, 0, nodes.size - 2)
            x0, x1 = nodes[i], nodes[i + 1]
            h = x1 - x0
            t = (um - x0) / h
            f0, f1 = self.table[n, i], self.table[n, i + 1]
            if n == 0:
                d0, d1 = -self.j_nodes[i], -self.j_nodes[i + 1]
            else:
                d0, d1 = -self.table[n - 1, i], -self.table[n - 1, i + 1]
            h00 = 2 * t ** 3 - 3 * t ** 2 + 1
            h10 = t ** 3 - 2 * t ** 2 + t
            h01 = -2 * t ** 3 + 3 * t ** 2
            h11 = t ** 3 - t ** 2
            out[mid] = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1
        return out


def _slice_density(spec: KernelSpec, r_cut: float) -> Callable[[np.ndarray], np.ndarray]:
    """``J^xi(t)`` for a planar radial kernel.

    With ``y = t sinh(w)`` the line integral becomes
    ``2 int_0^inf j(t cosh w) t cosh w dw``, whose integrand is smooth between
    the kinks of ``j``; it is evaluated by composite Gauss-Legendre panels of
    unit width, vectorized over ``t``.
    """
    brk = [b for b in _breakpoints(spec) if b < r_cut]
    x, w = np.polynomial.legendre.leggauss(16)

    def at_zero() -> float:
        if spec.singular:
            return math.inf
        f = lambda y: float(radial_profile(spec, y))
        edges = [0.0] + brk + [r_cut]
        return 2.0 * sum(_quad(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))

    def dens(t):
        t = np.abs(np.asarray(t, dtype=float))
        flat = t.ravel()
        out = np.zeros_like(flat)
        ok = (flat > 0) & (flat < r_cut)
        tv = flat[ok]
        if tv.size:
            bounds = [np.zeros_like(tv)]
            for b in brk:
                bounds.append(np.arccosh(np.maximum(b / tv, 1.0)))
            bounds.append(np.arccosh(r_cut / tv))
            acc = np.zeros_like(tv)
            for lo, hi in zip(bounds[:-1], bounds[1:]):
                width = hi - lo
                n_pan = max(1, int(math.ceil(float(width.max()))))
                for k in range(n_pan):
                    a = lo + width * k / n_pan
                    bb = lo + width * (k + 1) / n_pan
                    half = 0.5 * (bb - a)
                    wpts = half[:, None] * x[None, :] + (0.5 * (a + bb))[:, None]
                    rr = tv[:, None] * np.cosh(wpts)
                    acc += half * np.sum(w[None, :] * radial_profile(spec, rr) * rr, axis=1)
            out[ok] = 2.0 * acc
        if np.any(flat == 0):
            out[flat == 0] = at_zero()
        return out.reshape(t.shape)

    return dens


def _reach(spec: KernelSpec, length: float) -> float:
    """Radius beyond which the kernel (and its first moments) is below 1e-17 relative."""
    j_ref = float(radial_profile(spec, length))
    r = length
    while True:
        r *= 1.25
        if float(radial_profile(spec, r)) * r ** (spec.dim + 3) < 1e-18 * max(j_ref, 1e-300) * length ** (spec.dim + 3):
            return r


def _build_line_kernel(spec: KernelSpec) -> Kernel1D:
    if spec.scale != 1.0:
        # the slice of J_eps is the eps-rescaling of the slice of J
        return _build_line_kernel(replace(spec, scale=1.0)).scaled(spec.scale)
    fam, m = spec.family, spec.dim
    if fam == "gaussian":
        return _Gaussian1D(spec.sigma)
    if m == 1 and fam == "exponential":
        return _Exponential1D(spec.rate)
    if m == 1 and fam == "fractional":
        return _Fractional1D(spec.eta, spec.lam, spec.rho, spec.tail_rate)
    if m == 1 and fam == "truncated":
        return _Truncated1D(line_kernel(spec.base), spec.cap, _cap_radius(spec))
    if fam == "custom":
        eta = spec.singular_exponent
    elif fam == "fractional":
        eta = spec.eta
    else:
        eta = None
    if fam == "fractional":
        length = spec.rho
    elif fam == "exponential":
        length = 1.0 / spec.rate
    elif fam == "truncated" and _cap_radius(spec) > 0:
        length = _cap_radius(spec)
    else:
        length = 1.0
    reach = _reach(spec, length)
    if m == 1:
        dens = lambda t: radial_profile(spec, t)
    elif m == 2:
        dens = _slice_density(spec, reach)
    else:
        raise KernelError("numerical slicing is implemented for m <= 2 (Gaussians: any m)")
    return _Tabulated1D(dens, length=length, reach=reach, eta=eta,
                        breaks=tuple(_breakpoints(spec)))


@lru_cache(maxsize=64)
def _line_kernel_cached(key: tuple, spec: KernelSpec) -> Kernel1D:
    return _build_line_kernel(spec)


def line_kernel(spec: KernelSpec) -> Kernel1D:
    """The one-dimensional kernel ``J^xi`` (``J`` itself when m = 1).

    Radial kernels give the same slice for every direction.
    """
    return _line_kernel_cached(spec.key(), spec)


def tail_mass(kernel, u) -> np.ndarray:
    """``T(u) = int_{r >= u} J(r) dr``."""
    return _as_line(kernel).moment(0, u)


def conjugate_kernel(kernel, u) -> np.ndarray:
    """``K(u) = int J(s) (s - u)_+ ds``; ``K' = -T``."""
    return _as_line(kernel).moment(1, u)


def _as_line(kernel) -> Kernel1D:
    if isinstance(kernel, Kernel1D):
        return kernel
    if isinstance(kernel, DirectionalKernel1D):
        return kernel.kernel
    if isinstance(kernel, KernelSpec):
        if kernel.dim != 1:
            raise KernelError("expected a one-dimensional kernel; slice it first")
        return line_kernel(kernel)
    raise KernelError(f"not a kernel: {kernel!r}")


# ---------------------------------------------------------------------------
# Directional kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectionalKernel1D:
    """``J^xi`` with its cell discretization on a symmetric offset grid."""

    kernel: Kernel1D
    spacing: float
    half_width: float
    offsets: np.ndarray
    cell_weights: np.ndarray
    tail_first_moment: float
    singular: bool
    direction: tuple

    def density(self, t) -> np.ndarray:
        return self.kernel.density(t)


def directional_kernel(spec: KernelSpec, xi=None, spacing: Optional[float] = None,
                       half_width: Optional[float] = None) -> DirectionalKernel1D:
    """Slice ``J`` along the unit vector ``xi`` and tabulate exact cell weights.

    Cell ``j`` is ``[s_j - ds/2, s_j + ds/2]``; its weight is the tail-mass
    difference, so singular cells are integrated exactly. The origin cell of a
    singular kernel has infinite weight.
    """
    m = spec.dim
    if xi is None:
        xi = np.eye(m)[0]
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != m or not math.isclose(float(np.linalg.norm(xi)), 1.0, rel_tol=1e-9):
        raise KernelError("direction must be a unit vector in R^m")
    k1 = line_kernel(spec)
    if half_width is None:
        half_width = k1.support_radius(1e-9)
    if spacing is None:
        spacing = half_width / 256.0
    if half_width < spacing:
        raise KernelError("domain error: grid half-width smaller than one spacing")
    n = int(math.floor(half_width / spacing + 1e-9))
    offsets = spacing * np.arange(-n, n + 1)
    pos = spacing * np.arange(1, n + 1)
    w_pos = k1.moment(0, pos - spacing / 2) - k1.moment(0, pos + spacing / 2)
    w0 = math.inf if k1.singular else k1.mass - 2.0 * float(k1.moment(0, spacing / 2))
    weights = np.concatenate([w_pos[::-1], [w0], w_pos])
    edge = n * spacing + spacing / 2
    tail = 2.0 * (float(k1.moment(1, edge)) + edge * float(k1.moment(0, edge)))
    return DirectionalKernel1D(kernel=k1, spacing=float(spacing), half_width=float(n * spacing),
                               offsets=offsets, cell_weights=weights, tail_first_moment=tail,
                               singular=k1.singular, direction=tuple(xi.tolist()))


# ---------------------------------------------------------------------------
# Hat kernel
# ---------------------------------------------------------------------------


@dataclass
class HatKernel:
    """``J_hat(h) = |h| int_1^inf J(r h) r^(m-1) dr``, cached on a radial grid."""

    base: KernelSpec
    radii: np.ndarray
    values: np.ndarray
    total_mass: float
    first_moment: float

    def __call__(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        r = np.abs(h) if self.base.dim == 1 and (h.ndim == 0 or h.shape[-1] != 1) else np.linalg.norm(h, axis=-1)
        return self.radial(r)

    def radial(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        lr = np.log(np.maximum(r, self.radii[0]))
        lv = np.interp(lr, np.log(self.radii), np.log(np.maximum(self.values, 1e-300)))
        out = np.exp(lv)
        out = np.where(r > self.radii[-1], 0.0, out)
        return out


def _hat_radial(spec: KernelSpec, r: float) -> float:
    """``r^(1-m) int_r^inf j(s) s^(m-1) ds``."""
    m = spec.dim
    f = lambda s: float(radial_profile(spec, s)) * s ** (m - 1)
    brk = [b for b in _breakpoints(spec) if b > r]
    edges = [r] + brk + [math.inf]
    val = sum(_quad(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    return r ** (1 - m) * val


def hat_kernel(spec: KernelSpec, n_grid: int = 400) -> HatKernel:
    """Build the hat kernel and check its mass against the first moment."""
    fm = first_moment(spec)
    if not math.isfinite(fm):
        raise KernelError("infinite-hat-mass: the first moment of the kernel diverges")
    m = spec.dim
    reach = _reach(spec, spec.scale * (spec.rho if spec.family == "fractional" else 1.0))
    radii = np.geomspace(reach * 1e-9, reach, n_grid)
    values = np.array([_hat_radial(spec, float(r)) for r in radii])
    # total mass by integrating the hat kernel itself (independent of fm)
    g = lambda r: _hat_radial(spec, r) * r ** (m - 1)
    brk = _breakpoints(spec)
    edges = [0.0] + brk + [reach, math.inf]
    total = sum(_quad_nested(g, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    total *= sphere_area(m - 1)
    return HatKernel(base=spec, radii=radii, values=values, total_mass=total, first_moment=fm)


def _quad_nested(g: Callable[[float], float], lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    if math.isinf(hi):
        val, _ = integrate.quad(g, lo, math.inf, limit=200, epsabs=0.0, epsrel=1e-11)
        return val
    if lo == 0.0:
        edges = np.concatenate([[0.0], np.geomspace(hi * 1e-10, hi, 12)])
    else:
        edges = np.array([lo, hi])
    return sum(integrate.quad(g, float(a), float(b), limit=200, epsabs=0.0, epsrel=1e-11)[0]
               for a, b in zip(edges[:-1], edges[1:]))


# ---------------------------------------------------------------------------
# Class membership, restriction, fibers
# ---------------------------------------------------------------------------


@dataclass
class ClassReport:
    in_class: bool
    lower_ok: bool
    upper_ok: bool
    far_first_moment: float
    witnesses: list = field(default_factory=list)
    lam_effective: float = 0.0


def _sample_radii(rho: float, n: int = 60) -> np.ndarray:
    return np.geomspace(rho * 1e-6, rho * (1 - 1e-9), n)


def verify_class(spec: KernelSpec, eta: float, lam: float, rho: float,
                 n_samples: int = 60) -> ClassReport:
    """Sample the power-law sandwich on the punctured ball and the far first moment."""
    m = spec.dim
    r = _sample_radii(rho, n_samples)
    j = radial_profile(spec, r)
    lower = lam * r ** (-m - eta)
    upper = 1.0 / (lam * r ** (m + eta))
    tol = 1e-12
    witnesses = []
    low_bad = j < lower * (1 - tol)
    up_bad = j > upper * (1 + tol)
    for ri, ji, lo_b, up_b in zip(r, j, low_bad, up_bad):
        if lo_b:
            witnesses.append({"radius": float(ri), "value": float(ji), "bound": "lower"})
        if up_b:
            witnesses.append({"radius": float(ri), "value": float(ji), "bound": "upper"})
    f = lambda s: float(radial_profile(spec, s)) * s ** m
    brk = [b for b in _breakpoints(spec) if b > rho]
    edges = [rho] + brk + [math.inf]
    far = sphere_area(m - 1) * sum(_quad(f, a, b) for a, b in zip(edges[:-1], edges[1:]))
    lam_eff = float(np.min(j * r ** (m + eta)))
    lower_ok, upper_ok = not low_bad.any(), not up_bad.any()
    return ClassReport(in_class=bool(lower_ok and upper_ok and math.isfinite(far)),
                       lower_ok=bool(lower_ok), upper_ok=bool(upper_ok),
                       far_first_moment=far, witnesses=witnesses, lam_effective=lam_eff)


@dataclass(frozen=True)
class RestrictedKernel:
    """``J^V(x) = int_{V-perp} J(y + x) dy`` as a radial kernel on ``V``."""

    spec: KernelSpec
    parent: KernelSpec
    basis: np.ndarray = field(compare=False)

    @property
    def mass(self) -> float:
        return kernel_mass(self.spec)


def restrict_kernel(spec: KernelSpec, basis) -> RestrictedKernel:
    """Integrate out the orthogonal complement of the subspace spanned by ``basis``."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    k, m = basis.shape
    if m != spec.dim or k >= m:
        raise KernelError("subspace must have dimension smaller than m")
    q, _ = np.linalg.qr(basis.T)
    if spec.family == "gaussian":
        return RestrictedKernel(replace(spec, dim=k), spec, q.T)
    codim = m - k
    brk = _breakpoints(spec)

    def radial(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            f = lambda y: float(radial_profile(spec, math.hypot(ri, y))) * y ** (codim - 1)
            cuts = [math.sqrt(b * b - ri * ri) for b in brk if b > ri]
            edges = [0.0] + cuts + [math.inf]
            out[i] = sphere_area(codim - 1) * sum(_quad(f, a, b) for a, b in zip(edges[:-1], edges[1:]))
        return out

    sub = custom(radial, dim=k, tail_rate=spec.tail_rate,
                 singular_exponent=spec.eta if spec.singular else None, name="restricted")
    return RestrictedKernel(sub, spec, q.T)


def restricted_mass(rk: RestrictedKernel) -> float:
    """Mass of a restricted kernel by nested quadrature over V."""
    sub = rk.spec
    if sub.family == "gaussian":
        return 1.0
    m = sub.dim
    brk = _breakpoints(rk.parent)
    f = lambda r: float(np.ravel(radial_profile(sub, r))[0]) * r ** (m - 1)
    edges = [0.0] + brk + [math.inf]
    return sphere_area(m - 1) * sum(_quad_nested(f, a, b) for a, b in zip(edges[:-1], edges[1:]))


def fiber_kernel(spec: KernelSpec, z) -> Callable[[np.ndarray], np.ndarray]:
    """``K^z(s) = J(s z) |s|^(m-1)`` for ``z`` on the affine plane ``xi + xi-perp``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != spec.dim:
        raise KernelError("fiber point must live in R^m")
    m = spec.dim
    zn = float(np.linalg.norm(z))

    def fib(s):
        s = np.asarray(s, dtype=float)
        return radial_profile(spec, np.abs(s) * zn) * np.abs(s) ** (m - 1)

    return fib
