"""Fields on rectangles: energies, limit functional, recovery fields and sweeps.

Fields are piecewise constant on a uniform grid of square cells. Pair
interactions use exact cell-pair weights

    w(k) = int_{cell_0} int_{cell_k} J_eps(x - x') dx' dx,

so every discrete identity (additivity over cell unions, symmetry of the
locality defect) holds to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi, roots_legendre

from .kernel import (HatKernel, KernelSpec, _breakpoints, hat_kernel, line_kernel,
                     radial_profile, rescale, sphere_area)
from .potential import PotentialSpec, WellPair
from .profile1d import (ProfileError, SolverOptions, _directional, center_profile,
                        solve_profile_descent, surface_tension)


class FieldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Fields and polyhedral phases
# ---------------------------------------------------------------------------


@dataclass
class PhaseField:
    """Cell values on ``[lo, hi]`` (a segment or a rectangle) with square cells.

    ``values`` has one axis per dimension; index ``[i, j]`` is the cell whose
    centre is ``lo + dx * (i + 1/2, j + 1/2)``.
    """

    lo: np.ndarray
    dx: float
    values: np.ndarray
    bound: float = math.inf

    def __post_init__(self) -> None:
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.values = np.clip(np.asarray(self.values, dtype=float), -self.bound, self.bound)
        if self.values.ndim != self.lo.size:
            raise FieldError("values must have one axis per dimension of the domain")
        if not self.dx > 0:
            raise FieldError("cell size must be positive")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.dx * np.array(self.shape)

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    def centers(self) -> np.ndarray:
        axes = [self.lo[d] + self.dx * (np.arange(n) + 0.5) for d, n in enumerate(self.shape)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids, axis=-1)

    def with_values(self, values: np.ndarray) -> "PhaseField":
        return PhaseField(self.lo.copy(), self.dx, values, self.bound)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], lo, hi, n: int,
                      bound: float = math.inf) -> "PhaseField":
        """Sample ``func`` at cell centres of a grid with ``n`` cells along the first axis."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        dx = float(hi[0] - lo[0]) / n
        counts = np.rint((hi - lo) / dx).astype(int)
        if not np.allclose(lo + counts * dx, hi, rtol=0, atol=1e-9 * dx):
            raise FieldError("the rectangle must be tiled by square cells")
        empty = cls(lo, dx, np.zeros(tuple(counts)), bound)
        return empty.with_values(np.asarray(func(empty.centers()), dtype=float))


def rectangle_mask(u: PhaseField, lo, hi) -> np.ndarray:
    """Cells whose centre lies in the box ``[lo, hi)``."""
    c = u.centers()
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    return np.all((c >= lo) & (c < hi), axis=-1)


@dataclass(frozen=True)
class Face:
    """Flat interface ``p0 -> p1`` with unit normal ``normal`` pointing into the z2 side."""

    p0: tuple
    p1: tuple
    normal: tuple

    def __post_init__(self) -> None:
        p0, p1, nu = (np.asarray(v, dtype=float) for v in (self.p0, self.p1, self.normal))
        if not math.isclose(float(np.linalg.norm(nu)), 1.0, rel_tol=1e-9):
            raise FieldError("face normals must have unit length")
        if p0.size == 2 and abs(float(np.dot(p1 - p0, nu))) > 1e-9 * max(1.0, float(np.linalg.norm(p1 - p0))):
            raise FieldError("the face normal must be orthogonal to the face")

    @property
    def length(self) -> float:
        if len(self.p0) == 1:
            return 1.0
        return float(np.linalg.norm(np.subtract(self.p1, self.p0)))

    def point(self, s) -> np.ndarray:
        """Point at arclength fraction ``s`` in [0, 1]."""
        s = np.asarray(s, dtype=float)[..., None]
        return np.asarray(self.p0) + s * (np.asarray(self.p1) - np.asarray(self.p0))

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - np.asarray(self.p0)) @ np.asarray(self.normal)

    def foot(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Arclength fraction of the projection onto the face (clamped) and signed distance."""
        pts = np.asarray(pts, dtype=float)
        t = self.signed_distance(pts)
        if len(self.p0) == 1:
            return np.zeros(t.shape), t
        p0, p1 = np.asarray(self.p0), np.asarray(self.p1)
        d = p1 - p0
        s = ((pts - p0) @ d) / float(d @ d)
        return np.clip(s, 0.0, 1.0), t

    def distance(self, pts: np.ndarray) -> np.ndarray:
        s, t = self.foot(pts)
        if len(self.p0) == 1:
            return np.abs(t)
        return np.linalg.norm(np.asarray(pts, dtype=float) - self.point(s), axis=-1)


@dataclass(frozen=True)
class PolyhedralPhase:
    """Two-valued phase whose jump set is a union of flat faces.

    Each point takes the side of its nearest face: ``z2`` where the normal of
    that face points, ``z1`` elsewhere. ``regions`` optionally gives each face
    its own sub-rectangle for per-face recovery runs.
    """

    faces: tuple
    lo: tuple
    hi: tuple
    regions: Optional[tuple] = None

    def __post_init__(self) -> None:
        if not self.faces:
            raise FieldError("a polyhedral phase needs at least one face")
        if self.regions is not None and len(self.regions) != len(self.faces):
            raise FieldError("one region per face is required")

    @classmethod
    def horizontal(cls, height: float = 0.5, lo=(0.0, 0.0), hi=(1.0, 1.0), upper: str = "z2") -> "PolyhedralPhase":
        sign = 1.0 if upper == "z2" else -1.0
        face = Face((lo[0], height), (hi[0], height), (0.0, sign))
        return cls((face,), tuple(lo), tuple(hi))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def region(self, i: int) -> tuple:
        return (tuple(self.lo), tuple(self.hi)) if self.regions is None else self.regions[i]

    def upper_side(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        dist = np.stack([f.distance(pts) for f in self.faces])
        near = np.argmin(dist, axis=0)
        side = np.stack([f.signed_distance(pts) > 0 for f in self.faces])
        return np.take_along_axis(side, near[None], axis=0)[0]

    def field(self, wells: WellPair, n: int, bound: float = math.inf) -> PhaseField:
        """The CP function ``z1 / z2`` sampled at cell centres."""
        def func(c):
            z1, z2 = wells.values(c)
            return np.where(self.upper_side(c), z2, z1)
        return PhaseField.from_function(func, self.lo, self.hi, n, bound)

    def total_length(self) -> float:
        return sum(f.length for f in self.faces)


# ---------------------------------------------------------------------------
# Cell-pair weights
# ---------------------------------------------------------------------------


_NEGLECTED = 1e-6


def _outside_mass(spec: KernelSpec, r: float) -> float:
    """Mass of the kernel outside the ball of radius ``r``."""
    if spec.family == "gaussian":
        s = spec.sigma * spec.scale
        if spec.dim == 1:
            return math.erfc(r / (s * math.sqrt(2.0)))
        if spec.dim == 2:
            return math.exp(-0.5 * (r / s) ** 2)
    m = spec.dim
    f = lambda x: float(radial_profile(spec, x)) * x ** (m - 1)
    edges = [r] + [b for b in _breakpoints(spec) if b > r] + [math.inf]
    val = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val += integrate.quad(f, lo, hi, limit=200, epsabs=0.0, epsrel=1e-10)[0]
    return sphere_area(m - 1) * val


def cutoff_radius(spec: KernelSpec, dx: float, extent: float) -> tuple[float, float]:
    """Interaction radius and the mass left outside, relative to the mass beyond one cell.

    The radius is capped at ``extent`` (the domain diameter), beyond which no
    pair exists and nothing is neglected.
    """
    ref = _outside_mass(spec, dx)
    r = dx
    while r < extent and _outside_mass(spec, r) > _NEGLECTED * ref:
        r *= 1.25
    if r >= extent:
        return extent, 0.0
    return r, _outside_mass(spec, r) / ref


def _second_difference_1d(spec: KernelSpec, dx: float, k: np.ndarray) -> np.ndarray:
    """Exact line cell-pair masses from the first tail moment: ``K'' = J``."""
    k1 = line_kernel(spec)
    k = np.abs(np.asarray(k, dtype=float))
    out = np.empty(k.shape)
    near = k == 0
    far = ~near
    if np.any(far):
        kf = k[far]
        out[far] = (k1.moment(1, (kf - 1) * dx) - 2.0 * k1.moment(1, kf * dx)
                    + k1.moment(1, (kf + 1) * dx))
    if np.any(near):
        if spec.singular:
            out[near] = math.inf
        else:
            out[near] = k1.mass * dx + 2.0 * (k1.moment(1, dx) - k1.moment(1, 0.0))
    return out


@lru_cache(maxsize=8)
def _gauss_rules(n: int, eta: float):
    x, w = roots_legendre(n)
    gl = (0.5 * (x + 1.0), 0.5 * w)
    if eta > 0:
        xj, wj = roots_jacobi(n, 0.0, -eta)
        s = 0.5 * (xj + 1.0)
        wj = wj * 2.0 ** (eta - 1.0)
        return gl, (s, wj)
    return gl, gl


def _tent_integral_2d(spec: KernelSpec, dx: float, offsets: np.ndarray, order: int) -> np.ndarray:
    """``dx^4 int_{[-1,1]^2} J(dx (k + z)) (1-|z1|)(1-|z2|) dz`` for integer offsets ``k``.

    Each quadrant of the tent is integrated separately. When the singular
    point ``z = -k`` is a vertex of a quadrant, the quadrant is split into two
    triangles through that vertex and integrated in Duffy coordinates with a
    Gauss-Jacobi rule that absorbs the ``r^(-eta)`` factor.
    """
    eta = float(spec.eta if spec.family == "fractional" else (spec.singular_exponent or 0.0)) if spec.singular else 0.0
    (gx, gw), (jx, jw) = _gauss_rules(order, eta)
    k = np.asarray(offsets, dtype=float)
    out = np.zeros(k.shape[0])
    near = np.max(np.abs(k), axis=1) <= 1
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            # local coordinates (a, b) in [0,1]^2 with z = (sx a, sy b)
            a = gx[:, None]
            b = gx[None, :]
            wt = gw[:, None] * gw[None, :]
            far_k = k[~near]
            if far_k.size:
                h1 = dx * (far_k[:, 0, None, None] + sx * a[None])
                h2 = dx * (far_k[:, 1, None, None] + sy * b[None])
                tent = (1.0 - a) * (1.0 - b)
                vals = radial_profile(spec, np.hypot(h1, h2)) * (tent * wt)[None]
                out[~near] += vals.sum(axis=(1, 2))
            for idx in np.flatnonzero(near):
                out[idx] += _near_quadrant(spec, dx, k[idx], sx, sy, (gx, gw), (jx, jw), eta)
    return dx ** 4 * out


def _near_quadrant(spec, dx, k, sx, sy, gl, gj, eta) -> float:
    gx, gw = gl
    # singular vertex of this quadrant in local coordinates, if any
    va = -k[0] * sx
    vb = -k[1] * sy
    vertex = va in (0.0, 1.0) and vb in (0.0, 1.0)
    if not vertex or not spec.singular:
        a, b = gx[:, None], gx[None, :]
        h = dx * np.hypot(k[0] + sx * a, k[1] + sy * b)
        return float(np.sum(radial_profile(spec, h) * (1 - a) * (1 - b) * gw[:, None] * gw[None, :]))
    jx, jw = gj
    total = 0.0
    # Duffy triangles: (p, q) = distances from the vertex along the two axes
    s = jx[:, None]
    w = gx[None, :]
    for swap in (False, True):
        p = s * (1.0 if not swap else w)
        q = s * (w if not swap else 1.0)
        a = np.abs(va - p)
        b = np.abs(vb - q)
        hz = dx * np.hypot(k[0] + sx * a, k[1] + sy * b)
        f = radial_profile(spec, hz) * (1 - a) * (1 - b) * s
        f = f * s ** eta  # the Jacobi weight carries s^(-eta)
        total += float(np.sum(f * jw[:, None] * gw[None, :]))
    return total


@dataclass(frozen=True)
class PairWeights:
    """Cell-pair weights for offsets in a half space (``k`` and ``-k`` share a weight)."""

    offsets: np.ndarray
    weights: np.ndarray
    radius: float
    neglected: float


_WEIGHT_CACHE: dict = {}


def pair_weights(spec: KernelSpec, dx: float, shape: Sequence[int], order: int = 8) -> PairWeights:
    """Weights ``w(k)`` for every nonzero offset up to the cutoff radius, half space only."""
    shape = tuple(int(n) for n in shape)
    key = (spec.key(), round(dx, 15), shape, order)
    if key in _WEIGHT_CACHE:
        return _WEIGHT_CACHE[key]
    m = len(shape)
    if spec.dim != m:
        raise FieldError(f"kernel on R^{spec.dim} for a field on R^{m}")
    extent = dx * math.sqrt(sum(n * n for n in shape))
    radius, neglected = cutoff_radius(spec, dx, extent)
    reach = [min(n - 1, int(math.ceil(radius / dx)) + 1) for n in shape]
    if m == 1:
        k = np.arange(1, reach[0] + 1)[:, None]
        w = _second_difference_1d(spec, dx, k[:, 0])
    else:
        k1, k2 = np.meshgrid(np.arange(0, reach[0] + 1), np.arange(-reach[1], reach[1] + 1), indexing="ij")
        k = np.stack([k1.ravel(), k2.ravel()], axis=1)
        half = (k[:, 0] > 0) | ((k[:, 0] == 0) & (k[:, 1] > 0))
        k = k[half]
        gap = np.maximum(np.abs(k) - 1, 0)
        dist = dx * np.hypot(gap[:, 0], gap[:, 1])
        k = k[(dist <= radius) | (np.max(np.abs(k), axis=1) <= 1)]
        if spec.family == "gaussian":
            line = KernelSpec("gaussian", dim=1, sigma=spec.sigma, scale=spec.scale)
            w = _second_difference_1d(line, dx, k[:, 0]) * _second_difference_1d(line, dx, k[:, 1])
        else:
            w = _tent_integral_2d(spec, dx, k, order)
    out = PairWeights(k.astype(int), np.asarray(w, dtype=float), radius, neglected)
    if len(_WEIGHT_CACHE) > 32:
        _WEIGHT_CACHE.clear()
    _WEIGHT_CACHE[key] = out
    return out


def _shifted_pairs(arr: np.ndarray, k: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Views ``(arr[p], arr[p + k])`` over all cells ``p`` with ``p + k`` in range."""
    src, dst = [], []
    for n, kd in zip(arr.shape, k):
        if kd >= 0:
            src.append(slice(0, n - kd))
            dst.append(slice(kd, n))
        else:
            src.append(slice(-kd, n))
            dst.append(slice(0, n + kd))
    return arr[tuple(src)], arr[tuple(dst)]


def _pair_sum(u: np.ndarray, pw: PairWeights, mask_a: np.ndarray, mask_b: np.ndarray,
              both_orders: bool) -> float:
    """``sum_k w(k) sum_p a_p b_{p+k} (u_p - u_{p+k})^2`` over the stored half space.

    With ``both_orders`` the mirrored offsets ``-k`` are added, which equals
    swapping the roles of the two masks.
    """
    total = 0.0
    for k, w in zip(pw.offsets, pw.weights):
        u0, u1 = _shifted_pairs(u, k)
        a0, _ = _shifted_pairs(mask_a, k)
        _, b1 = _shifted_pairs(mask_b, k)
        d2 = (u0 - u1) ** 2
        s = float(np.sum(d2[a0 & b1]))
        if both_orders:
            b0, _ = _shifted_pairs(mask_b, k)
            _, a1 = _shifted_pairs(mask_a, k)
            s += float(np.sum(d2[b0 & a1]))
        total += w * s
    return total


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyParts:
    nonlocal_part: float
    potential_part: float
    neglected_mass: float

    @property
    def total(self) -> float:
        return self.nonlocal_part + self.potential_part


def energy_parts(u: PhaseField, kernel: KernelSpec, potential: PotentialSpec, eps: float,
                 mask: Optional[np.ndarray] = None, order: int = 8) -> EnergyParts:
    """Nonlocal and potential parts of the rescaled energy on the cells in ``mask``."""
    if not eps > 0:
        raise FieldError("eps must be positive")
    spec = rescale(kernel, eps)
    pw = pair_weights(spec, u.dx, u.shape, order)
    m = np.ones(u.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    pair = _pair_sum(u.values, pw, m, m, both_orders=False)
    nonlocal_part = pair / (2.0 * eps)
    wv = potential.field_values(u.centers()[m], u.values[m])
    pot = float(np.sum(wv)) * u.cell_volume / eps
    return EnergyParts(nonlocal_part, pot, pw.neglected)


def energy_eps(u: PhaseField, kernel: KernelSpec, potential: PotentialSpec, eps: float,
               mask: Optional[np.ndarray] = None) -> float:
    """``(1/4eps) sum J_eps |u(x') - u(x)|^2 + (1/eps) sum W(x, u(x))`` over cells."""
    return energy_parts(u, kernel, potential, eps, mask).total


def locality_defect(u: PhaseField, mask_a: np.ndarray, mask_b: np.ndarray, kernel: KernelSpec,
                    eps: float) -> float:
    """Cross interaction ``(1/4eps) sum_{p in A, q in B} w(q - p) (u_p - u_q)^2``."""
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if np.any(a & b):
        raise FieldError("the two cell sets must be disjoint")
    pw = pair_weights(rescale(kernel, eps), u.dx, u.shape)
    return _pair_sum(u.values, pw, a, b, both_orders=True) / (4.0 * eps)


def defect_crude_bound(u: PhaseField, mask_a: np.ndarray, mask_b: np.ndarray, kernel: KernelSpec,
                       eps: float) -> float:
    """``(M^2/eps)`` times the kernel mass joining the two sets, with ``M = max |u|``."""
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    pw = pair_weights(rescale(kernel, eps), u.dx, u.shape)
    ones = np.ones(u.shape)
    zeros = np.zeros(u.shape)
    # the pair sum of a field that is 1 on A and 0 on B counts each A-B pair once
    mass = _pair_sum(np.where(a, ones, zeros), pw, a, b, both_orders=True)
    big = float(np.max(np.abs(u.values[a | b]))) if np.any(a | b) else 0.0
    return big * big * mass / eps


# ---------------------------------------------------------------------------
# Limit functional
# ---------------------------------------------------------------------------


def limit_energy(phase: PolyhedralPhase, kernel: KernelSpec, potential: PotentialSpec,
                 order: int = 8, opts: Optional[SolverOptions] = None) -> float:
    """Sum over faces of the Gauss-Legendre quadrature of the surface tension."""
    x, w = roots_legendre(order)
    total = 0.0
    for face in phase.faces:
        s = 0.5 * (x + 1.0)
        pts = face.point(s)
        vals = [surface_tension(p, face.normal, kernel, potential, opts) for p in pts]
        total += 0.5 * face.length * float(np.dot(w, vals))
    return total


# ---------------------------------------------------------------------------
# Recovery fields
# ---------------------------------------------------------------------------


@dataclass
class ProfileFamily:
    """Centered optimal profiles at nodes along a face, stored relative to the wells.

    ``profiles[j]`` is the centered profile at ``face.point(nodes[j])`` or
    ``None`` when that solve is missing.
    """

    face: Face
    nodes: np.ndarray
    profiles: list
    energies: np.ndarray

    def normalized(self, j: int, t: np.ndarray) -> np.ndarray:
        g = self.profiles[j]
        if g is None:
            y = self.face.point(self.nodes[j])
            raise ProfileError(f"missing profile at node s={self.nodes[j]:.6g} (point {np.round(y, 6).tolist()})")
        v = g.evaluate(t)
        return (2.0 * v - g.a - g.b) / (g.b - g.a)

    def evaluate(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Normalized profile value in [-1, 1] at face fraction ``s`` and normal time ``t``.

        Linear interpolation in ``s`` between neighbouring nodes.
        """
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        nodes = self.nodes
        if nodes.size == 1:
            return self.normalized(0, t)
        j = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, nodes.size - 2)
        lam = np.clip((s - nodes[j]) / (nodes[j + 1] - nodes[j]), 0.0, 1.0)
        out = np.empty(np.broadcast(s, t).shape)
        for jj in np.unique(j):
            sel = j == jj
            tt = t[sel]
            out[sel] = (1.0 - lam[sel]) * self.normalized(int(jj), tt) + lam[sel] * self.normalized(int(jj) + 1, tt)
        return out


def chebyshev_nodes(n: int) -> np.ndarray:
    """Chebyshev-Lobatto points on [0, 1] (endpoints included)."""
    if n == 1:
        return np.array([0.5])
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))


def solve_profile_family(face: Face, kernel: KernelSpec, potential: PotentialSpec, n_nodes: int = 5,
                         opts: Optional[SolverOptions] = None) -> ProfileFamily:
    """Solve and center the optimal profile at Chebyshev nodes along the face.

    Homogeneous wells need a single solve; it is reused at every node.
    """
    opts = opts or SolverOptions()
    nodes = chebyshev_nodes(n_nodes)
    k1 = _directional(kernel, face.normal)
    profiles, energies = [], []
    cache: dict = {}
    for s in nodes:
        y = face.point(s)
        W = potential.at(y)
        key = (repr(W),) if potential.params.get("kind") == "quartic" else None
        if key is not None and key in cache:
            g, e = cache[key]
        else:
            sol = solve_profile_descent(k1, W, opts=opts)
            g, e = center_profile(sol.profile)[0], sol.energy
            if key is not None:
                cache[key] = (g, e)
        profiles.append(g)
        energies.append(e)
    return ProfileFamily(face, nodes, profiles, np.array(energies))


def default_omega(eps: float) -> float:
    return math.sqrt(eps)


def build_recovery(phase: PolyhedralPhase, family: ProfileFamily, wells: WellPair, eps: float,
                   omega: float, n: int, bound: float = math.inf) -> PhaseField:
    """Glue the stretched, clamped profiles across the single face of ``phase``.

    With ``a = 1/(1 - omega/2)`` the value at ``x = y + t xi`` is the affine
    transport from ``[z1(y), z2(y)]`` to ``[z1(x), z2(x)]`` of

        clamp(mid(y) + a (gamma_y(t/eps) - mid(y)), z1(y), z2(y)).
    """
    if len(phase.faces) != 1:
        raise FieldError("recovery fields are built for one face at a time")
    if not 0.0 <= omega < 2.0:
        raise FieldError("omega must lie in [0, 2)")
    face = phase.faces[0]
    stretch = 1.0 / (1.0 - 0.5 * omega)
    lo, hi = phase.lo, phase.hi
    probe = PhaseField.from_function(lambda c: np.zeros(c.shape[:-1]), lo, hi, n, bound)
    c = probe.centers()
    s, t = face.foot(c)
    z1x, z2x = wells.values(c)
    q = family.evaluate(s, t / eps)
    q = np.clip(stretch * q, -1.0, 1.0)  # clamp of the stretched normalized profile
    # clamped ends land exactly on the wells at x
    lam = 0.5 * (q + 1.0)
    vals = np.where(q <= -1.0, z1x, np.where(q >= 1.0, z2x, lam * z2x + (1.0 - lam) * z1x))
    return probe.with_values(vals)


@dataclass
class SweepRow:
    eps: float
    omega: float
    energy: float
    limit: float
    gap: float
    relative_gap: float
    nonlocal_part: float
    potential_part: float


def gamma_sweep(phase: PolyhedralPhase, kernel: KernelSpec, potential: PotentialSpec,
                eps_list: Sequence[float], omega: Union[Callable[[float], float], float, None] = None,
                n: int = 96, n_nodes: int = 5, opts: Optional[SolverOptions] = None,
                limit_order: int = 8) -> list[SweepRow]:
    """Recovery energies against the limit functional for each ``eps``.

    Multi-face phases are handled face by face on their own regions and summed.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise FieldError("the eps list is empty")
    if omega is None:
        omega = default_omega
    om = omega if callable(omega) else (lambda e, w=float(omega): w)
    wells = potential.wells
    runs = []
    limit = 0.0
    for i, face in enumerate(phase.faces):
        lo, hi = phase.region(i)
        sub = PolyhedralPhase((face,), tuple(lo), tuple(hi))
        fam = solve_profile_family(face, kernel, potential, n_nodes, opts)
        limit += limit_energy(sub, kernel, potential, limit_order, opts)
        runs.append((sub, fam))
    rows = []
    for e in eps_list:
        w = float(om(e))
        nl = pot = 0.0
        for sub, fam in runs:
            width = float(sub.hi[0] - sub.lo[0])
            u = build_recovery(sub, fam, wells, e, w, int(round(n * width / (phase.hi[0] - phase.lo[0]))),
                               potential.growth_bound)
            parts = energy_parts(u, kernel, potential, e)
            nl += parts.nonlocal_part
            pot += parts.potential_part
        total = nl + pot
        rows.append(SweepRow(e, w, total, limit, abs(total - limit), abs(total - limit) / limit, nl, pot))
    return rows


# ---------------------------------------------------------------------------
# Traces and phase extraction
# ---------------------------------------------------------------------------


def _lookup(u: PhaseField, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell values at points and a flag for points inside the field domain."""
    rel = (np.asarray(pts, dtype=float) - u.lo) / u.dx
    idx = np.floor(rel).astype(int)
    shape = np.array(u.shape)
    inside = np.all((idx >= 0) & (idx < shape), axis=-1)
    idx = np.clip(idx, 0, shape - 1)
    return u.values[tuple(np.moveaxis(idx, -1, 0))], inside


def eps_trace_gap(u: PhaseField, face: Face, trace: Callable[[np.ndarray], np.ndarray], kernel: KernelSpec,
                  eps: float, side: Optional[np.ndarray] = None, hat: Optional[HatKernel] = None,
                  n_face: int = 64, n_radius: int = 64, n_angle: int = 64) -> float:
    """``int_face int Jhat(h) |u(y + eps h) - v(y)| dh dy`` over ``h`` with ``y + eps h`` in the domain.

    ``side`` optionally restricts ``y + eps h`` to cells where it is true.
    The ``h`` integral uses polar Gauss-Legendre rules on a geometric radius
    split adapted to the hat kernel's reach.
    """
    hat = hat or hat_kernel(kernel)
    sx, sw = roots_legendre(n_face)
    s = 0.5 * (sx + 1.0)
    ws = 0.5 * sw * face.length
    y = face.point(s)
    v = np.asarray(trace(y), dtype=float)
    r_max = float(hat.radii[-1])
    edges = np.concatenate([[0.0], np.geomspace(r_max * 1e-6, r_max, 12)])
    rx, rw = roots_legendre(max(4, n_radius // 12))
    radii, rwts = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        radii.append(lo + 0.5 * (rx + 1.0) * (hi - lo))
        rwts.append(0.5 * rw * (hi - lo))
    r = np.concatenate(radii)
    wr = np.concatenate(rwts) * hat.radial(r)
    if u.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
        wdir = np.ones(2)
    else:
        th = 2.0 * np.pi * (np.arange(n_angle) + 0.5) / n_angle
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        wdir = np.full(n_angle, 2.0 * np.pi / n_angle)
        wr = wr * r  # polar Jacobian
    h = r[:, None, None] * dirs[None, :, :]                      # (nr, nd, m)
    pts = y[:, None, None, :] + eps * h[None]                    # (ny, nr, nd, m)
    val, inside = _lookup(u, pts)
    if side is not None:
        sval, _ = _lookup(u.with_values(np.asarray(side, dtype=float)), pts)
        inside = inside & (sval > 0.5)
    integrand = np.abs(val - v[:, None, None]) * inside
    return float(np.einsum("i,j,k,ijk->", ws, wr, wdir, integrand))


@dataclass
class ExtractedPhase:
    cp: PhaseField
    l1gap: float
    projected: PhaseField


def extract_phase(u: PhaseField, potential: PotentialSpec, delta: float) -> ExtractedPhase:
    """Project onto ``[z1(x), z2(x)]`` then pick ``z2`` within ``delta`` of it and ``z1`` elsewhere."""
    c = u.centers()
    z1, z2 = potential.wells.values(c)
    proj = np.clip(u.values, z1, z2)
    cp = np.where(np.abs(proj - z2) <= delta, z2, z1)
    gap = float(np.sum(np.abs(u.values - cp))) * u.cell_volume
    return ExtractedPhase(u.with_values(cp), gap, u.with_values(proj))


def project_to_wells(u: PhaseField, wells: WellPair) -> PhaseField:
    z1, z2 = wells.values(u.centers())
    return u.with_values(np.clip(u.values, z1, z2))


def hat_l1_norm(kernel: KernelSpec) -> float:
    """``||Jhat||_{L1}``, by integrating the hat kernel itself."""
    return hat_kernel(kernel).total_mass


def divided_defect_bound(kernel: KernelSpec, sup: float, length: float) -> float:
    """``||Jhat||_1 * sup|u| * length`` for sets divided by a flat piece of that length."""
    return hat_l1_norm(kernel) * sup * length


__all__ = [
    "FieldError", "PhaseField", "Face", "PolyhedralPhase", "rectangle_mask", "PairWeights",
    "pair_weights", "cutoff_radius", "EnergyParts", "energy_parts", "energy_eps", "locality_defect",
    "defect_crude_bound", "limit_energy", "ProfileFamily", "chebyshev_nodes", "solve_profile_family",
    "default_omega", "build_recovery", "SweepRow", "gamma_sweep", "eps_trace_gap", "ExtractedPhase",
    "extract_phase", "project_to_wells", "hat_l1_norm", "divided_defect_bound",
]
