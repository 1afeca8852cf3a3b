import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlphase import kernel as K
from nlphase import oracle as O
from nlphase import potential as P
from nlphase import profile1d as PR


class ScaledParabola(P.Potential1D):
    """``c (1 - t^2)`` on [-1, 1]; vanishes at the wells but is not smooth there."""

    def __init__(self, c):
        self.a, self.b, self.c = -1.0, 1.0, c

    def W(self, t):
        t = np.asarray(t, dtype=float)
        return self.c * np.clip(1.0 - t * t, 0.0, None)

    def dW(self, t):
        return -2.0 * self.c * np.asarray(t, dtype=float)

    def d2W(self, t):
        return -2.0 * self.c + 0.0 * np.asarray(t, dtype=float)


class Bowl(P.Potential1D):
    """``(t - a)(b - t)`` used as a test integrand."""

    def __init__(self, a=-1.0, b=1.0):
        self.a, self.b = a, b

    def W(self, t):
        t = np.asarray(t, dtype=float)
        return (t - self.a) * (self.b - t)


def sin_profile(R=6.0, dt=0.0625):
    return PR.make_grid_profile(lambda t: np.sin(0.5 * np.pi * np.clip(t, -3, 3) / 3), R, dt, -1.0, 1.0)


def sign_profile(n=64, dt=0.125):
    # nodes at half-integers so the cell edge sits at the origin
    return PR.MonotoneProfile(np.where(np.arange(n) < n // 2, -1.0, 1.0), -(n // 2 - 0.5) * dt, dt, -1.0, 1.0)


@pytest.fixture(scope="module")
def manufactured():
    g = K.gaussian(1)
    g0 = sin_profile()
    return g, g0, P.manufacture_potential(g0, g)


def random_profile(rng, n=80, dt=0.1):
    steps = rng.exponential(1.0, n + 1) * (rng.random(n + 1) < 0.7)
    steps[rng.integers(0, n + 1)] += 0.5
    vals = np.clip(-1.0 + 2.0 * np.cumsum(steps)[:-1] / steps.sum(), -1.0, 1.0)
    return PR.MonotoneProfile(vals, -0.5 * (n - 1) * dt, dt, -1.0, 1.0)


# energy


def test_step_energy_matches_closed_form(gauss1, quartic):
    step = PR.make_grid_profile(lambda t: np.where(t < 0.0, -1.0, 1.0), 8, 0.05, -1, 1)
    ref = 2.0 * O.reference_quadrature("moment", {"kernel": gauss1, "u": 0.0, "order": 1}).value
    assert PR.energy_1d(step, gauss1, quartic) == pytest.approx(ref, rel=1e-12)


def test_smooth_energy_matches_oracle(gauss1, quartic):
    g = PR.make_grid_profile(lambda t: np.tanh(t / 1.5), 10, 0.02, -1, 1)
    ref = O.reference_quadrature("energy", {"kernel": gauss1, "potential": quartic,
                                            "profile": lambda x: np.tanh(x / 1.5), "window": 10.0})
    assert abs(PR.energy_1d(g, gauss1, quartic) - ref.value) / ref.value < 1e-4


def test_energy_translation_invariant(gauss1, quartic):
    g = PR.make_grid_profile(np.tanh, 6, 0.05, -1, 1)
    e = PR.energy_1d(g, gauss1, quartic)
    assert PR.energy_1d(g.shifted(5 * g.dt), gauss1, quartic) == e


def test_energy_tail_mismatch(gauss1):
    g = PR.make_grid_profile(np.tanh, 4, 0.1, -1, 1)
    with pytest.raises(PR.InfiniteEnergyError, match="infinite-energy"):
        PR.energy_1d(g, gauss1, P.quartic_1d(-1.0, 2.0))


def test_energy_of_well_field_vanishes_in_one_dimension(gauss1):
    from nlphase import field as F
    spec = P.make_quartic_moving(P.constant_wells(-1.0, 1.0), 0.25)
    u = F.PhaseField.from_function(lambda c: np.full(c.shape[:-1], -1.0), (0.0,), (4.0,), 64)
    assert F.energy_eps(u, gauss1, spec, 0.3) == 0.0


# the nonlocal operator


def test_lj_ignores_constant_offsets(gauss1):
    g = PR.make_grid_profile(np.tanh, 4, 0.1, -1, 1)
    lifted = PR.MonotoneProfile(g.values + 0.7, g.start, g.dt, g.a + 0.7, g.b + 0.7)
    assert np.allclose(PR.apply_LJ(g, gauss1), PR.apply_LJ(lifted, gauss1), atol=1e-13)


def test_lj_of_sign_at_origin(gauss1):
    g = PR.make_grid_profile(np.sign, 4, 0.1, -1, 1)
    assert abs(float(PR.apply_LJ(g, gauss1, [g.n // 2])[0])) < 1e-15


def test_manufactured_el_residual(manufactured):
    k, g0, W = manufactured
    r = np.abs(PR.apply_LJ(g0, k) - W.dW(g0.values))
    moving = (g0.values > g0.a) & (g0.values < g0.b)
    assert r[moving].max() < 1e-4


# solvers


def test_descent_keeps_exact_profile(manufactured):
    k, g0, W = manufactured
    sol = PR.solve_profile_descent(k, W, opts=PR.SolverOptions(R=6.0, dt=0.0625, init=g0))
    assert sol.iterations == 0 and sol.converged
    assert np.array_equal(sol.profile.values, g0.values)


def test_descent_recovers_manufactured(manufactured):
    k, g0, W = manufactured
    sol = PR.solve_profile_descent(k, W, opts=PR.SolverOptions(R=6.0, dt=0.0625, init="step"))
    assert sol.converged
    assert np.all(np.diff(sol.history) <= 0)
    w = PR.weight_sigma(k, 2.0)
    d = PR.profile_distance(PR.center_profile(sol.profile)[0], PR.center_profile(g0)[0], w)
    assert d < 1e-3


def test_descent_stationarity_and_interior(gauss1, quartic):
    sol = PR.solve_profile_descent(gauss1, quartic, opts=PR.SolverOptions(R=6.0, dt=1 / 16))
    assert sol.converged and sol.residual < 1e-8
    assert np.all(np.diff(sol.history) <= 0)
    v = sol.profile.values
    assert np.all((v > -1.0) & (v < 1.0))
    assert np.all(np.diff(v) > 0)


def test_picard_fixed_point_of_manufactured(manufactured):
    k, g0, W = manufactured
    sol = PR.solve_profile_picard(k, W, opts=PR.PicardOptions(R=6.0, dt=0.0625, init=g0))
    assert sol.iterations == 0
    assert sol.residual < 1e-8


def test_picard_agrees_with_descent(gauss1, quartic):
    d = PR.solve_profile_descent(gauss1, quartic, opts=PR.SolverOptions(R=6.0, dt=1 / 16))
    p = PR.solve_profile_picard(gauss1, quartic, opts=PR.PicardOptions(R=6.0, dt=1 / 16))
    assert p.converged
    w = PR.weight_sigma(gauss1, 2.0)
    assert PR.profile_distance(PR.center_profile(d.profile)[0], PR.center_profile(p.profile)[0], w) < 1e-3


def test_wells_are_picard_fixed_points(quartic):
    for z in (quartic.a, quartic.b):
        assert float(quartic.P(z + quartic.dW(z))) == z


def test_picard_rejects_noninvertible_q(gauss1):
    with pytest.raises(P.QNonInvertibleError):
        PR.solve_profile_picard(gauss1, P.quartic_1d(-1.0, 1.0, 1.0))


# generalized inverse


def test_inverse_identity_at_nodes():
    g = PR.make_grid_profile(np.tanh, 4, 0.1, -1, 1)
    v = PR.invert_profile(g, mode="linear")
    assert np.allclose(v(g.values), g.grid, atol=1e-12)


def test_inverse_of_sign_is_zero():
    v = PR.invert_profile(sign_profile(), mode="cell")
    s = np.linspace(-0.99, 0.99, 21)
    assert np.all(v(s) == 0.0)
    lv, jumps = v.atoms()
    assert lv.size == 0 and v.total_mass() == 0.0


@pytest.mark.parametrize("mode", ["cell", "linear"])
def test_inverse_round_trip(mode, rng):
    g = random_profile(rng)
    v = PR.invert_profile(g, mode=mode)
    back = PR.profile_from_inverse(v, g.start, g.dt, g.n)
    assert np.max(np.abs(back.values - g.values)) < 1e-12


# conjugate functional


@pytest.mark.parametrize("seed", range(4))
def test_conjugate_identity(seed, gauss1, quartic):
    g = random_profile(np.random.default_rng(seed))
    F = PR.energy_1d(g, gauss1, quartic)
    Fo = PR.conjugate_energy(PR.invert_profile(g), gauss1, quartic)
    assert abs(Fo - F) <= max(1e-3 * F, 1e-6)


@pytest.mark.parametrize("G", [P.quartic_1d(), Bowl()])
def test_change_of_variables(G, rng):
    g = random_profile(rng)
    direct = g.dt * float(np.sum(G.W(g.values)))
    _, via_inverse = PR.conjugate_parts(PR.invert_profile(g), K.gaussian(1), G)
    assert via_inverse == pytest.approx(direct, rel=1e-6)


@given(s1=st.integers(0, 10 ** 6), s2=st.integers(0, 10 ** 6))
def test_conjugate_convex(s1, s2):
    k, W = K.gaussian(1), P.quartic_1d()
    v1 = PR.invert_profile(random_profile(np.random.default_rng(s1), n=30), mode="linear")
    v2 = PR.invert_profile(random_profile(np.random.default_rng(s2), n=30), mode="linear")
    mid = v1.map_average(v2)
    lhs = PR.conjugate_energy(mid, k, W)
    rhs = 0.5 * PR.conjugate_energy(v1, k, W) + 0.5 * PR.conjugate_energy(v2, k, W)
    assert lhs <= rhs + 1e-10


# the H operator


def test_h_of_zero_map(gauss1):
    v = PR.invert_profile(sign_profile(), mode="cell")
    s = np.linspace(-0.95, 0.95, 39)
    assert np.allclose(PR.apply_H(v, gauss1, s), (1 - s * s) / 2, atol=1e-14)
    ref = O.reference_quadrature("H", {"kernel": gauss1, "s": 0.0})
    assert float(PR.apply_H(v, gauss1, 0.0)[0]) == pytest.approx(ref.value, abs=1e-8)


def test_h_against_oracle_for_linear_map(gauss1):
    g = PR.make_grid_profile(lambda t: np.clip(t / 0.8, -1, 1), 2, 0.01, -1, 1)
    v = PR.invert_profile(g, mode="linear")
    ref = O.reference_quadrature("H", {"kernel": gauss1, "s": 0.3, "v": lambda t: 0.8 * t})
    assert float(PR.apply_H(v, gauss1, 0.3)[0]) == pytest.approx(ref.value, abs=1e-6)


def test_h_vanishes_at_ends(gauss1, rng):
    v = PR.invert_profile(random_profile(rng), mode="linear")
    vals = PR.apply_H(v, gauss1, [-1.0 + 1e-9, 1.0 - 1e-9])
    assert np.all(vals < 1e-7)
    assert np.all(PR.apply_H(v, gauss1, [-1.0, 1.0]) == 0.0)


@given(seed=st.integers(0, 10 ** 6))
def test_h_bound(seed):
    k = K.gaussian(1)
    v = PR.invert_profile(random_profile(np.random.default_rng(seed), n=40), mode="linear")
    s = np.linspace(-0.999, 0.999, 101)
    assert np.max(PR.apply_H(v, k, s) - PR.h_bound(s, -1.0, 1.0)) <= 1e-8


# optimality certificate


def test_certificate_passes_on_manufactured(manufactured):
    k, g0, W = manufactured
    cert = PR.certify_optimality(g0, k, W, tol=1e-6, mode="linear")
    assert cert.passed and cert.sup_gap < 1e-6 and cert.support_gap < 1e-6


def test_certificate_fails_on_perturbed(manufactured):
    k, g0, W = manufactured
    vals = g0.values.copy()
    i = int(np.argmin(np.abs(g0.grid - 1.0)))
    vals[i - 3:i + 4] += np.array([0, 0.02, 0.04, 0.05, 0.04, 0.02, 0])
    bumped = PR.MonotoneProfile(np.maximum.accumulate(np.clip(vals, -1, 1)), g0.start, g0.dt, -1, 1)
    cert = PR.certify_optimality(bumped, k, W, tol=1e-6, mode="linear")
    assert not cert.passed and cert.support_gap > 1e-6
    assert PR.energy_1d(bumped, k, W) > PR.energy_1d(g0, k, W)


def test_sign_profile_threshold(gauss1):
    # the sign profile is certified exactly when W >= (1 - s^2)/2
    g = sign_profile()
    assert PR.certify_optimality(g, gauss1, ScaledParabola(0.6)).passed
    assert PR.certify_optimality(g, gauss1, ScaledParabola(0.5)).passed
    cert = PR.certify_optimality(g, gauss1, ScaledParabola(0.4))
    assert not cert.passed and cert.n_support == 0


def test_certificate_sound_on_tiny_instance(gauss1):
    g0 = PR.make_grid_profile(lambda t: np.sin(0.5 * np.pi * np.clip(t, -1.5, 1.5) / 1.5), 2.0, 4.0 / 11, -1, 1)
    W = P.manufacture_potential(g0, gauss1)
    # the coarse grid leaves a ~1e-6 discretization gap in the table lookup
    cert = PR.certify_optimality(g0, gauss1, W, tol=1e-5, mode="linear")
    assert cert.passed
    inst = O.TinyInstance(gauss1, W, R=2.0, n_nodes=12, n_levels=9)
    brute = O.brute_profile(inst)
    assert brute.energy >= PR.energy_1d(g0, gauss1, W) - 1e-5


# centering, weights, distances


def test_centering(gauss1, quartic):
    g = PR.make_grid_profile(np.tanh, 6, 0.05, -1, 1)
    c, k = PR.center_profile(g)
    assert k == 0.0
    moved = g.shifted(5 * g.dt)
    c2, k2 = PR.center_profile(moved)
    assert k2 == pytest.approx(5 * g.dt, abs=1e-12)
    assert PR.energy_1d(c2, gauss1, quartic) == PR.energy_1d(g, gauss1, quartic)


def test_weight_sigma(gauss1):
    w = PR.weight_sigma(gauss1, 2.0)
    t = np.linspace(-6, 6, 121)
    vals = w(t)
    assert np.all((vals > 0) & (vals <= 1))
    assert np.allclose(vals, w(-t), rtol=1e-14)
    assert float(w(0.0)[0]) == pytest.approx(float(K.kernel_eval(gauss1, 4.0)), rel=1e-12)
    assert float(w(0.0)[0]) == pytest.approx(0.000134, abs=5e-7)


def test_distance_basics():
    step = PR.make_grid_profile(lambda t: np.where(t < 0.0, -1.0, 1.0), 4, 0.1, -1, 1)
    assert PR.profile_distance(step, step) == 0.0
    assert PR.profile_distance(step, step.shifted(step.dt)) == pytest.approx(step.dt * 2.0, rel=1e-12)


@given(seeds=st.tuples(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6), st.integers(0, 10 ** 6)))
def test_distance_triangle(seeds):
    g1, g2, g3 = (random_profile(np.random.default_rng(s), n=40) for s in seeds)
    w = PR.weight_sigma(K.gaussian(1), 2.0)
    d = lambda x, y: PR.profile_distance(x, y, w)
    assert d(g1, g3) <= d(g1, g2) + d(g2, g3) + 1e-12
    assert d(g1, g2) == pytest.approx(d(g2, g1), rel=1e-14)


# tensions and scans


def test_tension_even_and_homogeneous(gauss2):
    spec = P.make_quartic_moving(P.constant_wells(-1.0, 1.0, 2), 0.25)
    opts = PR.SolverOptions(R=6.0, dt=1 / 16)
    xi = np.array([0.6, 0.8])
    s1 = PR.surface_tension([0.1, 0.2], xi, gauss2, spec, opts, use_cache=False)
    s2 = PR.surface_tension([0.1, 0.2], -xi, gauss2, spec, opts, use_cache=False)
    s3 = PR.surface_tension([0.7, 0.4], xi, gauss2, spec, opts, use_cache=False)
    assert s1 == pytest.approx(s2, rel=1e-12)
    assert s1 == pytest.approx(s3, rel=1e-12)


def test_tension_cache_shares_opposite_directions(gauss2):
    PR.clear_tension_cache()
    spec = P.make_quartic_moving(P.constant_wells(-1.0, 1.0, 2), 0.25)
    opts = PR.SolverOptions(R=6.0, dt=1 / 16)
    a = PR.surface_tension([0.0, 0.0], [0.0, 1.0], gauss2, spec, opts)
    assert len(PR._TENSION_CACHE) == 1
    assert PR.surface_tension([0.0, 0.0], [0.0, -1.0], gauss2, spec, opts) == a
    assert len(PR._TENSION_CACHE) == 1


def test_holder_scan_degenerate(gauss1):
    spec = P.make_quartic_moving(P.constant_wells(-1.0, 1.0), 0.25)
    res = PR.holder_scan(spec, gauss1, 1.0, np.linspace(0, 0.5, 6), PR.SolverOptions(R=6.0, dt=1 / 16))
    assert res.degenerate and math.isnan(res.exponent)


def test_holder_scan_needs_six_points(gauss1):
    spec = P.make_quartic_moving(P.constant_wells(-1.0, 1.0), 0.25)
    with pytest.raises(PR.ProfileError):
        PR.holder_scan(spec, gauss1, 1.0, np.linspace(0, 0.5, 5))


def test_holder_in_t_ramp_and_step():
    ramp = PR.MonotoneProfile(np.linspace(-2, 2, 41), -2.0, 0.1, -2.5, 2.5)
    q = PR.measure_holder_in_t(ramp, 1.0, [1.0, 0.5])
    assert q[1.0]["seminorm"] == pytest.approx(1.0, rel=1e-12)
    assert q[0.5]["seminorm"] == pytest.approx(math.sqrt(2.0), rel=1e-12)
    step = PR.make_grid_profile(lambda t: np.where(t < 0.05, -1.0, 1.0), 2, 0.1, -1, 1)
    qs = PR.measure_holder_in_t(step, 1.0, [0.5])[0.5]
    assert qs["seminorm"] >= 2.0 / 0.1 ** 0.5 - 1e-12
    assert qs["discontinuity_suspected"]


def test_holder_in_t_stable_under_refinement(quartic):
    fr = K.fractional(1, eta=0.5)
    vals = []
    for dt in (1 / 32, 1 / 64):
        sol = PR.solve_profile_descent(fr, quartic, opts=PR.SolverOptions(R=8.0, dt=dt))
        c, _ = PR.center_profile(sol.profile)
        vals.append(PR.measure_holder_in_t(c, 2.0, [0.25])[0.25]["seminorm"])
    assert 0.8 <= vals[1] / vals[0] <= 1.25


def test_contdep_constant_family(gauss1, quartic):
    fam = lambda rho: quartic
    res = PR.continuous_dependence_sweep(fam, gauss1, [0.1, 0.05], PR.SolverOptions(R=6.0, dt=1 / 16))
    assert all(r["gap"] == 0.0 for r in res["rows"])


def test_contdep_zero_row_is_base(gauss1, quartic):
    fam = PR.transition_family(quartic, lambda r: (-1.0 - r, 1.0 + r))
    res = PR.continuous_dependence_sweep(fam, gauss1, [0.0, 0.05], PR.SolverOptions(R=6.0, dt=1 / 16))
    assert res["rows"][0]["energy"] == res["base_energy"]
    assert res["rows"][1]["gap"] > 0


def test_contdep_envelope_rate(gauss1, quartic):
    # widening the wells by rho adds 2 rho times the nonlocal part to first order
    opts = PR.SolverOptions(R=6.0, dt=1 / 16)
    fam = PR.transition_family(quartic, lambda r: (-1.0 - r, 1.0 + r))
    base = PR.solve_profile_descent(gauss1, quartic, opts=opts)
    nl0, _ = PR.energy_parts(base.profile, gauss1, quartic)
    rates = [(PR.solve_profile_descent(gauss1, fam(r), opts=opts).energy - base.energy) / r for r in (0.02, 0.01)]
    assert abs(rates[1] - 2 * nl0) < abs(rates[0] - 2 * nl0)
    assert rates[1] == pytest.approx(2 * nl0, rel=2e-2)


def test_contdep_scaled_family_exact(gauss1, quartic):
    opts = PR.SolverOptions(R=6.0, dt=1 / 16)
    fam = PR.transition_family(quartic, lambda r: (-1.0 - r, 1.0 + r), scale=lambda r: (1.0 + r) ** 2)
    base = PR.solve_profile_descent(gauss1, quartic, opts=opts).energy
    for r in (0.1, 0.05):
        e = PR.solve_profile_descent(gauss1, fam(r), opts=opts).energy
        assert e == pytest.approx((1 + r) ** 2 * base, rel=1e-6)


# truncation


@given(n1=st.floats(1.0, 200.0), n2=st.floats(1.0, 200.0))
def test_truncated_energy_monotone(n1, n2):
    lo, hi = sorted((n1, n2))
    base = K.fractional(1, eta=0.5)
    g = PR.make_grid_profile(np.tanh, 4, 0.1, -1, 1)
    W = P.quartic_1d()
    assert PR.energy_1d(g, K.truncate(base, lo), W) <= PR.energy_1d(g, K.truncate(base, hi), W) + 1e-12
