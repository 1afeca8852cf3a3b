import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlphase import kernel as K
from nlphase import potential as P
from nlphase import profile1d as PR


def test_quartic_values():
    spec = P.make_quartic_moving(P.constant_wells(-1.0, 1.0), 0.25)
    W = spec.at(0.0)
    assert float(W.W(0.0)) == 0.25
    assert float(W.W(-1.0)) == 0.0
    assert float(W.W(1.0)) == 0.0


def test_quartic_curvature_against_finite_differences():
    W = P.quartic_1d(-1.0, 1.0, 0.25)
    h = 1e-4
    for t in (-1.0, 1.0, 0.3):
        fd = (float(W.W(t + h)) - 2 * float(W.W(t)) + float(W.W(t - h))) / h ** 2
        assert float(W.d2W(t)) == pytest.approx(fd, abs=1e-6)
        fd1 = (float(W.W(t + h)) - float(W.W(t - h))) / (2 * h)
        assert float(W.dW(t)) == pytest.approx(fd1, abs=1e-7)
    assert float(W.d2W(1.0)) == 2.0
    assert float(W.d2W(-1.0)) == 2.0


def test_moving_quartic_roots():
    wells = P.holder_wells(-1.0, 1.0, 0.3, (0.5, 0.5), 0.75)
    spec = P.make_quartic_moving(wells, "normalized")
    pts = np.random.default_rng(1).uniform(0, 1, (20, 2))
    z1, z2 = wells.values(pts)
    assert np.all(spec.field_values(pts, z1) == 0.0)
    assert np.all(spec.field_values(pts, z2) == 0.0)


def test_validate_quartic_family_passes():
    spec = P.make_quartic_moving(P.affine_wells(-1.0, 1.0, (0.3, 0.0), (0.6, 0.0)), 0.25)
    rep = P.validate_assumptions(spec, [(0, 1), (0, 1)], density=5)
    assert rep.all_pass, rep.passed
    assert 0 < rep.delta <= 1


def test_validate_merging_wells_fails_with_witness():
    wells = P.affine_wells(-1.0, 1.0, (1.0,), (-1.0,))  # z1 = z2 at x = 1
    spec = P.make_quartic_moving(wells, 0.25)
    rep = P.validate_assumptions(spec, [(0.0, 1.5)], density=7)
    assert not rep.passed["H2"]
    assert "H2" in rep.witnesses


def test_validate_flat_region_fails():
    wells = P.constant_wells(-1.0, 1.0)

    def shape(x, t):
        return np.maximum(np.abs(t) - 0.5, 0.0) * (np.asarray(t) - 1) ** 2 * (np.asarray(t) + 1) ** 2

    spec = P.PotentialSpec(wells=wells, shape=shape, dshape=lambda x, t: 0 * t, d2shape=lambda x, t: 0 * t + 1)
    rep = P.validate_assumptions(spec, [(0.0, 1.0)], density=3)
    assert not rep.passed["H1"]
    assert "H1" in rep.witnesses


def test_sandwich_holds_with_reported_delta():
    wells = P.holder_wells(-1.0, 1.0, 0.3, (0.5,), 0.75)
    spec = P.make_quartic_moving(wells, 0.25)
    rep = P.validate_assumptions(spec, [(0.0, 1.0)], density=7)
    d = rep.delta
    xs = np.linspace(0, 1, 7)[:, None]
    t = np.linspace(-3, 3, 301)
    for x in xs:
        z1, z2 = wells.at(x)
        dist = np.minimum(np.abs(t - z1), np.abs(t - z2))
        f = spec.envelope(dist)
        Wv = spec.W(x, t)
        assert np.all(d * f <= Wv + 1e-12)
        assert np.all(Wv <= f / d + 1e-12)


def test_q_and_p_for_normalized_quartic():
    W = P.quartic_1d(-1.0, 1.0, 0.25)
    t = np.linspace(-1, 1, 11)
    assert np.allclose(P.q_map(W, 0.0, t), t ** 3, atol=1e-15)
    s = np.linspace(-1, 1, 11)
    assert np.allclose(P.p_inverse(W, 0.0, s), np.cbrt(s), atol=1e-12)
    assert float(P.p_inverse(W, 0.0, P.q_map(W, 0.0, 0.5))) == pytest.approx(0.5, abs=1e-10)
    assert float(P.p_inverse(W, 0.0, 5.0)) == 1.0
    assert float(P.p_inverse(W, 0.0, -5.0)) == -1.0


@given(t=st.floats(-1.0, 1.0))
def test_p_inverts_q(t):
    W = P.quartic_1d(-1.0, 1.0, 0.25)
    assert abs(float(W.P(W.Q(t))) - t) < 1e-10


def test_p_inverse_rejects_decreasing_q():
    W = P.quartic_1d(-1.0, 1.0, 1.0)  # Q' = 3t^2 - 1 + 1 ... with c = 1: Q' = 4(3t^2 - 1) + 1 < 0 near 0
    with pytest.raises(P.QNonInvertibleError) as exc:
        P.p_inverse(W, 0.0, 0.0)
    lo, hi = exc.value.interval
    assert lo < 0 < hi


def test_transition_map_properties():
    wells = P.holder_wells(-1.0, 1.0, 0.4, (0.2,), 0.75)
    x, xp, rho = 0.1, 0.7, 0.5
    assert float(P.transition_map(wells, rho, x, 0.0, 0.3)) == pytest.approx(0.3, abs=1e-15)
    z1x, z2x = wells.at(x)
    y = x + rho * xp
    assert float(P.transition_map(wells, rho, x, xp, z1x)) == pytest.approx(wells.at(y)[0], abs=1e-15)
    assert float(P.transition_map(wells, rho, x, xp, z2x)) == pytest.approx(wells.at(y)[1], abs=1e-14)
    slope = float(P.transition_map(wells, rho, x, xp, 1.0) - P.transition_map(wells, rho, x, xp, 0.0))
    z1y, z2y = wells.at(y)
    assert slope == pytest.approx((z2y - z1y) / (z2x - z1x), rel=1e-12)


@given(x=st.floats(-1, 1), xp=st.floats(-1, 1), t=st.floats(-2, 2))
def test_transition_round_trip(x, xp, t):
    wells = P.holder_wells(-1.0, 1.0, 0.4, (0.2,), 0.75)
    y = P.transition_map(wells, 1.0, x, xp, t)
    back = P.transition_map(wells, 1.0, x + xp, -xp, y)
    assert abs(float(back) - t) < 1e-12


def test_slab_limits_and_monotonicity():
    wells = P.affine_wells(-1.0, 1.0, (0.3, 0.1), (0.2, -0.4))
    spec = P.make_quartic_moving(wells, 0.25)
    x, xi = np.array([0.4, 0.4]), np.array([0.0, 1.0])
    t = np.linspace(-1.5, 1.5, 13)
    y = np.array([0.05, -0.02])
    thin = P.slab_potential(spec, x, xi, 0.0).values(y, t)
    assert np.allclose(thin, spec.W(x + y, t), atol=1e-14)
    prev = thin
    for rho in (0.05, 0.1, 0.2):
        cur = P.slab_potential(spec, x, xi, rho).values(y, t)
        assert np.all(cur <= prev + 1e-12)
        assert np.all(cur <= spec.W(x + y, t) + 1e-12)
        prev = cur


def test_slab_constant_wells():
    spec = P.make_quartic_moving(P.constant_wells(-1.0, 1.0, 2), 0.25)
    for rho in (0.1, 0.5):
        a, b = P.slab_potential(spec, [0.3, 0.3], [1.0, 0.0], rho).effective_wells([0.0, 0.0])
        assert (a, b) == (-1.0, 1.0)


def test_slab_too_wide():
    wells = P.affine_wells(-0.1, 0.1, (2.0,), (-2.0,))
    spec = P.make_quartic_moving(wells, 0.25)
    with pytest.raises(P.SlabTooWideError, match="slab-too-wide"):
        P.slab_potential(spec, [0.0], [1.0], 0.5)


def _sigmoid(R=6.0, dt=0.0625):
    f = lambda t: np.sin(0.5 * np.pi * np.clip(t, -3, 3) / 3)
    return PR.make_grid_profile(f, R, dt, -1.0, 1.0)


def test_manufactured_potential_basic(gauss1):
    g0 = _sigmoid()
    W = P.manufacture_potential(g0, gauss1)
    assert float(W.W(-1.0)) == 0.0
    assert float(W.W(1.0)) == 0.0
    s = np.linspace(-0.99, 0.99, 199)
    assert np.all(W.W(s) > 0)
    assert np.all(np.asarray(W.W(s)) <= PR.h_bound(s, -1.0, 1.0) + 1e-12)
    cert = PR.certify_optimality(g0, gauss1, W, tol=1e-6, mode="linear")
    assert cert.passed, (cert.sup_gap, cert.support_gap)


def test_manufactured_rejects_flat_profile(gauss1):
    g = PR.make_grid_profile(lambda t: np.clip(np.round(t), -1, 1), 3.0, 0.25, -1.0, 1.0)
    with pytest.raises(P.FlatProfileError, match="flat-profile"):
        P.manufacture_potential(g, gauss1)


def test_manufactured_table_rows(gauss1):
    W = P.manufacture_potential(_sigmoid(), gauss1)
    rows = W.to_rows()
    assert rows[0][0] == -1.0 and rows[-1][0] == 1.0
    assert all(r[1] >= 0 for r in rows)


def test_holder_wells_quotient():
    w = P.holder_wells(-1.0, 1.0, 0.5, (0.0,), 0.75)
    pts = np.linspace(0, 1, 41)[:, None]
    assert w.holder_quotient(pts) <= 0.5 + 1e-12
    assert w.holder_quotient(pts) > 0.49


def test_dimensionless_frac_kernel_ok():
    assert K.fractional(1, eta=0.25).singular
