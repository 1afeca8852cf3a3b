import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlphase import kernel as K
from nlphase import oracle as O

FAMILIES_1D = [K.gaussian(1), K.exponential(1, 2.0), K.fractional(1, eta=0.5), K.fractional(1, eta=0.25)]
INTEGRABLE_1D = [K.gaussian(1), K.exponential(1, 2.0), K.truncate(K.fractional(1, eta=0.5), 8.0)]


def test_gaussian_at_origin():
    assert K.kernel_eval(K.gaussian(1), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert K.kernel_eval(K.gaussian(1), 0.0) == pytest.approx(0.398942, abs=1e-6)


def test_fractional_power_law():
    assert K.kernel_eval(K.fractional(1, eta=0.5), 0.25) == pytest.approx(8.0, rel=1e-14)


def test_fractional_origin_raises():
    with pytest.raises(K.SingularOriginError, match="singular-origin"):
        K.kernel_eval(K.fractional(1, eta=0.5), 0.0)


@pytest.mark.parametrize("spec", FAMILIES_1D + [K.gaussian(2), K.fractional(2, eta=0.5)])
@given(h=st.floats(0.01, 6.0))
def test_even_and_positive(spec, h):
    if spec.dim == 1:
        a, b = K.kernel_eval(spec, h), K.kernel_eval(spec, -h)
    else:
        a, b = K.kernel_eval(spec, [h, 0.3]), K.kernel_eval(spec, [-h, -0.3])
    assert a == b
    assert a > 0


def test_rescale_identity_and_value():
    g = K.gaussian(1)
    assert K.rescale(g, 1.0) is g
    assert K.kernel_eval(K.rescale(g, 0.5), 0.0) == pytest.approx(0.797885, abs=1e-6)


def test_rescale_domain_error():
    with pytest.raises(K.KernelError, match="domain error"):
        K.rescale(K.gaussian(1), 0.0)


@pytest.mark.parametrize("spec", INTEGRABLE_1D)
@pytest.mark.parametrize("eps", [0.3, 2.0])
def test_rescale_preserves_mass(spec, eps):
    base = K.kernel_mass(spec)
    if spec.family in ("gaussian", "exponential"):
        base = K._radial_integral(spec, 0)
    assert K._radial_integral(K.rescale(spec, eps), 0) == pytest.approx(base, rel=1e-10)


@given(eps=st.floats(0.2, 3.0), t=st.floats(0.05, 3.0))
def test_rescale_consistency_of_slices(eps, t):
    spec = K.fractional(2, eta=0.5)
    a = float(K.line_kernel(K.rescale(spec, eps)).density(t))
    b = float(K.line_kernel(spec).density(t / eps)) / eps
    assert a == pytest.approx(b, rel=1e-9)


def test_tail_mass_values(gauss1):
    assert float(K.tail_mass(gauss1, 0.0)) == pytest.approx(0.5, abs=1e-14)
    assert float(K.tail_mass(gauss1, 1.0)) == pytest.approx(0.158655, abs=1e-6)
    assert float(K.tail_mass(gauss1, 60.0)) == 0.0


def test_tail_mass_against_quadrature(gauss1):
    ref = O.reference_quadrature("tail_mass", {"kernel": gauss1, "u": 1.0})
    assert float(K.tail_mass(gauss1, 1.0)) == pytest.approx(ref.value, abs=1e-10)


@pytest.mark.parametrize("spec", FAMILIES_1D + INTEGRABLE_1D)
def test_tail_mass_nonincreasing(spec):
    u = np.linspace(0.01, 6, 301)
    T = np.asarray(K.tail_mass(spec, u))
    assert np.all(np.diff(T) <= 1e-15)


def test_conjugate_kernel_at_zero(gauss1):
    assert float(K.conjugate_kernel(gauss1, 0.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)
    ref = O.reference_quadrature("moment", {"kernel": gauss1, "u": 0.0, "order": 1})
    assert float(K.conjugate_kernel(gauss1, 0.0)) == pytest.approx(ref.value, abs=1e-10)
    assert float(K.conjugate_kernel(gauss1, 50.0)) == 0.0


@pytest.mark.parametrize("spec", INTEGRABLE_1D)
def test_conjugate_affine_identity(spec):
    u = np.linspace(-3, 3, 61)
    mass = K.line_kernel(spec).mass
    res = np.asarray(K.conjugate_kernel(spec, u)) - np.asarray(K.conjugate_kernel(spec, -u)) + u * mass
    assert np.max(np.abs(res)) < 1e-8


@pytest.mark.parametrize("spec", INTEGRABLE_1D + FAMILIES_1D)
def test_conjugate_kernel_convex_nonincreasing(spec):
    u = np.linspace(0.05, 5, 200)
    Kv = np.asarray(K.conjugate_kernel(spec, u))
    assert np.all(np.diff(Kv) <= 1e-15)
    assert np.all(np.diff(Kv, 2) >= -1e-12)


def test_truncate_identity_and_value():
    g = K.gaussian(1)
    assert K.truncate(g, 1.0) is g
    t = K.truncate(K.fractional(1, eta=0.5), 8.0)
    assert float(K.radial_profile(t, 0.25)) == pytest.approx(8.0, rel=1e-14)
    assert float(K.radial_profile(t, 0.1)) == 8.0


@given(n1=st.floats(0.5, 50.0), n2=st.floats(0.5, 50.0), r=st.floats(1e-3, 3.0))
def test_truncation_monotone(n1, n2, r):
    lo, hi = sorted((n1, n2))
    base = K.fractional(1, eta=0.5)
    assert float(K.radial_profile(K.truncate(base, lo), r)) <= float(K.radial_profile(K.truncate(base, hi), r))


def test_verify_class():
    assert K.verify_class(K.fractional(1, eta=0.5, lam=0.8, rho=1.0), 0.5, 0.8, 1.0).in_class
    assert K.verify_class(K.fractional(2, eta=0.25), 0.25, 1.0, 1.0).in_class
    g = K.verify_class(K.gaussian(1), 0.5, 0.5, 1.0)
    assert not g.in_class and not g.lower_ok and g.witnesses
    tr = K.verify_class(K.truncate(K.fractional(1, eta=0.5), 8.0), 0.5, 1.0, 1.0)
    assert not tr.in_class and not tr.lower_ok


def test_directional_gaussian_separable():
    t = np.linspace(0.0, 4.0, 9)
    d = K.directional_kernel(K.gaussian(2), [0.6, 0.8])
    assert np.allclose(d.density(t), np.exp(-t ** 2 / 2) / math.sqrt(2 * math.pi), rtol=1e-13)


def test_directional_one_dimensional_is_identity():
    spec = K.fractional(1, eta=0.5)
    d = K.directional_kernel(spec, [1.0])
    t = np.array([0.1, 0.5, 2.0])
    assert np.allclose(d.density(t), K.radial_profile(spec, t), rtol=1e-14)


def test_directional_fractional_against_quadrature():
    spec = K.fractional(2, eta=0.5)
    ref = O.reference_quadrature("directional", {"kernel": spec, "s": 0.5})
    val = float(K.directional_kernel(spec, [1.0, 0.0]).density(0.5))
    assert val == pytest.approx(ref.value, rel=1e-6)


def test_directional_cell_weights():
    d = K.directional_kernel(K.gaussian(2), [1.0, 0.0], spacing=0.1, half_width=6.0)
    w = d.cell_weights
    assert np.all(w >= 0)
    assert np.array_equal(w, w[::-1])
    assert w.sum() <= 1.0 + 1e-12
    assert w.sum() > 1 - 1e-6
    fr = K.directional_kernel(K.fractional(2, eta=0.5), [1.0, 0.0], spacing=0.1, half_width=4.0)
    assert fr.singular and math.isinf(fr.cell_weights[fr.offsets.size // 2])


def test_directional_grid_error():
    with pytest.raises(K.KernelError, match="domain error"):
        K.directional_kernel(K.gaussian(2), [1.0, 0.0], spacing=1.0, half_width=0.5)


@pytest.mark.parametrize("spec", [K.gaussian(1), K.gaussian(2), K.exponential(1), K.fractional(1, eta=0.5),
                                  K.fractional(2, eta=0.25)])
def test_hat_mass_identity(spec):
    hat = K.hat_kernel(spec)
    assert abs(hat.total_mass - hat.first_moment) / hat.first_moment < 1e-6


def test_hat_gaussian_mass_value():
    hat = K.hat_kernel(K.gaussian(1))
    assert hat.total_mass == pytest.approx(math.sqrt(2 / math.pi), rel=1e-6)
    ref = O.reference_quadrature("first_moment", {"kernel": K.gaussian(1)})
    assert ref.value == pytest.approx(0.797885, abs=1e-6)
    assert hat(0.7) == hat(-0.7)


def test_hat_infinite_mass():
    heavy = K.custom(lambda r: 1.0 / (1.0 + r) ** 1.5, dim=1)
    with pytest.raises(K.KernelError, match="infinite-hat-mass"):
        K.hat_kernel(heavy)
    light = K.custom(lambda r: 1.0 / (1.0 + r) ** 2.5, dim=1)
    assert math.isfinite(K.first_moment(light))


def test_restriction_gaussian_and_mass():
    rk = K.restrict_kernel(K.gaussian(2), [[1.0, 0.0]])
    assert rk.spec.family == "gaussian" and rk.spec.dim == 1
    ex = K.restrict_kernel(K.exponential(2), [[1.0, 1.0]])
    assert abs(K.restricted_mass(ex) - 1.0) < 1e-8


def test_restriction_keeps_fractional_class():
    rk = K.restrict_kernel(K.fractional(2, eta=0.5), [[0.0, 1.0]])
    r = np.geomspace(1e-3, 0.49, 12)
    j = K.radial_profile(rk.spec, r)
    lam = float(np.min(j * r ** 1.5))
    assert lam > 0
    rep = K.verify_class(rk.spec, 0.5, min(lam, 1.0) * 0.999, 0.5, n_samples=12)
    assert rep.lower_ok


def test_fiber_identity_gaussian():
    spec = K.gaussian(2)
    xi = np.array([1.0, 0.0])
    z = np.linspace(-40, 40, 8001)
    for s in (0.5, 1.0, 2.0):
        vals = np.array([float(K.fiber_kernel(spec, xi + np.array([0.0, zz]))(s)) for zz in z])
        lhs = np.trapezoid(vals, z)
        rhs = float(K.line_kernel(spec).density(s))
        assert abs(lhs - rhs) / rhs < 1e-4


def test_fiber_one_dimensional_and_even():
    spec = K.fractional(1, eta=0.5)
    f = K.fiber_kernel(spec, [1.0])
    s = np.array([0.2, 1.5])
    assert np.allclose(f(s), K.radial_profile(spec, s))
    g = K.fiber_kernel(K.gaussian(2), [1.0, 0.7])
    assert np.allclose(g(s), g(-s))
