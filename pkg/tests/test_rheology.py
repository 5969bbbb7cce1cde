import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from seaice_lkf.rheology import (RheoParams, StrainRate, Stress, delta, evaluate, evp_stress_update,
                                 ice_strength, mevp_stress_update, replacement_pressure,
                                 shear_deformation, viscosities, vp_stress)

P = RheoParams()
rates = st.floats(-1e-4, 1e-4, allow_nan=False)
strains = st.builds(StrainRate, rates, rates, rates)


def _delta_oracle(e11, e22, e12, e=2.0):
    # invariant form: Delta^2 = div^2 + shear^2 / e^2
    div = e11 + e22
    shear2 = (e11 - e22) ** 2 + 4 * e12**2
    return math.sqrt(div**2 + shear2 / e**2)


def test_params_validation():
    with pytest.raises(ValueError):
        RheoParams(P_star=0)
    with pytest.raises(ValueError):
        RheoParams(e=0.5)
    with pytest.raises(ValueError):
        RheoParams(pressure_factor=3)


def test_delta_examples():
    assert delta(StrainRate(0, 0, 0), P) == 0
    s = 3e-7
    assert math.isclose(delta(StrainRate(0, 0, s), P), s)
    d = -2e-6
    assert math.isclose(delta(StrainRate(d, d, 0), P), 2 * abs(d))


@given(strains, st.floats(1, 4))
def test_delta_matches_invariant_form(eps, e):
    p = RheoParams(e=e)
    assert math.isclose(float(delta(eps, p)), _delta_oracle(*eps, e=e), rel_tol=1e-9, abs_tol=1e-18)


@given(strains, st.floats(-50, 50))
def test_delta_homogeneous(eps, c):
    scaled = StrainRate(*(c * x for x in eps))
    assert math.isclose(float(delta(scaled, P)), abs(c) * float(delta(eps, P)), rel_tol=1e-9, abs_tol=1e-18)


def test_ice_strength_examples():
    assert ice_strength(0.0, 0.7, P) == 0
    assert math.isclose(ice_strength(0.3, 1.0, P), 8250.0)
    assert math.isclose(ice_strength(1.0, 0.95, P), 27500 * math.exp(-1))
    assert math.isclose(ice_strength(1.0, 0.95, P), 10116.8, rel_tol=2e-5)
    with pytest.raises(ValueError):
        ice_strength(-0.1, 0.5, P)
    with pytest.raises(ValueError):
        ice_strength(1.0, 1.2, P)


def test_viscosity_examples():
    P0 = 1e4
    z, eta = viscosities(0.0, P0, P)
    assert math.isclose(z, P0 / (2 * P.Delta_min))
    assert math.isclose(eta, z / 4)
    z, _ = viscosities(P.Delta_min, P0, P)
    assert math.isclose(z, P0 / (2 * math.sqrt(2) * P.Delta_min))


def test_replacement_pressure_examples():
    P0 = 5000.0
    assert replacement_pressure(0.0, P0, P) == 0
    assert math.isclose(replacement_pressure(P.Delta_min, P0, P), P0 / 4)
    assert math.isclose(replacement_pressure(1e3, P0, P), P0 / 2, rel_tol=1e-9)
    assert math.isclose(replacement_pressure(P.Delta_min, P0, RheoParams(pressure_factor=2)), P0 / 2)


@given(strains, st.one_of(st.just(0.0), st.floats(1e-3, 5e4)))
def test_rheology_eval_invariants(eps, P0):
    r = evaluate(eps, P0, P)
    assert r.Delta >= 0
    assert r.eta == r.zeta / P.e**2
    assert 0 <= r.zeta <= P0 / (2 * P.Delta_min) * (1 + 1e-15)
    assert 0 <= r.P <= P0 / 2
    if P0 > 0:
        assert r.P < P0 / 2


@given(st.lists(st.floats(0, 1e-3), min_size=2, max_size=2))
def test_pressure_monotone(ds):
    lo, hi = sorted(ds)
    assert replacement_pressure(lo, 1e4, P) <= replacement_pressure(hi, 1e4, P)


def test_vp_stress_zero_strain():
    eps = StrainRate(0.0, 0.0, 0.0)
    s = vp_stress(eps, evaluate(eps, 1e4, P))
    assert s == (0.0, 0.0, 0.0)


def test_vp_stress_formula_oracle():
    eps = StrainRate(1e-7, -3e-7, 2e-7)
    r = evaluate(eps, 2e4, P)
    tr = eps.e11 + eps.e22
    sig = 2 * r.eta * np.array([[eps.e11, eps.e12], [eps.e12, eps.e22]]) + ((r.zeta - r.eta) * tr - r.P / 2) * np.eye(2)
    s = vp_stress(eps, r)
    np.testing.assert_allclose([s.s11, s.s22, s.s12], [sig[0, 0], sig[1, 1], sig[0, 1]], rtol=1e-12)


def test_pure_divergence_has_no_shear_stress():
    eps = StrainRate(1e-5, 1e-5, 0.0)
    assert vp_stress(eps, evaluate(eps, 1e4, P)).s12 == 0


@given(st.floats(0, 2 * math.pi), st.floats(0, math.pi), st.floats(1e-3, 1e-1), st.floats(0.5, 10))
def test_plastic_rate_independence(phi, theta, mag, c):
    # a direction on the unit sphere scaled so that Delta >= 1e6 Delta_min
    eps = StrainRate(*(mag * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                                       math.cos(theta)])))
    # both evaluations must sit in the plastic regime
    assume(min(1.0, c) * float(delta(eps, P)) >= 1e6 * P.Delta_min)
    s1 = np.array(vp_stress(eps, evaluate(eps, 1e4, P)))
    e2 = StrainRate(*(c * x for x in eps))
    s2 = np.array(vp_stress(e2, evaluate(e2, 1e4, P)))
    assert np.linalg.norm(s2 - s1) <= 1e-6 * np.linalg.norm(s1)


@given(st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_rate_independence_at_threshold_doubling(phi, theta):
    eps = StrainRate(math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    k = 1e6 * P.Delta_min / float(delta(eps, P))
    eps = StrainRate(*(k * x for x in eps))
    s1 = np.array(vp_stress(eps, evaluate(eps, 1e4, P)))
    e2 = StrainRate(*(2 * x for x in eps))
    s2 = np.array(vp_stress(e2, evaluate(e2, 1e4, P)))
    assert np.linalg.norm(s2 - s1) <= 1e-6 * np.linalg.norm(s1)


def _vp(eps, P0=1e4):
    r = evaluate(eps, P0, P)
    return r, vp_stress(eps, r)


@pytest.mark.parametrize("eps", [StrainRate(1e-7, -2e-7, 5e-8), StrainRate(3e-10, 1e-9, 0.0),
                                 StrainRate(-1e-6, -1e-6, 0.0)])
def test_evp_fixed_point_and_convergence(eps):
    r, target = _vp(eps)
    same = evp_stress_update(target, eps, r, 1500.0, 100.0, P)
    np.testing.assert_allclose(same, target, rtol=1e-12, atol=1e-12 * np.abs(target).max())
    s = Stress(0.0, 0.0, 0.0)
    for _ in range(5000):
        s = evp_stress_update(s, eps, r, 1500.0, 100.0, P)
    err = np.linalg.norm(np.subtract(s, target))
    assert err <= 1e-8 * np.linalg.norm(target)


def test_evp_zero_state_stays_zero():
    eps = StrainRate(0.0, 0.0, 0.0)
    r = evaluate(eps, 1e4, P)
    assert evp_stress_update(Stress(0.0, 0.0, 0.0), eps, r, 1500.0, 5.0, P) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        evp_stress_update(Stress(0.0, 0.0, 0.0), eps, r, 1500.0, 0.0, P)


def test_mevp_update_examples():
    eps = StrainRate(2e-7, 1e-7, -4e-7)
    r, target = _vp(eps)
    np.testing.assert_array_equal(mevp_stress_update(target, eps, r, 500.0), target)
    np.testing.assert_allclose(mevp_stress_update(Stress(1.0, 2.0, 3.0), eps, r, 1.0), target, rtol=1e-14)
    with pytest.raises(ValueError):
        mevp_stress_update(target, eps, r, 0.5)


@settings(max_examples=25)
@given(st.floats(1.5, 600), st.integers(1, 40))
def test_mevp_geometric_contraction(alpha, k):
    eps = StrainRate(2e-7, 1e-7, -4e-7)
    r, target = _vp(eps)
    s0 = Stress(1e3, -2e3, 5e2)
    s = s0
    for _ in range(k):
        s = mevp_stress_update(s, eps, r, alpha)
    e0 = np.linalg.norm(np.subtract(s0, target))
    ek = np.linalg.norm(np.subtract(s, target))
    assert math.isclose(ek, e0 * (1 - 1 / alpha) ** k, rel_tol=1e-8, abs_tol=1e-11 * e0)


def test_shear_examples():
    assert shear_deformation(StrainRate(3e-7, 3e-7, 0.0)) == 0
    assert math.isclose(shear_deformation(StrainRate(0.0, 0.0, -2e-7)), 4e-7)
    assert math.isclose(shear_deformation(StrainRate(5e-7, -5e-7, 0.0)), 1e-6)


@given(strains)
def test_shear_symmetries(eps):
    e11, e22, e12 = eps
    s = shear_deformation(eps)
    assert s >= 0
    assert math.isclose(shear_deformation(StrainRate(-e22, -e11, e12)), s, rel_tol=1e-12, abs_tol=1e-20)
    assert shear_deformation(StrainRate(e11, e22, -e12)) == s


def test_kernels_broadcast_over_arrays(rng):
    eps = StrainRate(*rng.normal(0, 1e-7, (3, 50)))
    r = evaluate(eps, rng.uniform(0, 3e4, 50), P)
    s = vp_stress(eps, r)
    assert all(np.shape(c) == (50,) for c in s)
    for i in (0, 17, 49):
        ri = evaluate(StrainRate(*(c[i] for c in eps)), r.P0[i], P)
        assert math.isclose(s.s11[i], vp_stress(StrainRate(*(c[i] for c in eps)), ri).s11, rel_tol=1e-14)
