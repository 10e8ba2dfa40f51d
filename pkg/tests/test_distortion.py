import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otcurvature import distortion as ds
from otcurvature.errors import UnboundedComparisonError

PI2 = np.pi**2


def q(t):
    return t * t - t + 1.25


@pytest.mark.parametrize("K,ref", [(0.0, lambda s: s), (1.0, np.sin), (-1.0, np.sinh)])
def test_sin_kappa_constant_closed_forms(K, ref):
    kap = ds.KappaFunction.constant(K, 2.0)
    s = np.linspace(0, 2.0, 17)
    assert np.max(np.abs(ds.sin_kappa(kap, s) - ref(s))) <= 1e-9


def test_sin_kappa_refinement_is_fourth_order():
    kap = ds.KappaFunction.from_function(lambda s: 1.0 + 0.5 * np.cos(3 * s), 2.5)
    s = np.linspace(0, 2.5, 9)  # nodes of every grid below, so no interpolation error
    a, b, c = (ds.sin_kappa(kap, s, steps=n) for n in (128, 256, 512))
    ratio = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
    assert 14 < ratio < 18
    assert np.max(np.abs(ds.sin_kappa(kap, s) - c)) <= 4 * 1e-9


def test_sin_kappa_domain_checks():
    kap = ds.KappaFunction.constant(1.0, 1.0)
    with pytest.raises(ValueError):
        ds.sin_kappa(kap, 1.5)


def test_sigma_endpoints():
    kap = ds.KappaFunction.from_function(lambda s: np.sin(s), 1.7)
    assert float(ds.sigma(kap, 1.0)) == pytest.approx(1.0, abs=1e-14)
    assert float(ds.sigma(kap, 0.0)) == 0.0


def test_sigma_infinite_at_pi():
    v = ds.sigma(ds.KappaFunction.constant(1.0, np.pi), 0.5)
    assert v.infinite and float(v) == np.inf
    # positivity fails strictly inside the interval as well
    assert ds.sigma(ds.KappaFunction.constant(1.0, 4.0), 0.3).infinite


def test_sigma_const_cases():
    assert float(ds.sigma_const(0.0, 0.3, 5.0)) == 0.3
    assert float(ds.sigma_const(1.0, 0.5, np.pi / 2)) == pytest.approx(np.sqrt(2) / 2, abs=1e-15)
    assert ds.sigma_const(1.0, 0.2, np.pi).infinite
    assert float(ds.sigma_const(-1.0, 0.5, 1.0)) == pytest.approx(np.sinh(0.5) / np.sinh(1.0))


def test_zero_speed_uses_the_limit_weights():
    t = np.linspace(0, 1, 5)
    assert np.allclose(ds.sigma_array(ds.KappaFunction.constant(3.0, 0.0), t), t)
    assert np.allclose(ds.sigma_const_array(3.0, t, 0.0), t)


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(0.0, 1.0), st.floats(0.01, 3.0))
def test_sigma_matches_closed_form(K, t, theta):
    if K * theta**2 >= PI2 - 0.1:
        return
    num = float(ds.sigma(ds.KappaFunction.constant(K, theta), t))
    assert abs(num - float(ds.sigma_const(K, t, theta))) <= 1e-8


def test_sharp_example_bvp():
    # f = sqrt(q) solves f'' = f / q^2, so the comparison coefficient is -1/q^2
    kap = ds.KappaFunction.from_function(lambda s: -1.0 / q(s) ** 2, 1.0)
    t = np.linspace(0, 1, 21)
    v = ds.bvp_solution(kap, np.sqrt(5) / 2, np.sqrt(5) / 2, t)
    assert np.max(np.abs(v - np.sqrt(q(t)))) <= 1e-10
    assert v[10] == pytest.approx(1.0, abs=1e-12)


def test_bvp_linear_and_zero_data():
    kap = ds.KappaFunction.constant(0.0, 1.0)
    t = np.linspace(0, 1, 7)
    assert np.allclose(ds.bvp_solution(kap, 2.0, 5.0, t), 2.0 + 3.0 * t)
    assert np.allclose(ds.bvp_solution(ds.KappaFunction.constant(2.0, 1.0), 0.0, 0.0, t), 0.0)


def test_bvp_solution_solves_the_ode():
    kap = ds.KappaFunction.from_function(lambda s: 1.0 + s, 1.5)
    t = np.linspace(0, 1, 2001)
    v = ds.bvp_solution(kap, 0.7, 1.3, t)
    h = t[1] - t[0]
    d2 = (-v[4:] + 16 * v[3:-1] - 30 * v[2:-2] + 16 * v[1:-3] - v[:-4]) / (12 * h**2)
    assert np.max(np.abs(d2 + kap.scaled(t[2:-2]) * v[2:-2])) <= 1e-6
    assert v[0] == pytest.approx(0.7, abs=1e-15) and v[-1] == pytest.approx(1.3, abs=1e-12)


def test_bvp_unbounded():
    with pytest.raises(UnboundedComparisonError):
        ds.bvp_solution(ds.KappaFunction.constant(1.0, 3.5), 1.0, 1.0, 0.5)


def test_reversed_orientation():
    kap = ds.KappaFunction.from_function(lambda s: s**2, 2.0)
    r = kap.reversed()
    assert r.orientation == "-"
    assert r(0.5) == pytest.approx(kap(1.5))


def test_green_values():
    assert ds.green(0.5, 0.25) == pytest.approx(1 / 8)
    s = np.linspace(0, 1, 11)
    assert np.all(ds.green(s, 0.0) == 0) and np.all(ds.green(s, 1.0) == 0)
    S, T = np.meshgrid(s, s)
    assert np.allclose(ds.green(S, T), ds.green(T, S))


def test_green_solution_cases():
    t = np.linspace(0, 1, 11)
    assert np.allclose(ds.green_solution(1.0, 3.0, np.zeros(101), t), 1 + 2 * t)
    w = ds.green_solution(0.0, 0.0, np.full(2001, 2.0), t)
    assert np.max(np.abs(w - t * (1 - t))) <= 1e-6
    w = ds.green_solution(0.0, 0.0, np.full(2001, 0.7), t)
    assert np.allclose(w, w[::-1])


def test_green_solution_residual():
    s = np.linspace(0, 1, 2001)
    u = np.exp(s)
    t = np.linspace(0, 1, 401)
    w = ds.green_solution(0.2, -0.1, u, t)
    h = t[1] - t[0]
    res = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2 + np.exp(t[1:-1])
    assert np.max(np.abs(res)) <= 1e-5
    assert w[0] == 0.2 and w[-1] == pytest.approx(-0.1)


def test_comparison_holds():
    kap = ds.KappaFunction.constant(0.5, 1.0)
    t = np.linspace(0, 1, 1001)
    v = ds.bvp_solution(kap, 1.0, 2.0, t)
    same = ds.comparison_holds(v, kap)
    assert same.passed and abs(same.margin) <= 1e-12
    bigger = ds.comparison_holds(v + t * (1 - t), kap)
    assert bigger.passed and bigger.margin >= 0
    assert not ds.comparison_holds(v - 0.1 * t * (1 - t), kap).passed
    vac = ds.comparison_holds(np.ones(11), ds.KappaFunction.constant(1.0, 4.0))
    assert vac.passed and vac.vacuous


def _pair(seed, strict):
    # piecewise-linear scaled coefficients below pi^2, so both sigmas are finite
    r = np.random.default_rng(seed)
    tau = np.linspace(0, 1, 9)
    k1 = r.uniform(-6, 4, 9)
    d = r.uniform(0.1, 3, 9) if strict else r.uniform(0, 3, 9) * (r.uniform(size=9) < 0.7)
    return tau, k1, k1 + d


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_monotone_in_kappa(seed):
    tau, k1, k2 = _pair(seed, False)
    t = np.linspace(0, 1, 21)
    s1 = ds.sigma_array(ds.KappaFunction.from_samples(tau, k1, 1.0), t, steps=512)
    s2 = ds.sigma_array(ds.KappaFunction.from_samples(tau, k2, 1.0), t, steps=512)
    assert np.all(s1 <= s2 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_strictly_monotone_in_kappa(seed):
    tau, k1, k2 = _pair(seed, True)
    s1 = float(ds.sigma_array(ds.KappaFunction.from_samples(tau, k1, 1.0), 0.5, steps=512))
    s2 = float(ds.sigma_array(ds.KappaFunction.from_samples(tau, k2, 1.0), 0.5, steps=512))
    assert s2 - s1 > 0


def test_batched_kappa():
    K = np.array([[0.0, 1.0], [-1.0, 2.0]])
    kap = ds.KappaFunction.constant(K, 1.0)
    t = np.array([0.25, 0.5])
    assert ds.sigma_array(kap, t).shape == (2, 2, 2)
    assert np.allclose(ds.sigma_array(kap, t), ds.sigma_const_array(K[..., None], t, 1.0), atol=1e-10)


def test_combine():
    kap = ds.KappaFunction.constant(0.4, 2.0)
    c = kap.combine(1.0, 2.0)
    assert np.allclose(c.scaled(np.linspace(0, 1, 3)), (1.0 * 4 - 0.4 * 4) / 2)


def test_sampled_kappa_cannot_rescale():
    kap = ds.KappaFunction.from_samples(np.linspace(0, 1, 5), np.zeros(5), 1.0)
    with pytest.raises(ValueError):
        kap.with_theta(2.0)
