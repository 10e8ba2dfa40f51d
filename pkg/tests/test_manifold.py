import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otcurvature import manifold as mf
from otcurvature.errors import (
    DegenerateMetricError,
    DegeneratePlaneError,
    DomainEscapeError,
    InvalidFrameError,
)

rng = np.random.default_rng(7)


def sphere_points(k, dim=2):
    x = rng.uniform(0.3, np.pi - 0.3, (k, dim))
    x[:, -1] = rng.uniform(0, 2 * np.pi, k)
    return x


def ball_points(k, dim=2, r=0.8):
    d = rng.normal(size=(k, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (r * rng.uniform(0, 1, (k, 1)) ** (1 / dim))


MODELS = [
    (mf.Euclidean(3), lambda k: rng.normal(size=(k, 3))),
    (mf.Cylinder(1.5), lambda k: np.c_[rng.normal(size=k), rng.uniform(0, 2 * np.pi, k)]),
    (mf.Sphere(2), sphere_points),
    (mf.Sphere(3, 2.0), lambda k: sphere_points(k, 3)),
    (mf.Hyperbolic(2), ball_points),
    (mf.Hyperbolic(3, 0.5), lambda k: ball_points(k, 3, 0.4)),
]


def test_sign_calibration_runs_at_import():
    mf._self_test()


@pytest.mark.parametrize("M,sampler", MODELS, ids=lambda m: repr(m) if isinstance(m, mf.ChartManifold) else "")
def test_sectional_is_model_constant(M, sampler):
    x = sampler(100)
    v = rng.normal(size=x.shape)
    w = rng.normal(size=x.shape)
    sec = mf.sectional(M, x, v, w)
    assert np.max(np.abs(sec - M.constant_curvature)) <= 1e-8


@pytest.mark.parametrize("M,sampler", MODELS[2:], ids=repr)
def test_fd_christoffel_matches_closed_form(M, sampler):
    x = sampler(100)
    assert np.max(np.abs(mf.christoffel_fd(M, x) - M.christoffel(x))) <= 1e-6


@pytest.mark.parametrize("M,sampler", MODELS[2:], ids=repr)
def test_fd_riemann_matches_closed_form(M, sampler):
    x = sampler(20)
    R = M.riemann(x)
    assert np.max(np.abs(mf.riemann_fd(M, x) - R)) <= 1e-5 * max(1.0, np.abs(R).max())


@pytest.mark.parametrize("M,sampler", MODELS, ids=repr)
def test_riemann_antisymmetries(M, sampler):
    R = M.riemann(sampler(30))
    assert np.max(np.abs(R + np.swapaxes(R, -4, -3))) <= 1e-8
    assert np.max(np.abs(R + np.swapaxes(R, -2, -1))) <= 1e-8


def test_fd_riemann_antisymmetric_on_custom_metric():
    g = mf.CoefficientMetric(2, ((0, 0, (mf.MetricTerm(1.0),)),
                                 (1, 1, (mf.MetricTerm(1.0), mf.MetricTerm(0.5, (("cos", 0, 1.0, 2.0),)))),
                                 (0, 1, (mf.MetricTerm(0.1, (("sin", 1, 2.0, 1.0),)),))))
    M = mf.custom(2, g)
    R = mf.riemann_fd(M, rng.normal(size=(10, 2)))
    assert np.max(np.abs(R + np.swapaxes(R, -2, -1))) <= 1e-8
    assert np.max(np.abs(R + np.swapaxes(R, -4, -3))) <= 1e-6


def test_custom_round_sphere_metric_has_curvature_one():
    g = mf.CoefficientMetric(2, ((0, 0, (mf.MetricTerm(1.0),)), (1, 1, (mf.MetricTerm(1.0, (("sin", 0, 1.0, 2.0),)),))))
    M = mf.custom(2, g, mf.ChartDomain(2, (0.0, None), (np.pi, None), ((1, 2 * np.pi),)))
    x = sphere_points(10)
    sec = mf.sectional(M, x, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert np.allclose(sec, 1.0, atol=1e-5)


def test_degenerate_plane_raises():
    M = mf.Sphere(2)
    x = np.array([1.0, 0.5])
    with pytest.raises(DegeneratePlaneError):
        mf.sectional(M, x, np.array([1.0, 2.0]), np.array([2.0, 4.0]))


def test_bad_metric_rejected():
    with pytest.raises(DegenerateMetricError):
        mf.check_metric(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(DegenerateMetricError):
        mf.check_metric(np.array([[1.0, 0.3], [0.0, 1.0]]))


def _draw(seed, p, model):
    M = [mf.Sphere(3), mf.Hyperbolic(3), mf.Euclidean(3)][model]
    r = np.random.default_rng(seed)
    x = ball_points(1, 3, 0.5)[0] if model == 1 else np.array([1.2, 1.0, 0.4]) + 0.2 * r.uniform(-1, 1, 3)
    P = mf.orthonormal_basis(M, x, r.normal(size=(3, p)))
    return M, x, P, r.normal(size=3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 2), st.sampled_from([0, 1, 2]))
def test_ricci_p_chain_for_orthogonal_direction(seed, p, model):
    M, x, P, w = _draw(seed, p, model)
    w = w - P @ (P.T @ M.metric(x) @ w)  # w orthogonal to P
    lhs = mf.ricci_p(M, x, P, w)
    Q = mf.orthonormal_basis(M, x, np.c_[P, w])
    assert abs(lhs - mf.ricci_p(M, x, Q, w)) <= 1e-8
    secs = sum(mf.sectional(M, x, P[:, i], w) for i in range(p))
    assert abs(lhs - secs * M.inner(x, w, w)) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 2), st.sampled_from([0, 1, 2]))
def test_ricci_p_chain_tail_for_any_direction(seed, p, model):
    # ric_{p+1}(span(P,w), w) = ric_p(span(P,w) ∩ w^perp, w) = sum sec(e_i, w) |w|^2
    M, x, P, w = _draw(seed, p, model)
    Q = mf.orthonormal_basis(M, x, np.c_[P, w])
    Qw = mf.orthonormal_basis(M, x, np.c_[w, P])[:, 1:]
    full = mf.ricci_p(M, x, Q, w)
    assert abs(full - mf.ricci_p(M, x, Qw, w)) <= 1e-8
    secs = sum(mf.sectional(M, x, Qw[:, i], w) for i in range(p))
    assert abs(full - secs * M.inner(x, w, w)) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 2), st.sampled_from([0, 1]))
def test_ricci_p_versus_enlarged_plane_defect(seed, p, model):
    # adding w to P adds the single term sec(f, w) |proj_P w|^2, f the unit normal of w off P
    M, x, P, w = _draw(seed, p, model)
    g = M.metric(x)
    proj = P @ (P.T @ g @ w)
    f = w - proj
    f = f / M.norm(x, f)
    Q = mf.orthonormal_basis(M, x, np.c_[P, w])
    defect = mf.ricci_p(M, x, Q, w) - mf.ricci_p(M, x, P, w)
    assert abs(defect - mf.sectional(M, x, f, w) * M.inner(x, proj, proj)) <= 1e-8


def test_ricci_p_full_plane_is_ricci():
    M = mf.Sphere(3, 1.3)
    x = sphere_points(5, 3)
    w = rng.normal(size=x.shape)
    P = mf.orthonormal_basis(M, x)
    assert np.allclose(mf.ricci_p(M, x, P, w), mf.ricci(M, x, w), atol=1e-10)
    assert np.allclose(mf.ricci(M, x, w), 2 / 1.3**2 * M.inner(x, w, w), atol=1e-10)


def test_ricci_p_rejects_non_orthonormal_frame():
    M = mf.Sphere(2)
    x = np.array([1.0, 0.0])
    with pytest.raises(InvalidFrameError):
        mf.ricci_p(M, x, np.array([[1.0], [1.0]]), np.array([1.0, 0.0]))


@pytest.mark.parametrize("M,sampler", MODELS, ids=repr)
def test_closed_form_exp_matches_integrator(M, sampler):
    x = sampler(8)
    v = 0.5 * rng.normal(size=x.shape)
    if isinstance(M, mf.Hyperbolic):
        v *= 0.3
    path = mf.geodesic(M, x, v, samples=1001)
    d = M.domain.difference(M.exp(x, v), path.end)
    assert np.max(np.abs(d)) <= 1e-8


@pytest.mark.parametrize("M,sampler", MODELS[2:], ids=repr)
def test_distance_is_speed_of_short_geodesic(M, sampler):
    x = sampler(8)
    v = 0.2 * rng.normal(size=x.shape)
    y = M.exp(x, v)
    assert np.allclose(M.distance(x, y), M.norm(x, v), atol=1e-10)


def test_energy_is_conserved():
    M = mf.Sphere(2)
    path = mf.geodesic(M, np.array([1.0, 0.0]), np.array([0.4, 1.3]))
    e = np.einsum("...i,...ij,...j->...", path.velocities, M.metric(path.positions), path.velocities)
    assert np.max(np.abs(e / e[0] - 1)) <= 1e-8


def test_geodesic_anchor_in_the_middle():
    M = mf.Euclidean(2)
    path = mf.geodesic(M, np.array([1.0, 1.0]), np.array([2.0, 0.0]), samples=11, t0=0.5)
    assert np.allclose(path.start, [0.0, 1.0]) and np.allclose(path.end, [2.0, 1.0])


def test_parallel_frame_is_orthonormal_and_keeps_velocity():
    M = mf.Sphere(2)
    x = np.array([1.0, 0.3])
    v = np.array([0.6, 0.9])
    path = mf.geodesic(M, x, v)
    speed = M.norm(x, v)
    F = mf.parallel_frame(M, path, mf.orthonormal_basis(M, x, np.c_[v, [0.0, 1.0]]))
    g = M.metric(path.positions)
    gram = np.swapaxes(F, -1, -2) @ g @ F
    assert np.max(np.abs(gram - np.eye(2))) <= 1e-8
    assert np.max(np.abs(F[..., 0] - path.velocities / speed)) <= 1e-8


def test_euclidean_parallel_frame_is_constant():
    M = mf.Euclidean(3)
    path = mf.geodesic(M, np.zeros(3), np.ones(3), samples=21)
    F = mf.parallel_frame(M, path)
    assert np.allclose(F, np.eye(3))


def test_leaving_the_chart_raises():
    # the hyperbolic ball is complete, so use a flat metric on a bounded box
    M = mf.custom(2, lambda x: np.eye(2), mf.ChartDomain(2, (-1.0, -1.0), (1.0, 1.0)))
    with pytest.raises(DomainEscapeError) as err:
        mf.geodesic(M, np.array([0.0, 0.0]), np.array([2.0, 0.0]), samples=101)
    assert 0.5 <= err.value.time <= 0.52


def test_periodic_wrap_and_minimal_image():
    dom = mf.ChartDomain(2, periodic=((1, 2 * np.pi),))
    assert np.allclose(dom.wrap(np.array([0.0, 7.0])), [0.0, 7.0 - 2 * np.pi])
    d = dom.difference(np.array([0.0, 0.1]), np.array([0.0, 2 * np.pi - 0.1]))
    assert np.allclose(d, [0.0, -0.2])


def test_cylinder_distance_wraps():
    C = mf.Cylinder()
    assert np.isclose(C.distance(np.array([0.0, 0.1]), np.array([0.0, 6.2])), 2 * np.pi - 6.1)


def test_sphere_embedding_roundtrip():
    S = mf.Sphere(3, 2.0)
    x = sphere_points(10, 3)
    y = S.embed(x)
    assert np.allclose(np.linalg.norm(y, axis=-1), 2.0)
    assert np.allclose(S.from_embedding(y), x)
    J = S.embed_jacobian(x)
    assert np.allclose(np.swapaxes(J, -1, -2) @ J, S.metric(x))


def test_batched_shapes():
    M = mf.Hyperbolic(2)
    x = ball_points(12).reshape(3, 4, 2)
    assert M.riemann(x).shape == (3, 4, 2, 2, 2, 2)
    assert mf.sectional(M, x, np.array([1.0, 0.0]), np.array([0.0, 1.0])).shape == (3, 4)
