import dataclasses
import io

import numpy as np
import pytest

from otcurvature import manifold as mf
from otcurvature import transport as tr
from otcurvature import verify as vf
from otcurvature.errors import PreconditionError

E2 = mf.Euclidean(2)


def q(t):
    return t * t - t + 1.25


def uniform(length=1.0, N=32, p=1):
    axes = ((length,), (0.0,)) if p == 1 else ((length, 0.0), (0.0, length), (0.0, 0.0))
    M = E2 if p == 1 else mf.Euclidean(3)
    return tr.discretize(M, tr.AffinePatch((0.0,) * M.dim, axes), N)


def test_renyi_uniform_unit_support():
    mu = uniform()
    for pp in (1.0, 2.0, 7.5):
        assert vf.renyi_entropy(mu, pp) == pytest.approx(-1.0)


def test_renyi_p1_is_minus_length():
    mu = uniform(3.0)
    assert vf.renyi_entropy(mu, 1.0) == pytest.approx(-vf.hausdorff_support(mu)) == pytest.approx(-3.0)


@pytest.mark.parametrize("pp", [1.0, 1.5, 3.0])
def test_renyi_jensen_bound(pp):
    mu = tr.discretize(E2, tr.CircleArc((0, 0), 1.0), 64, density=lambda u: 1 + 0.8 * np.sin(6 * u[:, 0]))
    assert -vf.hausdorff_support(mu) ** (1 / pp) <= vf.renyi_entropy(mu, pp) + 1e-15


def test_segments_endpoint_functionals(flows):
    mu0 = flows("segments").measure(0.0)
    assert np.allclose(mu0.density, 2 / np.sqrt(5))
    assert vf.renyi_entropy(mu0, 1.0) == pytest.approx(-np.sqrt(5) / 2, abs=1e-12)
    assert vf.shannon_entropy(mu0) == pytest.approx(np.log(2 / np.sqrt(5)), abs=1e-12)


def test_entropy_scaling():
    assert vf.shannon_entropy(uniform(1.0)) == pytest.approx(0.0, abs=1e-15)
    lam = 2.5
    assert vf.shannon_entropy(uniform(lam)) - vf.shannon_entropy(uniform(1.0)) == pytest.approx(-np.log(lam))
    # in dimension p the density scales by lam^-p
    assert vf.shannon_entropy(uniform(lam, 16, 2)) == pytest.approx(-2 * np.log(lam))


def test_hausdorff_circle():
    mu = tr.discretize(E2, tr.CircleArc((1.0, 1.0), 1.0), 50)
    assert vf.hausdorff_support(mu) == pytest.approx(2 * np.pi)


def test_hausdorff_segments(flows):
    r = flows("segments")
    assert vf.hausdorff_support(r.measure(0.5)) == pytest.approx(1.0, abs=1e-12)
    assert vf.hausdorff_support(r.measure(0.0)) == pytest.approx(1.118033988749895, abs=1e-12)


def test_sharp_oracle_values():
    o = vf.sharp_example_oracle(np.array([0.0, 0.5, 1.0]))
    assert np.allclose(o.H1, [np.sqrt(5) / 2, 1.0, np.sqrt(5) / 2])
    assert np.allclose(o.kappa, [0.64, 1.0, 0.64])
    assert np.allclose(o.J, o.H1) and np.allclose(o.rho * o.J, 1.0)
    t = np.linspace(0, 1, 11)
    assert np.allclose(vf.sharp_example_oracle(t).kappa, vf.sharp_example_oracle(1 - t).kappa)


def test_segments_renyi_equality(flows):
    reps = vf.check_lower_renyi(flows("segments"), 0.0, 1.0, scenario="segments")
    assert len(reps) == 11 and all(r.passed for r in reps)
    assert max(abs(r.slack) for r in reps) <= 1e-6
    o = vf.sharp_example_oracle(np.array([r.t for r in reps]))
    assert np.allclose([r.lhs for r in reps], -o.H1, atol=1e-12)


def test_segments_bm_equality_at_half(flows):
    rep = next(r for r in vf.brunn_minkowski(flows("segments"), 0.0) if r.t == 0.5)
    assert rep.lhs == pytest.approx(1.0, abs=1e-12) and rep.rhs == pytest.approx(1.0, abs=1e-6)
    assert rep.params["jensen"] is True


def test_kappa_free_control_fails(flows):
    reps = vf.check_lower_renyi(flows("segments"), 0.0, force_kappa_zero=True, expect_fail=True)
    half = next(r for r in reps if r.t == 0.5)
    assert not half.passed and half.slack == pytest.approx(1 - np.sqrt(5) / 2, abs=1e-9)
    assert half.params["kappa_zero"] is True


@pytest.mark.parametrize("name,K", [("sphere-arc", 0.0), ("sphere-cap", 1.0), ("hyperbolic", -2.0), ("segments", 0.0)])
def test_renyi_holds_for_all_exponents(flows, name, K):
    r = flows(name)
    for pp in (r.p, r.p + 1, 2 * r.p):
        reps = vf.check_lower_renyi(r, K, pp)
        assert all(x.passed for x in reps), pp


@pytest.mark.parametrize("name,K", [("sphere-cap", 1.0), ("hyperbolic", -2.0), ("sphere-arc", 0.0)])
def test_entropy_and_bm_hold(flows, name, K):
    r = flows(name)
    assert all(x.passed for x in vf.check_lower_entropy(r, K))
    bm = vf.brunn_minkowski(r, K)
    assert all(x.passed and x.params["jensen"] for x in bm)
    assert min(x.slack for x in bm) >= 0


def test_entropy_on_all_grid_times(flows):
    r = flows("sphere-arc")
    reps = vf.check_lower_entropy(r, 0.0, times=list(r.times))
    assert len(reps) == r.samples and all(x.passed for x in reps)


def test_static_is_equality(flows):
    r = flows("static")
    reps = (vf.check_lower_renyi(r, 0.0) + vf.check_lower_entropy(r, 0.0) + vf.brunn_minkowski(r, 0.0)
            + vf.check_upper(r, 0.0, 0.25, 0.75))
    assert max(abs(x.slack) for x in reps) <= 1e-8


def test_effective_constants():
    assert vf.effective_constant(1.0, 2, 2) == 1.0
    assert vf.effective_constant(-1.0, 2, 3) == -2.0
    assert vf.effective_constant(-1.0, 3, 3) == -2.0
    assert vf.effective_constant(0.0, 1, 2) == 0.0


def test_sectional_form_records_constant(flows):
    reps = vf.check_sectional_forms(flows("hyperbolic"), -1.0)
    assert all(r.passed and r.params["K_bar"] == -2.0 and r.inequality == "sectional-form" for r in reps)
    ent = vf.check_sectional_forms(flows("sphere-cap"), 1.0, form="entropy")
    assert all(r.passed and r.params["K_bar"] == 1.0 for r in ent)


def test_upper_interior(flows):
    reps = vf.check_upper(flows("segments"), 0.0, 0.25, 0.75)
    assert all(r.passed for r in reps)
    assert [r.t for r in reps] == pytest.approx(np.linspace(0.25, 0.75, 11))


def test_upper_counterexample(flows):
    reps = vf.check_upper(flows("cylinder-endpoint"), 0.0, 0.0, 1.0, expect_fail=True)
    half = next(r for r in reps if r.t == 0.5)
    assert half.lhs == pytest.approx(2.0, abs=1e-3) and half.rhs == pytest.approx(1.0, abs=1e-3)
    assert not half.passed and half.expect_fail


def test_upper_argument_checks(flows):
    r = flows("segments")
    with pytest.raises(ValueError):
        vf.check_upper(r, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        vf.check_upper(r, -1.0, 0.25, 0.75)
    with pytest.raises(ValueError):
        vf.check_upper(flows("sphere-cap"), 1.0, 0.25, 0.75)


def test_preconditions_are_sampled(flows):
    with pytest.raises(PreconditionError):
        vf.check_lower_renyi(flows("sphere-arc"), 0.5)  # ric_1 can vanish on the sphere
    with pytest.raises(PreconditionError):
        vf.check_upper(flows("sphere-arc"), 0.5, 0.25, 0.75)  # sec = 1 > 0.5
    with pytest.raises(PreconditionError):
        vf.check_sectional_forms(flows("hyperbolic"), -0.5)


def test_vacuous_reports(flows):
    reps = vf.check_lower_renyi(flows("sphere-arc"), 50.0, check_precondition=False)
    moving = [r for r in reps if 0 < r.t < 1]
    assert all(r.vacuous and r.passed and r.slack == np.inf for r in moving)
    assert "vacuous=true" in vf.to_csv(moving)


def test_csv_and_summary(flows):
    r = flows("segments")
    reps = vf.check_lower_renyi(r, 0.0, scenario="segments")
    bad = vf.check_lower_renyi(r, 0.0, scenario="segments", force_kappa_zero=True, expect_fail=True)
    text = vf.to_csv(reps + bad)
    lines = text.splitlines()
    assert lines[0] == ",".join(vf.CSV_COLUMNS)
    assert lines[1].startswith("segments,lower-renyi,0.0,")
    assert text == vf.to_csv(reps + bad)
    table = vf.summary_table(reps + bad)
    assert "violation reproduced" in table and " ok" in table
    missing = vf.summary_table([dataclasses.replace(x, expect_fail=True) for x in reps])
    assert "EXPECTED FAILURE MISSING" in missing
    buf = io.StringIO()
    vf.write_csv(reps[:1], buf)
    assert buf.getvalue().count("\n") == 2
