import math

import numpy as np
import pytest

from certdyn.hamiltonian import build_model, structural_params
from certdyn.lr_bounds import (BoundNotApplicable, InfeasibleTolerance, approx_observable_requirement,
                               ceil_da, empirical_truncation_error, is_large_enough, make_plan,
                               poly_exp_threshold, quasilocality_bound, required_distance,
                               simplified_bound)

import _suites

Z = np.diag([1.0, -1.0])


@pytest.fixture(scope="module")
def chain():
    H = build_model("heisenberg_chain", 8)
    return H, structural_params(H)


def test_plan_geometry(chain):
    H, p = chain
    plan = make_plan(H, p, {4}, {2, 3, 4, 5, 6})
    assert plan.d_a == 3
    assert plan.barR == frozenset(range(1, 8))
    assert math.isclose(plan.D, 1.5)
    assert plan.alpha_q == 1.0


def test_plan_rejects_bad_regions(chain):
    H, p = chain
    with pytest.raises(ValueError):
        make_plan(H, p, {4}, {5, 6})
    with pytest.raises(ValueError):
        make_plan(H, p, {4}, {4, 5}, q=1.0)


def test_bound_formula(chain):
    H, p = chain
    plan = make_plan(H, p, {4}, {2, 3, 4, 5, 6})
    # kappa = 0: (2 M / Z) ||A|| exp(v t - 3)
    expect = (2 * 2.0 / 3) * math.exp(p.v * 0.1 - 3)
    assert math.isclose(quasilocality_bound(p, 1.0, 0.1, plan), expect)
    simple = simplified_bound(p, 1.0, 0.1, plan)
    assert math.isclose(simple["bound"], (2 * 2.0 / 3) * math.exp(p.v * 0.1 - 1.5))


def test_precondition_enforced(chain):
    H, p = chain
    plan = make_plan(H, p, {4}, {4})
    with pytest.raises(BoundNotApplicable):
        quasilocality_bound(p, 1.0, 0.1, plan)


def test_full_region_and_zero_time_are_exact(chain):
    H, p = chain
    res = empirical_truncation_error(H, Z, {4}, H.lattice.all, 0.7, params=p)
    assert res["exact_error"] <= 1e-9 and res["bound"] == 0.0
    res = empirical_truncation_error(H, Z, {4}, {3, 4, 5}, 0.0, params=p)
    assert res["exact_error"] <= 1e-9


def test_dense_error_below_bound(chain):
    H, p = chain
    res = empirical_truncation_error(H, Z, {4}, {2, 3, 4, 5, 6}, 0.2, params=p)
    assert res["satisfied"]
    assert res["exact_error"] > 0


def test_large_enough_and_threshold():
    assert poly_exp_threshold(0, 1.0) == 0.0
    assert poly_exp_threshold(1, 2.0) == 0.0
    assert math.isclose(poly_exp_threshold(2, 0.5), 8 * math.log(4))
    assert not is_large_enough(3.0, 1.0, 0.5)
    assert is_large_enough(12.0, 1.0, 0.5)
    assert ceil_da(3.0000000000001) == 3


def test_required_distance_meets_tolerance(chain):
    H, p = chain
    req = required_distance(p, 1.0, 0.3, 1e-3)
    plan_bound = (2 * p.M / p.Z) * math.exp(p.v * 0.3 - req["D_min"])
    assert math.isclose(plan_bound, 1e-3)
    with pytest.raises(ValueError):
        required_distance(p, 1.0, 0.3, 0.0)


def test_observable_requirement(chain):
    H, p = chain
    out = approx_observable_requirement(4, 0.01, 0.5, p, 0.2)
    assert math.isclose(out["delta"], (0.5 - 0.04) / 2)
    assert math.isclose(out["D_min"], p.v * 0.2 + math.log(8 / 0.46) + math.log(2 * p.M / p.Z))
    with pytest.raises(InfeasibleTolerance):
        approx_observable_requirement(10, 0.1, 0.5, p, 0.2)
    fout = approx_observable_requirement(4, 0.01, 0.5, p, 0.2, f=lambda D: 1.0, n=4)
    assert math.isclose(fout["D_min"], out["D_min"], rel_tol=1e-9)


def test_sampled_soundness_small():
    out = _suites.lr_soundness(12, seed=3)
    assert out["violations"] == 0
    assert out["trivial_max"] <= 1e-9
