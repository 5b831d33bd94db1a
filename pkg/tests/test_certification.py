import math

import numpy as np
import pytest

from certdyn.certification import (CertificationError, WitnessSpec, approx_witness_analysis,
                                   certify_state, delta_prime_value, delta_value, evolved_witness,
                                   infidelity_bound, pauli_coefficients, plan_regions,
                                   product_parent, simulate_measurements, term_expectations,
                                   validate_density)
from certdyn.exact import product_state
from certdyn.hamiltonian import build_model, structural_params
from certdyn.lattice import Lattice
from certdyn.linalg import kron_all, op_norm

import _suites

UP = np.array([1.0, 0.0])
PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]


def dims_of(sites):
    return {s: 2 for s in sites}


def test_maximally_mixed_product_parent():
    sites = (1, 2, 3, 4)
    W = product_parent({s: UP for s in sites}, [[s] for s in sites])
    rho = np.eye(16) / 16
    assert math.isclose(sum(term_expectations(rho, W, sites, dims_of(sites))), 2.0)


def test_product_parent_ground_state_and_spectrum():
    sites = (1, 2, 3, 4, 5)
    rng = np.random.default_rng(5)
    from certdyn.certification import random_product_vectors
    vecs = random_product_vectors(sites, rng)
    W = product_parent(vecs, [[1, 2], [3], [4, 5]])
    G = W.dense(sites, dims_of(sites))
    psi = product_state([vecs[s] for s in sites])
    assert np.linalg.norm(G @ psi) < 1e-12
    w = np.round(np.linalg.eigvalsh(G), 8)
    values, counts = np.unique(w, return_counts=True)
    assert values.tolist() == [0, 1, 2, 3]
    assert counts.tolist() == _suites.product_multiplicities([4, 2, 4]).tolist()


def test_evolved_witness_spectrum_and_ground_state():
    rng = np.random.default_rng(11)
    H, spec, W, psi_t = _suites.certification_instance(rng, n=5, t=0.3)
    G = W["exact"].dense(H.lattice.sites, H.dims)
    assert np.linalg.norm(G @ psi_t) < 1e-10
    values, counts = np.unique(np.round(np.linalg.eigvalsh(G), 8), return_counts=True)
    assert values.tolist() == [0, 1, 2, 3, 4, 5]
    assert counts.tolist() == [1, 5, 10, 10, 5, 1]


def test_full_regions_reproduce_exact_witness():
    rng = np.random.default_rng(2)
    H = build_model("heisenberg_chain", 4)
    sites = H.lattice.sites
    from certdyn.certification import random_product_vectors
    spec = WitnessSpec(random_product_vectors(sites, rng), [[s] for s in sites],
                       [sites] * 4, 0.4)
    W = evolved_witness(spec, H)
    assert op_norm(W["exact"].dense(sites, H.dims) - W["truncated"].dense(sites, H.dims)) < 1e-12


def test_witness_spec_validation():
    v = {1: UP, 2: UP}
    with pytest.raises(CertificationError):
        WitnessSpec(v, [[1], [1, 2]], [[1], [1, 2]], 0.0)
    with pytest.raises(CertificationError):
        WitnessSpec(v, [[1], [2]], [[2], [2]], 0.0)
    with pytest.raises(CertificationError):
        WitnessSpec(v, [[1]], [[1]], 0.0)
    with pytest.raises(CertificationError):
        WitnessSpec({1: UP, 2: 2 * UP}, [[1], [2]], [[1], [2]], 0.0)


def test_infidelity_bound_examples():
    assert math.isclose(infidelity_bound(0.3, 0.0, 2.0)["beta"], 0.15)
    out = infidelity_bound(0.3, 0.0, 1.0, trace_distance=0.1, normG=4.0)
    assert math.isclose(out["worst_case"], 0.4)
    with pytest.raises(CertificationError):
        infidelity_bound(0.3, 1.0, 1.0)


def test_delta_formulas():
    assert math.isclose(delta_value(0.5, 4, 0.05), 0.15)
    assert math.isclose(delta_prime_value(0.5, 4, 0.05), 0.3 / 3)


def test_density_validation():
    with pytest.raises(CertificationError):
        validate_density(np.diag([0.5, 0.6]))
    with pytest.raises(CertificationError):
        validate_density(np.diag([1.5, -0.5]))
    with pytest.raises(CertificationError):
        validate_density(np.array([[0.5, 0.1], [0.2, 0.5]]))


def test_certificate_is_sound_on_samples():
    rng = np.random.default_rng(8)
    H, spec, W, psi_t = _suites.certification_instance(rng, n=4)
    sites = H.lattice.sites
    gap = op_norm(W["exact"].dense(sites, H.dims) - W["truncated"].dense(sites, H.dims))
    for _ in range(20):
        rho = _suites.nearby_density(psi_t, 0.05, rng)
        cert = certify_state(rho, W["truncated"], gap, sites, H.dims)
        assert 1 - np.vdot(psi_t, rho @ psi_t).real <= cert.bound + 1e-12


def test_perturbation_guarantees():
    rng = np.random.default_rng(4)
    H, spec, W, psi_t = _suites.certification_instance(rng, n=4, t=0.2)
    sites = H.lattice.sites
    dp = op_norm(W["exact"].dense(sites, H.dims) - W["truncated"].dense(sites, H.dims))
    assert dp < 0.5
    res = approx_witness_analysis(W["exact"], W["truncated"], dp, psi_t, sites, H.dims)
    assert res["gap"] >= res["gap_bound"] - 1e-12
    assert res["overlap"] >= res["overlap_bound"] - 1e-12
    assert res["trace_distance"] <= res["trace_bound"] <= res["trace_bound_simple"] + 1e-15
    with pytest.raises(CertificationError):
        approx_witness_analysis(W["exact"], W["truncated"], 0.5, psi_t, sites, H.dims)


def test_pauli_coefficients_reconstruct(rng):
    from certdyn.linalg import random_hermitian
    M = random_hermitian(8, rng)
    c = pauli_coefficients(M, 3)
    back = sum(c[i, j, k] * kron_all([PAULI[i], PAULI[j], PAULI[k]])
               for i in range(4) for j in range(4) for k in range(4))
    assert np.allclose(back, M)


def test_stratified_zero_variance():
    W = product_parent({1: UP}, [[1]])
    out = simulate_measurements(np.diag([1.0, 0.0]), W, 30, seed=0, sites=(1,), dims={1: 2},
                                allocation="stratified")
    assert out["std_error"] == 0.0
    assert abs(out["E_rho_hat"]) < 1e-12


def test_measurement_errors():
    W = product_parent({1: UP}, [[1]])
    with pytest.raises(CertificationError):
        simulate_measurements(np.diag([1.0, 0.0]), W, 0, 0, (1,), {1: 2})
    with pytest.raises(CertificationError):
        simulate_measurements(np.diag([1.0, 0.0]), W, 2, 0, (1,), {1: 2}, allocation="stratified")
    with pytest.raises(CertificationError):
        simulate_measurements(np.diag([1.0, 0.0]), W, 10, 0, (1,), {1: 2}, allocation="other")


def test_estimator_error_scaling():
    rng = np.random.default_rng(3)
    H, spec, W, psi_t = _suites.certification_instance(rng, n=4, t=0.2)
    sites = H.lattice.sites
    rho = _suites.nearby_density(psi_t, 0.1, rng)
    se = [simulate_measurements(rho, W["truncated"], M, 1, sites, H.dims)["std_error"]
          for M in (400, 40000)]
    assert 8 < se[0] / se[1] < 12


def test_plan_regions_meets_requirement():
    lat = Lattice.chain(12)
    H = build_model("heisenberg_chain", 12)
    p = structural_params(H)
    spec = plan_regions(lat, p, 0.1, 0.5, H=H)
    m = spec.meta
    rhs = p.v * 0.1 + math.log(2 * 12 / (0.5 - 12 * m["gamma"])) + math.log(2 * p.M / p.Z)
    assert math.isclose(m["D"], rhs)
    assert math.isclose(m["delta"], (0.5 - 12 * m["gamma"]) / 2)
    assert all(Y <= R for Y, R in zip(spec.partition, spec.regions))


def test_cube_plan_partitions_lattice():
    lat = Lattice.hypercube(6, 2)
    H = build_model("heisenberg_grid", (6, 2))
    p = structural_params(H)
    spec = plan_regions(lat, p, 0.01, 0.5, partition_style="cubes", H=H)
    covered = set()
    for Y in spec.partition:
        assert not covered & Y
        covered |= Y
    assert covered == set(lat.sites)
    with pytest.raises(CertificationError):
        plan_regions(Lattice.chain(4), p, 0.1, 0.5, partition_style="cubes")
