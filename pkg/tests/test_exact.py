import math

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from certdyn.exact import (DIRAC_RESIDUAL_TOL, DimensionCapExceeded, DenseOperator, check_dim,
                           dirac_propagator, dirac_residual, dump_binary, embed, evolve_state,
                           heisenberg_evolve, load_binary, nontrivial_support, norms_and_fidelity,
                           phase_min_distance, product_state, propagator, trace_bound_from_distance,
                           trace_bound_from_overlap)
from certdyn.hamiltonian import LocalHamiltonian, LocalTerm, build_model, interaction_split, pauli_term
from certdyn.lattice import Lattice
from certdyn.linalg import op_norm, random_hermitian, random_state

import _suites


def test_single_qubit_rotation():
    lat = Lattice.chain(1)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    H = LocalHamiltonian(lat, [LocalTerm.constant((1,), X)])
    t = 0.37
    ref = math.cos(t) * np.eye(2) - 1j * math.sin(t) * X
    assert np.allclose(propagator(H, t, 0.0), ref)
    assert np.allclose(propagator(H, 0.0, t), ref.conj().T)


def test_piecewise_schedule_is_time_ordered():
    lat = Lattice.chain(1)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.diag([1.0, -1.0]).astype(complex)
    H = LocalHamiltonian(lat, [LocalTerm.scheduled((1,), [(0, 1, X), (1, 2, Z)])])
    from scipy.linalg import expm
    assert np.allclose(propagator(H, 2.0, 0.0), expm(-1j * Z) @ expm(-1j * X))
    assert np.allclose(propagator(H, 1.5, 0.5), expm(-0.5j * Z) @ expm(-0.5j * X))


def test_heisenberg_picture_trivial_cases(rng):
    H = build_model("heisenberg_chain", 3)
    A = random_hermitian(2, rng)
    assert np.allclose(heisenberg_evolve(H, np.eye(2), 0.8, support=(2,)), np.eye(8))
    full = embed(A, (2,), H.lattice.sites, H.dims)
    assert np.allclose(heisenberg_evolve(H, A, 0.3, 0.3, support=(2,)), full)
    assert math.isclose(op_norm(heisenberg_evolve(H, A, 0.9, support=(2,))), op_norm(A))


def test_evolution_preserves_norm(rng):
    H = build_model("ising_transverse", 4)
    psi = random_state(16, rng)
    assert math.isclose(np.linalg.norm(evolve_state(H, psi, 1.3)), 1.0)


def test_big_endian_embedding():
    Z = np.diag([1.0, -1.0])
    op = embed(Z, (1,), (1, 2), {1: 2, 2: 2})
    assert np.allclose(op, np.kron(Z, np.eye(2)))
    assert np.allclose(product_state([[1, 0], [0, 1]]), [0, 1, 0, 0])


def test_embed_rejects_bad_support():
    with pytest.raises(ValueError):
        embed(np.eye(2), (5,), (1, 2), {1: 2, 2: 2, 5: 2})


def test_dimension_cap(monkeypatch):
    monkeypatch.setenv("CERTDYN_DIM_CAP", "16")
    check_dim(16)
    with pytest.raises(DimensionCapExceeded):
        check_dim(32)


def test_nontrivial_support():
    sites = (1, 2, 3)
    dims = {s: 2 for s in sites}
    A = pauli_term((1, 3), "XZ").at(0)
    full = embed(A, (1, 3), sites, dims)
    assert nontrivial_support(full, sites, dims) == frozenset({1, 3})
    assert nontrivial_support(np.eye(8), sites, dims) == frozenset()


def test_binary_round_trip(tmp_path, rng):
    a = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    dump_binary(a, tmp_path / "a.bin")
    assert np.array_equal(load_binary(tmp_path / "a.bin"), a)
    (tmp_path / "bad.bin").write_bytes(b"nonsense")
    with pytest.raises(ValueError):
        load_binary(tmp_path / "bad.bin")


def test_dense_operator_json(rng):
    op = DenseOperator(random_hermitian(4, rng), (2, 3))
    back = DenseOperator.from_json(op.to_json())
    assert np.array_equal(back.matrix, op.matrix)
    assert back.support == (2, 3)


def test_norms_and_fidelity(rng):
    psi = random_state(4, rng)
    out = norms_and_fidelity(A=np.eye(3), psi=psi, phi=psi)
    assert math.isclose(out["op_norm"], 1.0)
    assert math.isclose(out["trace_norm"], 3.0)
    assert abs(out["infidelity"]) < 1e-12
    assert out["trace_distance"] < 1e-6


def test_state_distance_helpers_validate_input():
    with pytest.raises(ValueError):
        trace_bound_from_distance(2.0)
    with pytest.raises(ValueError):
        trace_bound_from_overlap(1.5)
    with pytest.raises(ValueError):
        phase_min_distance(-0.1)


def test_dirac_trivial_splits(rng):
    H = build_model("ising_transverse", 3)
    F, G = interaction_split(H)
    # with only single-site terms the interaction picture is trivial
    empty = H.subset([])
    res = dirac_propagator(F, F, empty, 0.2, 0.9, -0.1)
    assert np.allclose(res["U_D"], np.eye(8))
    res = dirac_propagator(G, empty, G, 0.2, 0.9, -0.1)
    assert np.allclose(res["U_D"], propagator(G, 0.9, -0.1))


def test_dirac_rejects_inconsistent_split():
    H = build_model("ising_transverse", 3)
    F, G = interaction_split(H)
    with pytest.raises(ValueError):
        dirac_propagator(H, F, F, 0.0, 0.5, 0.0)


def test_dirac_residual_small():
    H = build_model("ising_transverse", 4, [1.0, 0.8])
    F, G = interaction_split(H)
    assert dirac_residual(H, F, G, 0.2, 0.7, 0.1) <= DIRAC_RESIDUAL_TOL


def test_property_suites_small():
    report = _suites.merge(_suites.unitary_triangle_suite(300, seed=1),
                           _suites.poly_exp_suite(500, seed=1),
                           _suites.log_linear_suite(500, seed=1),
                           _suites.state_distance_suite(300, seed=1),
                           _suites.interaction_picture_suite(10, seed=1))
    assert all(v == 0 for _, v in report.values()), report


@given(st.floats(0, 20), st.floats(0.01, 20), st.floats(0, 50))
@example(5e-324, 2.0, 0.0)
def test_poly_exp_bound(n, a, extra):
    from certdyn.lr_bounds import poly_exp_threshold
    x = poly_exp_threshold(n, a) + extra
    if x > 0:
        assert n * math.log(x) - a * x <= 1e-12


@given(st.floats(1e-6, 1e6))
def test_log_linear_bound(x):
    from certdyn.lr_bounds import log_linear_gap
    assert log_linear_gap(x) >= -1e-15
