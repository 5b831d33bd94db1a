import json
import math

import numpy as np
import pytest

from certdyn.hamiltonian import (HamiltonianError, LocalHamiltonian, LocalTerm, NoInteractions,
                                 build_model, heisenberg_bond, interaction_split,
                                 minimize_term_norms, pauli_term, shell_counts,
                                 structural_params)
from certdyn.lattice import Lattice
from certdyn.linalg import op_norm


def test_heisenberg_bond_norm_equals_coupling():
    for c in (0.3, 1.0, 2.5):
        assert math.isclose(op_norm(heisenberg_bond(c)), c)


def test_chain_parameters():
    # hand count: a bond touches itself and its two neighbours
    p = structural_params(build_model("heisenberg_chain", 6))
    assert (p.J, p.a, p.Z, p.Y, p.kappa) == (2.0, 1.0, 3, 2, 0.0)
    assert p.M == 2.0
    assert math.isclose(p.v, 2.0 * 3 * math.e)


def test_square_lattice_parameters():
    # sup metric: the shell at distance 1 around a bulk site holds 14 bonds
    p = structural_params(build_model("heisenberg_grid", (4, 2)))
    assert p.Z == 7
    assert p.kappa == 1.0
    assert p.shell_max[:2] == (4, 14)
    assert p.M == 14.0


def test_transverse_field_parameters():
    p = structural_params(build_model("ising_transverse", 5, [1.0, 0.5]))
    assert p.Z == 5
    assert p.J == 2.0


def test_negative_kappa_rejected():
    with pytest.raises(HamiltonianError):
        structural_params(build_model("heisenberg_chain", 4), kappa=-1)


def test_shell_counts_cover_all_supports():
    H = build_model("heisenberg_grid", (3, 2))
    counts = shell_counts(H)
    assert (counts.sum(axis=1) == len(H.terms)).all()


def test_non_hermitian_term_rejected():
    with pytest.raises(HamiltonianError):
        LocalTerm.constant((1,), np.array([[0, 1], [0, 0]]))


def test_overlapping_schedule_rejected():
    Z = np.diag([1.0, -1.0])
    with pytest.raises(HamiltonianError):
        LocalTerm.scheduled((1,), [(0, 2, Z), (1, 3, Z)])


def test_duplicate_supports_are_merged():
    lat = Lattice.chain(2)
    H = LocalHamiltonian(lat, [pauli_term((1, 2), "ZZ"), pauli_term((1, 2), "XX")])
    assert len(H.terms) == 1
    assert np.allclose(H.dense(), pauli_term((1, 2), "ZZ").at(0) + pauli_term((1, 2), "XX").at(0))


def test_dense_matches_kron_sum():
    H = build_model("ising_transverse", 3, [1.0, 0.7])
    X = np.array([[0, 1], [1, 0]])
    Z = np.diag([1, -1])
    I = np.eye(2)
    ref = (np.kron(np.kron(Z, Z), I) + np.kron(I, np.kron(Z, Z))
           + 0.7 * (np.kron(np.kron(X, I), I) + np.kron(np.kron(I, X), I) + np.kron(I, np.kron(I, X))))
    assert np.allclose(H.dense(), ref)


def test_restriction_and_extension():
    H = build_model("heisenberg_chain", 6)
    HR = H.restrict({2, 3, 4})
    assert {t.sites for t in HR.terms} == {(2, 3), (3, 4)}
    assert H.extension({3}) == frozenset({2, 3, 4})


def test_time_dependent_breakpoints():
    lat = Lattice.chain(2)
    Z = np.diag([1.0, -1.0])
    term = LocalTerm.scheduled((1,), [(0.0, 1.0, Z), (1.0, 2.0, 2 * Z)])
    H = LocalHamiltonian(lat, [term, pauli_term((1, 2), "XX")])
    assert H.is_time_dependent()
    assert H.breakpoints() == [0.0, 1.0, 2.0]
    assert np.allclose(H.dense(1.5) - H.dense(0.5), np.kron(Z, np.eye(2)))


def test_json_round_trip(tmp_path):
    lat = Lattice.chain(3)
    Z = np.diag([1.0, -1.0])
    H = LocalHamiltonian(lat, [LocalTerm.scheduled((2,), [(0.0, math.inf, Z)]),
                               pauli_term((1, 2), "XY", 0.5), pauli_term((2, 3), "ZZ")])
    path = tmp_path / "h.json"
    H.save(path)
    back = LocalHamiltonian.load(path)
    for t in (-1.0, 0.5, 10.0):
        assert np.array_equal(back.dense(t), H.dense(t))
    json.loads(path.read_text())


def test_interaction_split():
    H = build_model("ising_transverse", 4)
    F, G = interaction_split(H)
    assert all(len(t.support) == 1 for t in F.terms)
    assert all(len(t.support) == 2 for t in G.terms)
    assert np.allclose(F.dense() + G.dense(), H.dense())
    with pytest.raises(NoInteractions):
        interaction_split(F)


def test_minimize_term_norms_preserves_hamiltonian(rng):
    lat = Lattice.chain(3)
    from certdyn.linalg import random_hermitian
    H = LocalHamiltonian(lat, [LocalTerm.constant((1, 2), random_hermitian(4, rng)),
                               LocalTerm.constant((2, 3), random_hermitian(4, rng))])
    H2 = minimize_term_norms(H)
    assert np.allclose(H2.dense(), H.dense())
    before = max(op_norm(t.at(0)) for t in H.terms if len(t.support) == 2)
    after = max(op_norm(t.at(0)) for t in H2.terms if len(t.support) == 2)
    assert after <= before + 1e-12


def test_unknown_model():
    with pytest.raises(HamiltonianError):
        build_model("potts", 4)
