import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canonlab.fock import (FieldOperator, FockBasis, FockVector, ModeGrid, annihilate, commutator,
                           create, energy_operator, exp_energy, inner, safe_defect)

GRID = ModeGrid(J=1)
BASIS = FockBasis(GRID, 3)

floats = st.floats(-2, 2, allow_nan=False)


def mode_vectors(M):
    return st.lists(st.tuples(floats, floats), min_size=M, max_size=M).map(
        lambda xs: np.array([complex(a, b) for a, b in xs]))


def test_mode_grid_invariants():
    g = ModeGrid(d=2, L=3.0, J=2, m=0.5)
    assert g.M == 25 and g.k.shape == (25, 2)
    assert np.all(g.k0 >= g.m)
    assert np.allclose(g.k0, g.k0[::-1])  # even in j
    assert math.isclose(g.w, (2 * math.pi / 3.0) ** 2)


@pytest.mark.parametrize("J,n_max", [(1, 2), (2, 3), (1, 5)])
def test_basis_size_and_order(J, n_max):
    b = FockBasis(ModeGrid(J=J), n_max)
    assert b.dim == sum(math.comb(b.grid.M + s - 1, s) for s in range(n_max + 1))
    keys = [(int(t), tuple(s)) for t, s in zip(b.totals, b.states)]
    assert keys == sorted(keys)
    assert len(set(map(tuple, b.states))) == b.dim
    for i in range(b.dim):
        assert b.index(b.occupation(i)) == i


def test_create_on_vacuum():
    psi = np.array([0.3, -1.0, 2.0j])
    v = create(BASIS, psi) @ BASIS.vacuum()
    for j in range(3):
        occ = [0, 0, 0]
        occ[j] = 1
        assert np.isclose(v.amplitudes[BASIS.index(occ)], math.sqrt(GRID.w) * psi[j])


def test_create_twice_single_mode_against_explicit_ladder():
    # one mode, n_max = 2: explicit 3x3 raising matrix
    b = FockBasis(ModeGrid(J=0), 2)
    adag = np.array([[0, 0, 0], [1, 0, 0], [0, math.sqrt(2), 0]])
    w = b.grid.w
    expected = (math.sqrt(w) * adag) @ (math.sqrt(w) * adag) @ np.array([1, 0, 0])
    got = (create(b, [1.0]) @ create(b, [1.0]) @ b.vacuum()).amplitudes
    assert np.allclose(got, expected) and np.isclose(got[2], math.sqrt(2) * w)


def test_zero_psi_gives_zero_operator():
    assert np.all(create(BASIS, np.zeros(3)).matrix == 0)


def test_annihilate_vacuum_is_zero():
    assert np.all((annihilate(BASIS, [1, 2, 3]) @ BASIS.vacuum()).amplitudes == 0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        create(BASIS, np.ones(4))


@settings(max_examples=25, deadline=None)
@given(mode_vectors(5), mode_vectors(5))
def test_ccr_on_safe_sector(psi, phi):
    b = FockBasis(ModeGrid(J=2), 3)
    level = b.n_max - 2
    c = commutator(annihilate(b, psi), create(b, phi))
    assert safe_defect(c, b.grid.w * np.sum(psi * phi), level) < 1e-10
    assert safe_defect(commutator(create(b, psi), create(b, phi)), 0.0, level) < 1e-10
    assert safe_defect(commutator(annihilate(b, psi), annihilate(b, phi)), 0.0, level) < 1e-10


@settings(max_examples=25, deadline=None)
@given(mode_vectors(3))
def test_annihilate_is_adjoint_of_create_conj(psi):
    a = annihilate(BASIS, psi).matrix
    assert np.array_equal(a, create(BASIS, np.conj(psi)).dagger().matrix)


def test_sector_width():
    assert create(BASIS, [1, 1, 1]).width == 1
    assert annihilate(BASIS, [1, 1, 1]).width == 1
    assert energy_operator(BASIS).width == 0 and exp_energy(BASIS, 0.4).width == 0


def test_energy_eigenvalues():
    P = energy_operator(BASIS).matrix
    assert P[0, 0] == 0
    k0 = GRID.k0
    assert np.isclose(P[BASIS.index([0, 1, 0]), BASIS.index([0, 1, 0])], k0[1])
    i = BASIS.index([1, 0, 1])
    assert np.isclose(P[i, i], k0[0] + k0[2])


def test_exp_energy_unitary_and_group_law():
    rng = np.random.default_rng(0)
    f = FockVector(BASIS, rng.normal(size=BASIS.dim) + 1j * rng.normal(size=BASIS.dim))
    U = exp_energy(BASIS, 0.8)
    assert abs((U @ f).norm() - f.norm()) < 1e-12
    assert np.allclose((U @ exp_energy(BASIS, -0.8)).matrix, np.eye(BASIS.dim), atol=1e-12)
    assert np.array_equal(exp_energy(BASIS, 0.0).matrix, np.eye(BASIS.dim))


def test_phase_conjugation_of_create():
    psi = np.array([1.0, 0.5j, -0.2])
    th = 0.37
    lhs = exp_energy(BASIS, th) @ create(BASIS, psi) @ exp_energy(BASIS, -th)
    rhs = create(BASIS, np.exp(1j * th * GRID.k0) * psi)
    assert np.max(np.abs(lhs.matrix - rhs.matrix)) < 1e-12


def test_inner_products():
    psi, phi = np.array([1, 2j, 0.5]), np.array([0.3, 1, -1j])
    om = BASIS.vacuum()
    got = inner(create(BASIS, psi) @ om, create(BASIS, phi) @ om)
    assert np.isclose(got, GRID.w * np.sum(np.conj(psi) * phi))
    assert inner(BASIS.basis_vector([1, 0, 0]), BASIS.basis_vector([0, 1, 0])) == 0
    f = BASIS.basis_vector([0, 2, 0])
    assert inner(f, f) == 1


def test_basis_mismatch():
    other = FockBasis(GRID, 2)
    with pytest.raises(ValueError):
        inner(BASIS.vacuum(), other.vacuum())


def test_hermitian_flag():
    psi = np.array([1, 2j, 0.5])
    phi = create(BASIS, psi) + annihilate(BASIS, np.conj(psi))
    assert phi.hermitian
    assert not create(BASIS, psi).hermitian


def test_json_roundtrip():
    op = create(BASIS, [1, 0.5j, -2])
    back = FieldOperator.from_dict(json.loads(op.to_json()))
    assert np.array_equal(back.matrix, op.matrix)
    v = create(BASIS, [1, 0, 0]) @ BASIS.vacuum()
    assert np.array_equal(FockVector.from_dict(v.to_dict()).amplitudes, v.amplitudes)
