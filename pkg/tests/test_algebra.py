import numpy as np
import pytest

from qproxim.algebra import (
    AlgebraSpec,
    Morphism,
    StateVec,
    ValidationError,
    character_delta,
    check_star_morphism,
    direct_sum,
    embed_state,
    function_algebra,
    identity_morphism,
    is_pinned_exhaustive,
    matrix_algebra,
    pure_state_sample,
)
from qproxim.opcore import Operator, commutator, opnorm


def test_function_algebra_validates():
    alg = function_algebra(4)
    assert alg.validate()
    assert alg.is_diagonal


def test_matrix_algebra_validates():
    alg = matrix_algebra(3)
    assert alg.validate()
    assert not alg.is_diagonal
    assert len(alg.sa_basis()) == 9


def test_closure_violation_detected():
    # span{E01} alone is not closed under adjoint
    m = np.zeros((2, 2), dtype=complex)
    m[0, 1] = 1.0
    alg = AlgebraSpec(ambient_dim=2, basis=[Operator.from_dense(m)],
                      unital=False, topography=[], pin=None)
    with pytest.raises(ValidationError):
        alg.validate()


def test_noncommuting_topography_detected():
    alg = matrix_algebra(2)
    bad = AlgebraSpec(ambient_dim=2, basis=alg.basis, unital=True,
                      topography=[1, 2], pin=None)  # E01, E10 do not commute
    with pytest.raises(ValidationError):
        bad.validate()


def test_pin_character_condition():
    alg = function_algebra(3, pin_index=1)
    assert alg.validate()
    # a mixed state is not multiplicative on the topography
    mixer = StateVec(rho=Operator.diagonal([0.5, 0.5, 0.0]), trace_mass=1.0)
    bad = AlgebraSpec(ambient_dim=3, basis=alg.basis, unital=True,
                      topography=alg.topography, pin=mixer)
    with pytest.raises(ValidationError):
        bad.validate()


def test_pure_state_sampling():
    alg = matrix_algebra(2)
    sts = pure_state_sample(alg, 3, seed=5)
    assert len(sts) == 3
    for s in sts:
        s.validate()
        assert s.mass == pytest.approx(1.0)
        for b in alg.basis:
            # positivity of the pairing: phi(a*) = conj(phi(a))
            assert s.pair(b.adjoint()) == pytest.approx(np.conj(s.pair(b)), abs=1e-12)
    again = pure_state_sample(alg, 3, seed=5)
    for s, t in zip(sts, again):
        assert alg.states_equal(s, t)


def test_state_validation_rejects_non_psd():
    bad = StateVec(rho=Operator.diagonal([1.5, -0.5]), trace_mass=1.0)
    with pytest.raises(ValidationError):
        bad.validate()


def test_character_delta():
    alg = function_algebra(5)
    d2 = character_delta(alg, 2)
    for i in range(5):
        val = d2.pair(alg.basis[i]).real
        assert val == pytest.approx(1.0 if i == 2 else 0.0, abs=1e-14)
    # multiplicative on the diagonal subalgebra
    for i in range(5):
        for j in range(5):
            a, b = alg.basis[i], alg.basis[j]
            assert d2.pair(a @ b) == pytest.approx(d2.pair(a) * d2.pair(b), abs=1e-12)
    with pytest.raises(IndexError):
        character_delta(alg, 9)
    with pytest.raises(ValidationError):
        character_delta(matrix_algebra(2), 0)


def test_direct_sum_dimensions_and_topography():
    a, b = function_algebra(2), matrix_algebra(2)
    s = direct_sum(a, b)
    assert s.ambient_dim == 4
    assert len(s.basis) == len(a.basis) + len(b.basis)
    for i in s.topography:
        for j in s.topography:
            assert opnorm(commutator(s.basis[i], s.basis[j])) <= 1e-10
    s.pin = embed_state(character_delta(a, 0), 0, 4)
    assert s.validate()


def test_identity_morphism_flags():
    alg = matrix_algebra(2)
    rep = check_star_morphism(identity_morphism(alg))
    assert rep["star"] and rep["multiplicative"] and rep["surjective"] and rep["topographic"]


def test_projection_morphism_flags():
    a, b = function_algebra(2), function_algebra(3)
    s = direct_sum(a, b)
    C = np.zeros((2, 5))
    C[0, 0] = C[1, 1] = 1.0
    proj = Morphism(s, a, C, label="proj_A")
    rep = check_star_morphism(proj)
    assert rep["star"] and rep["multiplicative"] and rep["surjective"] and rep["topographic"]


def test_scaling_map_not_multiplicative():
    alg = function_algebra(2)
    m = Morphism(alg, alg, 2.0 * np.eye(2))
    rep = check_star_morphism(m)
    assert not rep["multiplicative"]
    assert rep["surjective"]


def test_pullback_of_quasi_state_is_quasi_state():
    a, b = function_algebra(2), function_algebra(3)
    s = direct_sum(a, b)
    C = np.zeros((2, 5))
    C[0, 0] = C[1, 1] = 1.0
    proj = Morphism(s, a, C)
    psi = StateVec(rho=Operator.diagonal([0.4, 0.3]), trace_mass=0.7)
    pulled = proj.pull(psi)
    assert pulled.mass == pytest.approx(0.7)
    for i in range(5):
        val = pulled.pair(s.basis[i]).real
        assert val >= -1e-12


def test_pinned_exhaustive_acceptance():
    n = 21
    ns = np.arange(-10, 11)
    seq = [Operator.diagonal(np.maximum(1 - np.abs(ns) / k, 0.0), banded=True)
           for k in (2, 4, 8, 10)]
    pin = StateVec.from_vector(np.eye(n)[10])
    lips = [1 / 2, 1 / 4, 1 / 8, 1 / 10]
    norms = [1.0] * 4
    assert is_pinned_exhaustive(seq, lips, pin, norms, tol=0.2)
    assert not is_pinned_exhaustive(seq, lips, pin, norms, tol=1e-3)
    assert not is_pinned_exhaustive(seq, [0.1, 0.2, 0.3, 0.01], pin, norms, tol=0.2)


def test_self_adjoint_pairing_real():
    alg = matrix_algebra(2)
    sts = pure_state_sample(alg, 2, seed=0)
    for e in alg.sa_basis():
        assert abs(sts[0].pair(e).imag) <= 1e-10


def test_states_equal_ambient_independent():
    # same functional on the diagonal algebra, different ambient densities
    alg = function_algebra(2)
    s1 = StateVec(rho=Operator.diagonal([0.5, 0.5]), trace_mass=1.0)
    rho = np.array([[0.5, 0.25], [0.25, 0.5]])
    s2 = StateVec(rho=Operator.from_dense(rho), trace_mass=1.0)
    assert alg.states_equal(s1, s2)


def test_algebra_json_roundtrip():
    alg = function_algebra(3, pin_index=2)
    again = AlgebraSpec.from_json(alg.to_json())
    assert again.validate()
    assert again.ambient_dim == 3
    assert again.topography == [0, 1, 2]
    assert again.pin.pair(again.basis[2]).real == pytest.approx(1.0)
