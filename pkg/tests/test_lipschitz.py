import numpy as np
import pytest

from qproxim.classical import FinitePointedMetricSpace, random_space
from qproxim.lipschitz import (
    ClassicalLip,
    CommutatorDirac,
    Composite,
    ElementMap,
    MaxOf,
    NormImage,
    ScaledCoupling,
    aba_bound_check,
    axiom_violations,
    from_json,
    leibniz_check,
    polyhedral_rows,
    scaled_norm,
)
from qproxim.opcore import Operator, commutator, opnorm

RNG = np.random.default_rng(19)


def random_herm(n):
    m = RNG.standard_normal((n, n)) + 1j * RNG.standard_normal((n, n))
    return Operator.from_dense((m + m.conj().T) / 2)


def window_dirac(w, t=1):
    """grad seminorm of the shift/position pair on the window |n| <= w."""
    n = 2 * w + 1
    u = Operator.shift(n)
    ns = np.arange(-w, w + 1)
    nabla = Operator.diagonal((ns // t).astype(complex), banded=True)
    return CommutatorDirac((u, nabla))


def tent(w, k):
    ns = np.arange(-w, w + 1)
    return Operator.diagonal(np.maximum(1.0 - np.abs(ns) / k, 0.0), banded=True)


def test_tent_lipschitz_is_one_over_k():
    spec = window_dirac(25)
    for k in range(1, 11):
        f = tent(25, k)
        assert spec.eval(f) == pytest.approx(1.0 / k, abs=1e-12)
        assert opnorm(f) == pytest.approx(1.0)


def test_unit_has_zero_seminorm():
    spec = window_dirac(6)
    assert spec.eval(Operator.identity(13, banded=True)) == pytest.approx(0.0, abs=1e-14)


def test_classical_lip_two_point():
    space = FinitePointedMetricSpace(np.array([[0.0, 2.0], [2.0, 0.0]]))
    spec = ClassicalLip(space)
    f = Operator.diagonal([0.0, 1.0])
    assert spec.eval(f) == pytest.approx(0.5)


def test_classical_lip_matches_bruteforce():
    rng = np.random.default_rng(3)
    X = random_space(6, rng)
    spec = ClassicalLip(X)
    for _ in range(5):
        vals = rng.standard_normal(6)
        brute = max(abs(vals[i] - vals[j]) / X.dist[i, j]
                    for i in range(6) for j in range(i + 1, 6))
        assert spec.eval(Operator.diagonal(vals)) == pytest.approx(brute, rel=1e-12)


def test_dirac_eval_matches_assembled_block():
    # max-block evaluation against the dense gamma-assembled oracle
    from qproxim.opcore import GAMMA1, GAMMA2, tensor_gamma
    d1, d2 = random_herm(5), random_herm(5)
    spec = CommutatorDirac((d1, d2))
    for _ in range(4):
        a = random_herm(5)
        assembled = tensor_gamma(commutator(d1, a), GAMMA1) + \
            tensor_gamma(commutator(d2, a), GAMMA2)
        oracle = np.linalg.norm(assembled.to_array(), 2)
        assert spec.eval(a) == pytest.approx(oracle, rel=1e-10)


def test_leibniz_for_derivation_seminorms():
    spec = window_dirac(10)
    for _ in range(5):
        f = tent(10, RNG.integers(1, 5))
        u = Operator.shift(21)
        a = f @ u
        b = tent(10, RNG.integers(1, 5))
        ok, slack = leibniz_check(spec, a, b)
        assert ok, f"slack {slack}"


def test_leibniz_unit_case():
    spec = window_dirac(4)
    one = Operator.identity(9, banded=True)
    ok, slack = leibniz_check(spec, one, one)
    assert ok and slack >= -1e-12


def test_aba_bound():
    d = random_herm(4)
    spec = CommutatorDirac((d,), use_gammas=False)
    one = Operator.identity(4)
    b = random_herm(4)
    ok, info = aba_bound_check(spec, one, b)
    assert ok
    # a = unit reduces the bound to Lip(b) <= Lip(b)
    assert info["rhs"] == pytest.approx(2 * opnorm(b) * 0 + spec.eval(b), rel=1e-9)
    for _ in range(5):
        a, b = random_herm(4), random_herm(4)
        ok, info = aba_bound_check(spec, a, b)
        assert ok, info


def test_axioms_random():
    d = random_herm(5)
    spec = CommutatorDirac((d,), use_gammas=False)
    worst = 0.0
    for _ in range(20):
        a, b = random_herm(5), random_herm(5)
        v = axiom_violations(spec, a, b)
        worst = max(worst, *v.values())
    assert worst <= 1e-9


def test_composite_sandwich():
    # unit balls: B_{L,1} subset B_{L,M} subset M * B_{L,1}
    d = random_herm(4)
    base = CommutatorDirac((d,), use_gammas=False)
    M = 3.0
    for _ in range(10):
        a = random_herm(4)
        n1 = scaled_norm(base, 1.0, a)
        nM = scaled_norm(base, M, a)
        assert nM <= n1 + 1e-12
        assert n1 <= M * nM + 1e-12


def test_lower_semicontinuity_proxy():
    # |Lip(a+h) - Lip(a)| <= 2 ||D|| ||h|| for the commutator seminorm
    d = random_herm(5)
    spec = CommutatorDirac((d,), use_gammas=False)
    a = random_herm(5)
    for _ in range(5):
        h = random_herm(5) * 1e-3
        assert abs(spec.eval(a + h) - spec.eval(a)) <= 2 * opnorm(d) * opnorm(h) + 1e-12


def test_polyhedral_rows_classical():
    X = random_space(4, np.random.default_rng(0))
    spec = ClassicalLip(X)
    basis = [Operator.diagonal(np.eye(4)[i]) for i in range(4)]
    rows = polyhedral_rows(spec, basis)
    assert rows is not None
    x = np.random.default_rng(1).standard_normal(4)
    assert np.max(np.abs(rows @ x)) == pytest.approx(
        spec.eval(Operator.diagonal(x)), rel=1e-12)


def test_polyhedral_rows_rejects_generic_matrix_seminorm():
    d = random_herm(3)
    spec = CommutatorDirac((d,), use_gammas=False)
    basis = [random_herm(3) for _ in range(3)]
    assert polyhedral_rows(spec, basis) is None


def test_coupling_and_max_nodes():
    n = 4
    left = Operator.diagonal(np.arange(1.0, 5.0))
    cpl = ScaledCoupling(2.0,
                         ElementMap(kind="block", start=0, stop=n, left=left),
                         ElementMap(kind="block", start=n, stop=2 * n))
    a = np.diag(RNG.standard_normal(2 * n))
    op = Operator.from_dense(a)
    d1 = np.diag(a)[:n]
    d2 = np.diag(a)[n:]
    expected = 2.0 * np.max(np.abs(np.arange(1.0, 5.0) * d1 - d2))
    assert cpl.eval(op) == pytest.approx(expected, rel=1e-12)

    X = random_space(n, np.random.default_rng(2))
    node = MaxOf(((ElementMap(kind="block", start=0, stop=n), ClassicalLip(X)),
                  (ElementMap(kind="block", start=n, stop=2 * n), ClassicalLip(X))))
    v1 = ClassicalLip(X).eval(Operator.diagonal(d1))
    v2 = ClassicalLip(X).eval(Operator.diagonal(d2))
    assert node.eval(op) == pytest.approx(max(v1, v2), rel=1e-12)


def test_json_roundtrip():
    X = random_space(3, np.random.default_rng(5))
    spec = Composite(2.0, ClassicalLip(X))
    again = from_json(spec.to_json())
    f = Operator.diagonal([0.3, -0.1, 0.5])
    assert again.eval(f) == pytest.approx(spec.eval(f), rel=1e-12)
