import numpy as np
import pytest

from qproxim.opcore import (
    GAMMA1,
    GAMMA2,
    DimensionError,
    Operator,
    commutator,
    gamma_pair_norm,
    opnorm,
    tensor_gamma,
)

RNG = np.random.default_rng(7)


def random_dense(n, herm=False):
    m = RNG.standard_normal((n, n)) + 1j * RNG.standard_normal((n, n))
    if herm:
        m = (m + m.conj().T) / 2
    return Operator.from_dense(m)


def random_banded(n, offsets):
    bands = {k: RNG.standard_normal(n - abs(k)) + 1j * RNG.standard_normal(n - abs(k))
             for k in offsets}
    return Operator.from_bands(n, bands)


def test_opnorm_identity():
    assert opnorm(Operator.identity(5)) == pytest.approx(1.0)


def test_opnorm_diagonal_spectral_radius():
    assert opnorm(Operator.diagonal([1, -2, 3])) == pytest.approx(3.0)


def test_opnorm_commutator_with_shift():
    # h(n) = 1/(|n|+1) on window |n| <= 10; the largest successive difference
    # |h(1)-h(0)| = 1/2 is the norm of [h, U] (single off-diagonal band).
    w = 10
    ns = np.arange(-w, w + 1)
    h = Operator.diagonal(1.0 / (np.abs(ns) + 1), banded=True)
    u = Operator.shift(2 * w + 1)
    c = commutator(u, h)
    dense_svd = np.linalg.norm(c.to_array(), 2)   # independent oracle
    assert dense_svd == pytest.approx(0.5, abs=1e-12)
    assert opnorm(c) == pytest.approx(0.5, abs=1e-10)


def test_non_square_rejected():
    with pytest.raises(DimensionError):
        Operator.from_dense(np.zeros((2, 3)))


def test_commutator_dim_mismatch():
    with pytest.raises(DimensionError):
        commutator(Operator.identity(2), Operator.identity(3))


def test_commutator_with_identity_vanishes():
    a = random_dense(6)
    c = commutator(Operator.identity(6), a)
    assert np.max(np.abs(c.to_array())) == 0.0


def test_diagonals_commute():
    d = Operator.diagonal(RNG.standard_normal(7))
    e = Operator.diagonal(RNG.standard_normal(7))
    assert np.max(np.abs(commutator(d, e).to_array())) == 0.0


def test_shift_commutator_with_linear_diagonal():
    # [U, f] with f(n) = n equals -U on the interior of the window.
    w = 6
    n = 2 * w + 1
    f = Operator.diagonal(np.arange(-w, w + 1).astype(complex), banded=True)
    u = Operator.shift(n)
    c = commutator(u, f).to_array()
    expected = -u.to_array()
    # boundary rows of the truncation are excluded
    assert np.allclose(c[1:, : n - 1], expected[1:, : n - 1])


def test_banded_product_matches_dense():
    for _ in range(8):
        n = 17
        a = random_banded(n, [-3, 0, 2])
        b = random_banded(n, [-1, 0, 4])
        ab = (a @ b).to_array()
        assert np.allclose(ab, a.to_array() @ b.to_array(), atol=1e-12)


def test_adjoint_involution_and_layout_agreement():
    a = random_banded(12, [-2, 0, 1, 5])
    assert np.allclose(a.adjoint().adjoint().to_array(), a.to_array())
    assert np.allclose(a.to_dense_op().to_banded_op().to_array(), a.to_array())


def test_opnorm_banded_matches_dense_path():
    for n in (64, 130):
        a = random_banded(n, [-4, -1, 0, 2, 7])
        dense = np.linalg.norm(a.to_array(), 2)
        assert opnorm(a) == pytest.approx(dense, rel=1e-8)


def test_opnorm_iterative_large_banded():
    n = 900
    a = random_banded(n, [-2, 0, 3])
    v = opnorm(a, tol=1e-8)
    dense = np.linalg.norm(a.to_array(), 2)
    assert v <= dense * (1 + 1e-7)
    assert dense <= v * (1 + 1e-6)


def test_cstar_identity_and_submultiplicativity():
    tol = 1e-10
    for _ in range(6):
        a = random_dense(8)
        b = random_dense(8)
        na, nb = opnorm(a), opnorm(b)
        assert opnorm(a @ b) <= na * nb + 10 * tol * na * nb
        assert opnorm(a.adjoint() @ a) == pytest.approx(na**2, rel=1e-9)


def test_commutator_bilinear_antisymmetric():
    for _ in range(5):
        a, b, c = (random_dense(5) for _ in range(3))
        lhs = commutator(a + 2.5 * b, c).to_array()
        rhs = commutator(a, c).to_array() + 2.5 * commutator(b, c).to_array()
        assert np.allclose(lhs, rhs, atol=1e-12)
        assert np.allclose(commutator(a, b).to_array(), -commutator(b, a).to_array())


def test_gamma_properties():
    g1, g2 = GAMMA1.to_array(), GAMMA2.to_array()
    assert np.allclose(g1 @ g2 + g2 @ g1, 0)
    assert np.allclose(g1 @ g1, np.eye(2))
    assert np.allclose(g2 @ g2, np.eye(2))
    assert np.allclose(g1, g1.conj().T)


def test_tensor_gamma_norms():
    assert opnorm(tensor_gamma(Operator.identity(4), GAMMA1)) == pytest.approx(1.0)
    for _ in range(4):
        a = random_dense(5)
        assert opnorm(tensor_gamma(a, GAMMA1)) == pytest.approx(opnorm(a), rel=1e-10)


def test_gamma_pair_norm_vs_dense_oracle():
    for _ in range(5):
        a = random_dense(5)
        b = random_dense(5)
        assembled = tensor_gamma(a, GAMMA1) + tensor_gamma(b, GAMMA2)
        oracle = np.linalg.norm(assembled.to_array(), 2)
        assert gamma_pair_norm(a, b) == pytest.approx(oracle, rel=1e-10)
        # compression bound: the pair dominates each component
        assert oracle >= max(opnorm(a), opnorm(b)) - 1e-10


def test_tensor_gamma_rejects_wrong_shape():
    with pytest.raises(DimensionError):
        tensor_gamma(Operator.identity(3), Operator.identity(3))


def test_json_roundtrip():
    a = random_banded(9, [-1, 0, 3])
    b = Operator.from_json(a.to_json())
    assert np.allclose(a.to_array(), b.to_array())
    d = random_dense(4)
    e = Operator.from_json(d.to_json())
    assert np.allclose(d.to_array(), e.to_array())
