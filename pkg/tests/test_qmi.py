import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddbt import linalg as la
from ddbt import qmi
from ddbt.qmi import ProjectionPair, QmiSet

from conftest import random_regular_psi

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 5)


def regular_set(seed, p, q):
    return QmiSet(random_regular_psi(np.random.default_rng(seed), p, q), p, q)


def test_member_residual_trivial():
    Q = QmiSet(np.diag([1.0, -1.0]), 1, 1)
    assert qmi.is_member(Q, [[0.5]])
    assert qmi.is_member(Q, [[1.0]])
    assert not qmi.is_member(Q, [[1.1]])
    assert qmi.member_residual(Q, [[0.5]]) == pytest.approx(0.75)


def test_member_residual_shape_check():
    with pytest.raises(ValueError):
        qmi.member_residual(QmiSet(np.diag([1.0, -1.0, -1.0]), 1, 2), np.zeros((2, 1)))


def test_regularity_examples():
    assert qmi.check_regularity(QmiSet(np.diag([1.0, -1.0]), 1, 1))
    assert not qmi.check_regularity(QmiSet(np.diag([1.0, 0.0]), 1, 1))
    assert not qmi.check_regularity(QmiSet(np.diag([-1.0, -1.0]), 1, 1))
    assert not qmi.check_slater_by_inertia(QmiSet(np.diag([-1.0, -1.0]), 1, 1))


def test_dual_of_unit_ball():
    psi = np.diag([1.0, 1.0, -1.0, -1.0, -1.0])
    D = qmi.dual(QmiSet(psi, 2, 3))
    assert (D.row_dim, D.col_dim) == (3, 2)
    assert np.allclose(D.psi, np.diag([1.0, 1.0, 1.0, -1.0, -1.0]))


def test_dual_singular():
    with pytest.raises(qmi.SingularPsi):
        qmi.dual(QmiSet(np.diag([1.0, 0.0]), 1, 1))


@given(seeds, dims, dims)
def test_regularity_equals_slater_inertia(seed, p, q):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((p + q, p + q))
    psi = X + X.T
    # data sets have psi22 = -B B^T with ker psi22 inside ker psi12
    B = rng.standard_normal((q, rng.integers(1, q + 1)))
    psi[p:, p:] = -B @ B.T
    psi[:p, p:] = psi[:p, p:] @ B @ np.linalg.pinv(B)
    psi[p:, :p] = psi[:p, p:].T
    Q = QmiSet(psi, p, q)
    assert qmi.check_regularity(Q) == qmi.check_slater_by_inertia(Q)
    R = regular_set(seed, p, q)
    assert qmi.check_regularity(R) and qmi.check_slater_by_inertia(R)


def test_inertia_alone_needs_nonpositive_block():
    # right inertia, but psi22 > 0: the set is unbounded
    Q = QmiSet(np.array([[0.25, 0.5], [0.5, 0.21]]), 1, 1)
    assert qmi.check_slater_by_inertia(Q)
    assert not qmi.check_regularity(Q)


@given(seeds, dims, dims)
def test_dual_is_involution_and_transposes_members(seed, p, q):
    Q = regular_set(seed, p, q)
    D = qmi.dual(Q)
    assert np.allclose(qmi.dual(D).psi, Q.psi, rtol=1e-7, atol=1e-7 * np.abs(Q.psi).max())
    assert qmi.check_regularity(D)
    for Z in qmi.sample_members(Q, 5, seed):
        assert qmi.is_member(D, Z.T)
    assert np.allclose(qmi.center(D), qmi.center(Q).T)


@given(seeds, dims, dims)
def test_identity_reduction(seed, p, q):
    Q = regular_set(seed, p, q)
    R = qmi.reduce(Q, ProjectionPair(np.eye(p), np.eye(q)))
    assert np.allclose(R.psi, Q.psi, atol=1e-9 * np.abs(Q.psi).max())


@given(seeds, dims, dims, st.data())
def test_reduction_factorizations(seed, p, q, draw):
    rng = np.random.default_rng(seed)
    Q = regular_set(seed, p, q)
    r = draw.draw(st.integers(1, p))
    s = draw.draw(st.integers(1, q))
    W, V = rng.standard_normal((p, r)), rng.standard_normal((q, s))
    full = qmi.reduce(Q, ProjectionPair(W, V))
    cols = qmi.reduce(Q, ProjectionPair(np.eye(p), V))
    scale = 1e-8 * (1 + np.abs(full.psi).max())
    # row compression commutes with column reduction
    assert np.allclose(qmi.project_rows(cols, W).psi, full.psi, atol=scale)
    # column-only reduction dualizes to a row projection
    lhs = qmi.dual(cols).psi
    rhs = qmi.project_rows(qmi.dual(Q), V).psi
    assert np.allclose(lhs, rhs, atol=1e-7 * (1 + np.abs(rhs).max()))
    # with V = I the reduction is the plain row projection
    rows = qmi.reduce(Q, ProjectionPair(W, np.eye(q)))
    assert np.allclose(rows.psi, qmi.project_rows(Q, W).psi, atol=scale)


@given(seeds, dims, dims)
def test_center_residual_is_schur_complement(seed, p, q):
    Q = regular_set(seed, p, q)
    assert np.allclose(qmi.member_residual(Q, qmi.center(Q)), Q.schur(), atol=1e-8 * (1 + np.abs(Q.psi).max()))


@given(seeds, dims, dims, st.booleans(), st.data())
def test_projection_and_lift(seed, p, q, boundary, draw):
    rng = np.random.default_rng(seed)
    Q = regular_set(seed, p, q)
    r = draw.draw(st.integers(1, p))
    s = draw.draw(st.integers(1, q))
    pair = ProjectionPair(rng.standard_normal((p, r)), rng.standard_normal((q, s)))
    R = qmi.reduce(Q, pair)
    for Z in qmi.sample_members(Q, 4, rng, boundary=boundary):
        assert qmi.is_member(Q, Z)
        assert qmi.is_member(R, pair.W.T @ Z @ pair.V)
    for Zh in qmi.sample_members(R, 4, rng, boundary=boundary):
        Z = qmi.lift(Q, pair, Zh, R)
        assert qmi.is_member(Q, Z)
        assert np.allclose(pair.W.T @ Z @ pair.V, Zh, atol=1e-8 * (1 + np.abs(Zh).max()))


def test_lift_rejects_non_member():
    Q = QmiSet(np.diag([1.0, 1.0, -1.0]), 2, 1)
    pair = ProjectionPair(np.eye(2)[:, :1], np.eye(1))
    with pytest.raises(qmi.NotAMember):
        qmi.lift(Q, pair, [[2.0]])


def test_boundary_lift_is_on_boundary():
    # unit ball in R^{2x1}: the only preimage of a boundary point has a zero second entry
    Q = QmiSet(np.diag([1.0, 1.0, -1.0]), 2, 1)
    pair = ProjectionPair(np.eye(2)[:, :1], np.eye(1))
    Z = qmi.lift(Q, pair, [[1.0]])
    assert np.allclose(Z, [[1.0], [0.0]], atol=1e-8)


def test_rank_deficient_projection():
    with pytest.raises(qmi.RankDeficient):
        ProjectionPair(np.ones((3, 2)), np.eye(2))
    with pytest.raises(qmi.RankDeficient):
        qmi.project_rows(QmiSet(np.diag([1.0, 1.0, -1.0]), 2, 1), np.ones((2, 2)))


def test_reduce_requires_regular():
    with pytest.raises(qmi.NotRegular):
        qmi.reduce(QmiSet(np.diag([-1.0, -1.0]), 1, 1), ProjectionPair(np.eye(1), np.eye(1)))


@given(seeds, dims, dims)
def test_normalization_keeps_members(seed, p, q):
    Q = regular_set(seed, p, q)
    Qn = Q.normalized()
    assert np.linalg.norm(Qn.psi, 2) == pytest.approx(1.0)
    assert np.allclose(qmi.center(Qn), qmi.center(Q))
    assert la.inertia(Qn.psi) == la.inertia(Q.psi)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        QmiSet(np.eye(3), 1, 1)
