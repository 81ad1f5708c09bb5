import numpy as np
import pytest

from ddbt import data, informativity, oracle, qmi
from ddbt.data import StateSpaceModel
from ddbt.sdp import Infeasible

from conftest import INFORMATIVE_SEEDS


def test_gramian_dominance_examples():
    assert informativity.gramian_dominance(2 * np.eye(2), np.eye(2))
    assert not informativity.gramian_dominance(np.eye(2), np.eye(2))
    assert not informativity.gramian_dominance(np.diag([2.0, 0.5]), np.eye(2))


def test_certificate_solves_lyapunov_for_sampled_systems(run01):
    cert = run01.certificate
    P, Q = cert.P, cert.Q
    assert np.linalg.eigvalsh(P)[0] > 0 and np.linalg.eigvalsh(Q)[0] > 0
    members = [qmi.center(run01.N)] + qmi.sample_members(run01.N, 50, 1)
    for Z in members:
        M = StateSpaceModel.from_stack(Z, 6, 1)
        assert np.linalg.eigvalsh(M.A @ P @ M.A.T - P + M.B @ M.B.T)[-1] < 0
        assert np.linalg.eigvalsh(M.A.T @ Q @ M.A - Q + M.C.T @ M.C)[-1] < 0


def test_certificate_dominates_true_gramians(run01, true_system):
    g = oracle.ordinary_gramians(true_system)
    assert informativity.gramian_dominance(run01.certificate.P, g.P0)
    assert informativity.gramian_dominance(run01.certificate.Q, g.Q0)


def test_lmi_residuals_meet_margin(run01):
    cert = run01.certificate
    N = run01.N
    for label, X, mult, S in (
        ("ctrb", cert.P, cert.alpha, informativity.controllability_set(N, 6)),
        ("obsv", cert.Q, cert.beta, informativity.observability_set(N, 6)),
    ):
        scale = np.linalg.norm(S.psi, 2)
        # margins are stated for the normalized set
        Mn = informativity.gramian_lmi(X, mult * scale, S.scaled(1 / scale))
        assert np.linalg.eigvalsh(Mn)[0] >= cert.margins[f"{label}_epsilon"] * (1 - 1e-9)


def test_scaling_invariance(run01):
    N = run01.N
    a = informativity.check_informativity(N, (6, 1, 1))
    b = informativity.check_informativity(N.scaled(10.0), (6, 1, 1))
    # normalization makes the solve identical up to solver noise
    assert np.allclose(a.P, b.P, rtol=1e-4, atol=1e-4 * np.abs(a.P).max())
    assert b.alpha == pytest.approx(a.alpha / 10, rel=1e-4)


@pytest.mark.parametrize("seed", INFORMATIVE_SEEDS)
def test_informative_low_noise(true_system, seed):
    exp = data.make_experiment(true_system, data.paper_input(200), 0.002, seed)
    cert = informativity.check_informativity(data.build_n(exp.traj, exp.noise), (6, 1, 1))
    assert cert.trace_P > 0


def test_unstable_system_not_informative():
    A = np.diag([1.2, 0.5])
    M = StateSpaceModel(A, [[1.0], [1.0]], [[1.0, 1.0]], [[0.0]])
    u = np.random.default_rng(0).standard_normal((1, 40))
    exp = data.make_experiment(M, u, 0.0, 0)
    N = data.build_n(exp.traj, exp.noise)
    assert qmi.check_slater_by_inertia(N)
    with pytest.raises(Infeasible):
        informativity.check_informativity(N, (2, 1, 1))


def test_precondition_checked():
    N = qmi.QmiSet(-np.eye(4), 2, 2)
    with pytest.raises(informativity.PreconditionFailed):
        informativity.check_informativity(N, (1, 1, 1))


def test_backends_agree_on_small_instance():
    rng = np.random.default_rng(4)
    M = StateSpaceModel([[0.5, 0.2], [0.0, 0.3]], [[1.0], [0.5]], [[1.0, 0.0]], [[0.0]])
    exp = data.make_experiment(M, rng.standard_normal((1, 30)), 0.01, 1)
    N = data.build_n(exp.traj, exp.noise)
    a = informativity.check_informativity(N, (2, 1, 1), backend="cvxpy")
    b = informativity.check_informativity(N, (2, 1, 1), backend="barrier")
    assert a.trace_P == pytest.approx(b.trace_P, rel=1e-4)
    assert a.trace_Q == pytest.approx(b.trace_Q, rel=1e-4)


def test_certificate_export(run01):
    d = run01.certificate.to_dict()
    assert set(d) == {"P", "Q", "alpha", "beta", "margins", "solver_status", "trace_P", "trace_Q"}
