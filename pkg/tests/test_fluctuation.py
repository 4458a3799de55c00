import math

import numpy as np
import pytest

from contagion_lab import fluctuation as fl
from contagion_lab import meanfield as mf
from contagion_lab.errors import GridMismatchError, SingularDriftError
from contagion_lab.model import InitialLaw, ModelParams, MomentVector, critical_gamma, moments_from_law

ZERO = MomentVector(0.0, 0.0, 0.0)


def test_drift_at_origin():
    A = fl.drift_matrix(ModelParams(1.0, 2.0), ZERO)
    c, s = math.cosh(1), math.sinh(1)
    assert A == pytest.approx(np.array([[-2 * c, 2 * s, 0], [4, -2, 0], [0, 0, -2 * c - 2]]), abs=1e-15)


def test_drift_is_ode_jacobian():
    p = ModelParams(1.2, 1.7)
    m = np.array([0.3, -0.4, 0.1])
    h = 1e-6
    J = np.column_stack([(mf.vector_field(p, m + h * e) - mf.vector_field(p, m - h * e)) / (2 * h)
                         for e in np.eye(3)])
    assert np.max(np.abs(J - fl.drift_matrix(p, m))) < 1e-8


def test_diffusion_at_origin():
    # the full jump covariance rate; four times diag(1, 1, 2) at beta = gamma = 0 and m = 0
    assert fl.diffusion_matrix(ModelParams(0.0, 0.0), ZERO) == pytest.approx(4 * np.diag([1.0, 1.0, 2.0]))


def test_uniform_law_is_stationary_for_independent_flips():
    """At beta = gamma = 0 each spin flips at rate 1, the uniform product law is
    invariant and its covariance (the identity) must solve the Lyapunov equation."""
    p = ModelParams(0.0, 0.0)
    A, DD = fl.drift_matrix(p, ZERO), fl.diffusion_matrix(p, ZERO)
    S = np.eye(3)
    assert np.max(np.abs(A @ S + S @ A.T + DD)) < 1e-15
    flow = fl.integrate_covariance(p, ZERO, S, 5.0)
    assert np.max(np.abs(flow.covariances - np.eye(3))) < 1e-12


def test_diffusion_by_enumerating_jumps():
    """DD* is the sum over jump types of rate times the outer product of the jump."""
    p = ModelParams(0.8, 1.4)
    law = InitialLaw((0.4, 0.1, 0.2, 0.3))
    m = moments_from_law(law)
    DD = np.zeros((3, 3))
    for (s, w), q in zip([(1, 1), (1, -1), (-1, 1), (-1, -1)], law.probs):
        for flip_s in (True, False):
            rate = math.exp(-p.beta * s * w) if flip_s else math.exp(-p.gamma * w * m.m_sigma)
            ns, nw = (-s, w) if flip_s else (s, -w)
            jump = np.array([ns - s, nw - w, ns * nw - s * w], dtype=float)
            DD += q * rate * np.outer(jump, jump)
    assert np.max(np.abs(DD - fl.diffusion_matrix(p, m))) < 1e-14


def test_initial_covariance_examples():
    assert np.array_equal(fl.initial_covariance(InitialLaw.uniform()), np.eye(3))
    assert np.array_equal(fl.initial_covariance(InitialLaw.point_mass(1, -1)), np.zeros((3, 3)))
    law = InitialLaw.product(0.6, 0.6)
    assert fl.initial_covariance(law)[0, 1] == pytest.approx(0.0, abs=1e-15)


P08 = ModelParams(1.0, 0.8)


def test_lyapunov_relaxation_and_residual():
    eq = mf.solve_equilibria(P08)[0]
    S_inf = fl.asymptotic_covariance(P08, eq)
    A, DD = fl.drift_matrix(P08, eq.m), fl.diffusion_matrix(P08, eq.m)
    assert np.max(np.abs(A @ S_inf + S_inf @ A.T + DD)) < 1e-10
    law = InitialLaw.uniform()
    flow = fl.integrate_covariance(P08, moments_from_law(law), fl.initial_covariance(law), 50.0)
    assert np.max(np.abs(flow.covariance_at(50.0) - S_inf)) < 1e-6
    assert fl.variance_sigma(flow, 50.0) == pytest.approx(S_inf[0, 0], abs=1e-6)


def test_asymptotic_covariance_psd_supercritical():
    p = ModelParams(1.0, 2.3)
    for eq in mf.solve_equilibria(p)[1:]:
        S = fl.asymptotic_covariance(p, eq)
        assert np.linalg.eigvalsh(S).min() > 0


def test_asymptotic_refusals():
    p = ModelParams(1.0, 2.3)
    with pytest.raises(SingularDriftError):
        fl.asymptotic_covariance(p, mf.solve_equilibria(p)[0])  # saddle
    pc = ModelParams(1.0, critical_gamma(1.0))
    with pytest.raises(SingularDriftError):
        fl.asymptotic_covariance(pc, mf.solve_equilibria(pc)[0])


@pytest.mark.parametrize("beta, gamma", [(1.0, 0.8), (1.0, 2.3), (1.5, 2.1), (0.3, 5.0)])
def test_eigenvalues_closed_form_match_dense(beta, gamma):
    p = ModelParams(beta, gamma)
    for eq in mf.solve_equilibria(p):
        dense = np.sort(np.linalg.eigvals(fl.drift_matrix(p, eq.m)).real)
        closed = np.sort(fl.eigenvalues_closed_form(p, eq.m.m_sigma))
        assert np.max(np.abs(dense - closed)) < 1e-10


def test_slowest_eigenvalue_vanishes_at_critical():
    p = ModelParams(1.0, critical_gamma(1.0))
    assert abs(fl.eigenvalues_closed_form(p, 0.0).lam3) < 1e-12


def test_stability_condition_examples():
    p = ModelParams(1.0, 2.3)
    eqs = mf.solve_equilibria(p)
    assert not fl.stability_condition(p, 0.0)
    assert fl.stability_condition(p, eqs[1].m.m_sigma)
    assert fl.stability_condition(P08, 0.0)


def test_kronecker_sum_acts_as_lyapunov_operator():
    rng = np.random.default_rng(3)
    A, S = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    assert np.allclose(fl.kronecker_sum(A) @ S.reshape(9), (A @ S + S @ A.T).reshape(9))


def test_flow_range_and_symmetry():
    law = InitialLaw.product(0.6, -0.85)
    flow = fl.integrate_covariance(ModelParams(1.0, 2.3), moments_from_law(law), fl.initial_covariance(law), 5.0)
    assert np.max(np.abs(flow.covariances - np.transpose(flow.covariances, (0, 2, 1)))) == 0
    with pytest.raises(GridMismatchError):
        fl.variance_sigma(flow, 5.5)


def test_crisis_variance_peaks_in_interior():
    p = ModelParams(1.5, 2.1)
    law = InitialLaw.product(-0.5, 0.395)
    m0 = MomentVector(-0.5, 0.395, 0.0)
    flow = fl.integrate_covariance(p, m0, fl.initial_covariance(law), 20.0)
    V = flow.covariances[:, 0, 0]
    k = int(np.argmax(V))
    assert 0 < flow.grid[k] < 20
    assert V[k] > fl.variance_sigma(flow, 2.0) and V[k] > fl.variance_sigma(flow, 10.0)


def test_rk4_convergence_order():
    p = ModelParams(1.0, 2.3)
    law = InitialLaw.uniform()
    run = lambda h: fl.integrate_covariance(p, ZERO, np.eye(3), 2.0, h).covariances[-1]
    ref = run(1e-4)
    e1, e2 = np.abs(run(0.04) - ref).max(), np.abs(run(0.02) - ref).max()
    assert 12 < e1 / e2 < 20
