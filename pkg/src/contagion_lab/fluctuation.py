"""Gaussian fluctuations around the moment ODE.

The scaled fluctuation ``sqrt(N) * (empirical moments - ODE moments)`` has a
Gaussian limit whose covariance obeys

    dSigma/dt = A(t) Sigma + Sigma A(t)^T + DD(t)

where ``A`` is the Jacobian of the moment field and ``DD`` the jump
covariance rate of the reduced chain.  ``DD`` is four times the matrix

    [[cb - msw*sb,        0,               mw*cb - ms*sb             ],
     [0,                  cg - mw*sg,      ms*cg - msw*sg            ],
     [mw*cb - ms*sb,      ms*cg - msw*sg,  cb - msw*sb + cg - mw*sg  ]]

with ``cb, sb = cosh, sinh(beta)`` and ``cg, sg = cosh, sinh(gamma*ms)``.
The factor 4 follows from the jump sizes 2/sqrt(N) and makes the uniform
product law stationary for beta = gamma = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .errors import GridMismatchError, IntegrationBlowupError, SingularDriftError
from .meanfield import DEFAULT_STEP, Equilibrium, _field3, _n_steps
from .model import (
    TOL_CRIT,
    InitialLaw,
    ModelParams,
    MomentVector,
    RegimeTag,
    moments_from_law,
    regime,
)

_COND_MAX = 1e12


@numba.njit(cache=True)
def _drift(beta, gamma, ms, mw, msw):
    cb = math.cosh(beta)
    sb = math.sinh(beta)
    cg = math.cosh(gamma * ms)
    sg = math.sinh(gamma * ms)
    A = np.zeros((3, 3))
    A[0, 0] = -2.0 * cb
    A[0, 1] = 2.0 * sb
    A[1, 0] = 2.0 * (gamma * cg - gamma * mw * sg)
    A[1, 1] = -2.0 * cg
    A[2, 0] = 2.0 * (sg + gamma * ms * cg - gamma * msw * sg)
    A[2, 2] = -2.0 * (cb + cg)
    return A


@numba.njit(cache=True)
def _diffusion(beta, gamma, ms, mw, msw):
    cb = math.cosh(beta)
    sb = math.sinh(beta)
    cg = math.cosh(gamma * ms)
    sg = math.sinh(gamma * ms)
    D = np.zeros((3, 3))
    D[0, 0] = 4.0 * (cb - msw * sb)
    D[1, 1] = 4.0 * (cg - mw * sg)
    D[2, 2] = D[0, 0] + D[1, 1]
    D[0, 2] = D[2, 0] = 4.0 * (mw * cb - ms * sb)
    D[1, 2] = D[2, 1] = 4.0 * (ms * cg - msw * sg)
    return D


@numba.njit(cache=True)
def _cov_rhs(beta, gamma, m, S):
    f = _field3(beta, gamma, m[0], m[1], m[2])
    dm = np.empty(3)
    dm[0] = f[0]
    dm[1] = f[1]
    dm[2] = f[2]
    A = _drift(beta, gamma, m[0], m[1], m[2])
    D = _diffusion(beta, gamma, m[0], m[1], m[2])
    AS = A @ S
    return dm, AS + AS.T + D


@numba.njit(cache=True)
def _rk4_cov(beta, gamma, m0, S0, h, n):
    ms = np.empty((n + 1, 3))
    Ss = np.empty((n + 1, 3, 3))
    m = m0.copy()
    S = 0.5 * (S0 + S0.T)
    ms[0] = m
    Ss[0] = S
    for i in range(n):
        dm1, dS1 = _cov_rhs(beta, gamma, m, S)
        m2 = m + 0.5 * h * dm1
        S2 = S + 0.5 * h * dS1
        S2 = 0.5 * (S2 + S2.T)
        dm2, dS2 = _cov_rhs(beta, gamma, m2, S2)
        m3 = m + 0.5 * h * dm2
        S3 = S + 0.5 * h * dS2
        S3 = 0.5 * (S3 + S3.T)
        dm3, dS3 = _cov_rhs(beta, gamma, m3, S3)
        m4 = m + h * dm3
        S4 = S + h * dS3
        S4 = 0.5 * (S4 + S4.T)
        dm4, dS4 = _cov_rhs(beta, gamma, m4, S4)
        m = m + h / 6.0 * (dm1 + 2.0 * dm2 + 2.0 * dm3 + dm4)
        S = S + h / 6.0 * (dS1 + 2.0 * dS2 + 2.0 * dS3 + dS4)
        S = 0.5 * (S + S.T)
        ms[i + 1] = m
        Ss[i + 1] = S
        if abs(m[0]) > 1.001 or abs(m[1]) > 1.001 or abs(m[2]) > 1.001:
            return ms, Ss, i + 1
    return ms, Ss, -1


def _m(m) -> np.ndarray:
    return m.as_array() if isinstance(m, MomentVector) else np.asarray(m, dtype=float)


def drift_matrix(params: ModelParams, m) -> np.ndarray:
    a = _m(m)
    return _drift(params.beta, params.gamma, a[0], a[1], a[2])


def diffusion_matrix(params: ModelParams, m) -> np.ndarray:
    """Full jump covariance rate DD* (not halved)."""
    a = _m(m)
    return _diffusion(params.beta, params.gamma, a[0], a[1], a[2])


def initial_covariance(law: InitialLaw) -> np.ndarray:
    """Covariance of (sigma, omega, sigma*omega) under ``law``."""
    m = moments_from_law(law)
    s, w, sw = m.m_sigma, m.m_omega, m.m_sigma_omega
    return np.array(
        [
            [1 - s * s, sw - s * w, w - s * sw],
            [sw - s * w, 1 - w * w, s - sw * w],
            [w - s * sw, s - sw * w, 1 - sw * sw],
        ]
    )


@dataclass(frozen=True)
class CovarianceFlow:
    grid: np.ndarray
    moments: np.ndarray  # (n, 3)
    covariances: np.ndarray  # (n, 3, 3)
    params: ModelParams
    step_size: float

    def __len__(self):
        return len(self.grid)

    def __iter__(self):
        for t, m, S in zip(self.grid, self.moments, self.covariances):
            yield float(t), MomentVector.from_array(m), S

    def covariance_at(self, t: float) -> np.ndarray:
        _check_range(self, t)
        flat = self.covariances.reshape(len(self.grid), 9)
        return np.array([np.interp(t, self.grid, flat[:, k]) for k in range(9)]).reshape(3, 3)

    def moments_at(self, t: float) -> np.ndarray:
        _check_range(self, t)
        return np.array([np.interp(t, self.grid, self.moments[:, k]) for k in range(3)])


def _check_range(flow: CovarianceFlow, t: float):
    if not (flow.grid[0] - 1e-12 <= t <= flow.grid[-1] + 1e-12):
        raise GridMismatchError(f"t={t} outside [{flow.grid[0]}, {flow.grid[-1]}]")


def integrate_covariance(params: ModelParams, m0, Sigma0, T: float,
                         step: float = DEFAULT_STEP) -> CovarianceFlow:
    """Joint RK4 of the moment ODE and the Lyapunov covariance equation."""
    m0 = _m(m0)
    MomentVector.from_array(m0)
    S0 = np.asarray(Sigma0, dtype=float)
    if S0.shape != (3, 3):
        raise ValueError("Sigma0 must be 3x3")
    if np.linalg.eigvalsh(0.5 * (S0 + S0.T)).min() < -1e-9:
        raise ValueError("Sigma0 is not positive semidefinite")
    n = _n_steps(T, step)
    h = T / n if n else step
    ms, Ss, bad = _rk4_cov(params.beta, params.gamma, m0.astype(float), S0, h, n)
    if bad >= 0:
        raise IntegrationBlowupError(f"moment state left the cube at t={bad * h:.6g}")
    grid = np.linspace(0.0, T, n + 1) if n else np.array([0.0])
    return CovarianceFlow(grid, ms, Ss, params, h)


def variance_sigma(flow: CovarianceFlow, t: float) -> float:
    """Limiting variance of sqrt(N) * (m_sigma_N(t) - m_sigma(t))."""
    _check_range(flow, t)
    return float(np.interp(t, flow.grid, flow.covariances[:, 0, 0]))


def kronecker_sum(A: np.ndarray) -> np.ndarray:
    """``A (x) I + I (x) A`` acting on row-major vec of 3x3 matrices."""
    eye = np.eye(A.shape[0])
    return np.kron(A, eye) + np.kron(eye, A)


def asymptotic_covariance(params: ModelParams, equilibrium) -> np.ndarray:
    """Stationary solution of ``A S + S A^T + DD = 0`` at a stable equilibrium."""
    m = equilibrium.m if isinstance(equilibrium, Equilibrium) else equilibrium
    m = m if isinstance(m, MomentVector) else MomentVector.from_array(m)
    if regime(params).tag is RegimeTag.CRITICAL:
        raise SingularDriftError("drift is singular on the critical curve")
    if not stability_condition(params, m.m_sigma):
        raise SingularDriftError("equilibrium is not linearly stable")
    A = drift_matrix(params, m)
    DD = diffusion_matrix(params, m)
    K = kronecker_sum(A)
    if np.linalg.cond(K) > _COND_MAX:
        raise SingularDriftError(f"Lyapunov system condition number {np.linalg.cond(K):.3g}")
    # numpy.linalg.solve: LAPACK gesv, LU with partial pivoting
    S = -np.linalg.solve(K, DD.reshape(9)).reshape(3, 3)
    return 0.5 * (S + S.T)


class EigenTriple(NamedTuple):
    lam1: float
    lam2: float
    lam3: float


def eigenvalues_closed_form(params: ModelParams, m_star_sigma: float) -> EigenTriple:
    """Eigenvalues of the drift matrix at an equilibrium with m_sigma = m_star_sigma."""
    b, g = params.beta, params.gamma
    cb = math.cosh(b)
    cg = math.cosh(g * m_star_sigma)
    root = math.sqrt((cb - cg) ** 2 + 4.0 * g * math.sinh(b) / cg)
    return EigenTriple(-2.0 * (cb + cg), -(cb + cg + root), -(cb + cg - root))


def stability_condition(params: ModelParams, m_star_sigma: float) -> bool:
    """True iff the slowest drift eigenvalue at the equilibrium is negative.

    Equality (the critical curve) is decided with the regime tolerance.
    """
    b, g = params.beta, params.gamma
    return g * math.tanh(b) < math.cosh(g * m_star_sigma) ** 2 - TOL_CRIT
