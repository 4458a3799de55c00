"""Deterministic large-N limit: moment ODE, equilibria, separatrix and basins."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Tuple

import numba
import numpy as np

from .errors import GridMismatchError, IntegrationBlowupError, RegimeError
from .model import ModelParams, MomentVector, RegimeTag, regime

DEFAULT_STEP = 1e-3
_BLOWUP = 1.001


# ---------------------------------------------------------------------------
# vector field and RK4

@numba.njit(cache=True)
def _field3(beta, gamma, ms, mw, msw):
    sb = math.sinh(beta)
    cb = math.cosh(beta)
    sg = math.sinh(gamma * ms)
    cg = math.cosh(gamma * ms)
    return (
        2.0 * sb * mw - 2.0 * cb * ms,
        2.0 * sg - 2.0 * cg * mw,
        2.0 * sb + 2.0 * sg * ms - 2.0 * (cb + cg) * msw,
    )


@numba.njit(cache=True)
def _rk4_moments(beta, gamma, m0, h, n):
    out = np.empty((n + 1, 3))
    out[0, :] = m0
    x, y, z = m0[0], m0[1], m0[2]
    for i in range(n):
        k1 = _field3(beta, gamma, x, y, z)
        k2 = _field3(beta, gamma, x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], z + 0.5 * h * k1[2])
        k3 = _field3(beta, gamma, x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], z + 0.5 * h * k2[2])
        k4 = _field3(beta, gamma, x + h * k3[0], y + h * k3[1], z + h * k3[2])
        x += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        z += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        out[i + 1, 0] = x
        out[i + 1, 1] = y
        out[i + 1, 2] = z
        if abs(x) > _BLOWUP or abs(y) > _BLOWUP or abs(z) > _BLOWUP:
            return out[: i + 2], i + 1
    return out, -1


@numba.njit(cache=True)
def _field2(beta, gamma, x, y):
    return (
        2.0 * math.sinh(beta) * y - 2.0 * math.cosh(beta) * x,
        2.0 * math.sinh(gamma * x) - 2.0 * y * math.cosh(gamma * x),
    )


@numba.njit(cache=True)
def _rk4_step2(beta, gamma, x, y, h):
    k1 = _field2(beta, gamma, x, y)
    k2 = _field2(beta, gamma, x + 0.5 * h * k1[0], y + 0.5 * h * k1[1])
    k3 = _field2(beta, gamma, x + 0.5 * h * k2[0], y + 0.5 * h * k2[1])
    k4 = _field2(beta, gamma, x + h * k3[0], y + h * k3[1])
    return (
        x + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    )


@numba.njit(cache=True)
def _flow_until_captured(beta, gamma, x, y, xs, ys, tol, h, t_max):
    # returns +1 / -1 when within tol of +-(xs, ys), 0 when t_max is reached
    t = 0.0
    while True:
        if math.hypot(x - xs, y - ys) <= tol:
            return 1
        if math.hypot(x + xs, y + ys) <= tol:
            return -1
        if t >= t_max:
            return 0
        x, y = _rk4_step2(beta, gamma, x, y, h)
        t += h


def vector_field(params: ModelParams, m) -> np.ndarray:
    """Right-hand side of the moment ODE at ``m``."""
    a = m.as_array() if isinstance(m, MomentVector) else np.asarray(m, dtype=float)
    return np.array(_field3(params.beta, params.gamma, a[0], a[1], a[2]))


@dataclass(frozen=True)
class OdeSolution:
    grid: np.ndarray
    states: np.ndarray  # shape (len(grid), 3)
    params: ModelParams
    step_size: float

    def __len__(self):
        return len(self.grid)

    def moment(self, i: int) -> MomentVector:
        return MomentVector.from_array(self.states[i])

    def at(self, t) -> np.ndarray:
        """States linearly interpolated at time(s) ``t``; shape (..., 3)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.grid[0] - 1e-12) or np.any(t > self.grid[-1] + 1e-12):
            raise GridMismatchError(
                f"times outside the solution interval [{self.grid[0]}, {self.grid[-1]}]"
            )
        cols = [np.interp(t, self.grid, self.states[:, k]) for k in range(3)]
        return np.stack(cols, axis=-1)

    @property
    def final(self) -> MomentVector:
        return self.moment(-1)


def _n_steps(T: float, step: float) -> int:
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    if T == 0:
        return 0
    return max(1, int(math.ceil(T / step - 1e-9)))


def integrate(params: ModelParams, m0, T: float, step: float = DEFAULT_STEP) -> OdeSolution:
    """Fixed-step classical RK4 on the full three-dimensional moment system.

    The step actually used is ``T / ceil(T / step)`` so that the grid ends on T.
    """
    if not isinstance(m0, MomentVector):
        m0 = MomentVector.from_array(m0)
    n = _n_steps(T, step)
    h = T / n if n else step
    states, bad = _rk4_moments(params.beta, params.gamma, m0.as_array(), h, n)
    if bad >= 0:
        raise IntegrationBlowupError(
            f"moment state left [-{_BLOWUP}, {_BLOWUP}]^3 at t={bad * h:.6g}; reduce the step"
        )
    grid = np.linspace(0.0, T, n + 1) if n else np.array([0.0])
    return OdeSolution(grid, states, params, h)


# ---------------------------------------------------------------------------
# equilibria

class Stability(enum.Enum):
    STABLE = "Stable"
    SADDLE = "Saddle"
    NEUTRAL = "NeutralDirection"


@dataclass(frozen=True)
class Equilibrium:
    m: MomentVector
    stability: Stability
    eigenvalues: Tuple[complex, complex]
    near_critical: bool = False


def jacobian2(params: ModelParams, x: float, y: float) -> np.ndarray:
    """Jacobian of the planar field V(x, y) = (dm_sigma/dt, dm_omega/dt)."""
    b, g = params.beta, params.gamma
    return np.array(
        [
            [-2.0 * math.cosh(b), 2.0 * math.sinh(b)],
            [2.0 * g * math.cosh(g * x) - 2.0 * g * y * math.sinh(g * x), -2.0 * math.cosh(g * x)],
        ]
    )


def equilibrium_sigma_omega(params: ModelParams, m_sigma: float) -> float:
    """Correlation moment paired with an equilibrium value of m_sigma."""
    b, g = params.beta, params.gamma
    return (math.sinh(b) + m_sigma * math.sinh(g * m_sigma)) / (math.cosh(b) + math.cosh(g * m_sigma))


def positive_root(params: ModelParams, lo: float = 1e-12) -> float | None:
    """Unique positive solution of ``x = tanh(beta) tanh(gamma x)`` or None.

    Bisection to 1e-10 on [lo, tanh(beta)] followed by three Newton steps.
    """
    tb = math.tanh(params.beta)
    g = params.gamma

    def f(x):
        return x - tb * math.tanh(g * x)

    a, c = lo, tb
    fa, fc = f(a), f(c)
    if not (fa < 0 < fc):
        return None
    while c - a > 1e-10:
        mid = 0.5 * (a + c)
        fm = f(mid)
        if fm < 0:
            a = mid
        else:
            c = mid
    x = 0.5 * (a + c)
    for _ in range(3):
        d = 1.0 - tb * g / math.cosh(g * x) ** 2
        if d == 0:
            break
        x_new = x - f(x) / d
        if not (a <= x_new <= c):
            break
        x = x_new
    return x


def _classify(tag: RegimeTag, at_origin: bool) -> Stability:
    if at_origin and tag is RegimeTag.CRITICAL:
        return Stability.NEUTRAL
    if at_origin and tag is RegimeTag.SUPERCRITICAL:
        return Stability.SADDLE
    return Stability.STABLE


def solve_equilibria(params: ModelParams) -> List[Equilibrium]:
    """All equilibria of the moment ODE, origin first."""
    reg = regime(params)
    out = []
    j0 = jacobian2(params, 0.0, 0.0)
    eig0 = np.linalg.eigvals(j0)
    out.append(
        Equilibrium(
            MomentVector(0.0, 0.0, equilibrium_sigma_omega(params, 0.0)),
            _classify(reg.tag, True),
            (complex(eig0[0]), complex(eig0[1])),
        )
    )
    if reg.tag is not RegimeTag.SUPERCRITICAL:
        return out
    x = positive_root(params)
    if x is None:
        # gamma is supercritical by tolerance but the root is below float resolution
        warnings.warn("supercritical parameters but no positive root resolved", RuntimeWarning)
        return out
    near = x < 1e-6
    if near:
        warnings.warn(f"near-critical positive root {x:.3g}", RuntimeWarning)
    y = x / math.tanh(params.beta)
    msw = equilibrium_sigma_omega(params, x)
    for s in (1.0, -1.0):
        eig = np.linalg.eigvals(jacobian2(params, s * x, s * y))
        out.append(
            Equilibrium(
                MomentVector(s * x, s * y, msw),
                Stability.STABLE,
                (complex(eig[0]), complex(eig[1])),
                near,
            )
        )
    return out


def stable_equilibrium(params: ModelParams, sign: int = 1) -> Equilibrium:
    eqs = solve_equilibria(params)
    if len(eqs) == 1:
        return eqs[0]
    return eqs[1] if sign > 0 else eqs[2]


# ---------------------------------------------------------------------------
# separatrix and basins

@dataclass(frozen=True)
class ManifoldCurve:
    points: np.ndarray  # ordered polyline, shape (k, 2), passes through the origin
    params: ModelParams
    origin_index: int = field(default=0)


def stable_direction(params: ModelParams) -> np.ndarray:
    """Unit eigenvector of the negative eigenvalue of the Jacobian at the origin."""
    w, v = np.linalg.eig(jacobian2(params, 0.0, 0.0))
    vs = np.real(v[:, int(np.argmin(np.real(w)))])
    vs = vs / np.linalg.norm(vs)
    return vs if vs[0] >= 0 else -vs


def _require_supercritical(params: ModelParams):
    tag = regime(params).tag
    if tag is not RegimeTag.SUPERCRITICAL:
        raise RegimeError(f"needs supercritical parameters, regime is {tag.value}")


def _branch(params, start, arc_step, max_len, max_turn=0.05):
    b, g = params.beta, params.gamma

    def direction(p):
        v = np.array(_field2(b, g, p[0], p[1]))
        return -v / np.linalg.norm(v)

    def rk4(p, h):
        k1 = direction(p)
        k2 = direction(p + 0.5 * h * k1)
        k3 = direction(p + 0.5 * h * k2)
        k4 = direction(p + h * k3)
        return p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    pts = [np.asarray(start, dtype=float)]
    length = 0.0
    h = arc_step
    while length < max_len:
        p = pts[-1]
        q = rk4(p, h)
        if len(pts) >= 2:
            d0 = p - pts[-2]
            d1 = q - p
            cosang = np.dot(d0, d1) / (np.linalg.norm(d0) * np.linalg.norm(d1))
            if math.acos(min(1.0, max(-1.0, cosang))) > max_turn and h > arc_step * 1e-6:
                h *= 0.5
                continue
        if np.max(np.abs(q)) > 1.0:
            # cut the last segment at the boundary of the square
            d = q - p
            frac = min((math.copysign(1.0, q[k]) - p[k]) / d[k] for k in range(2) if abs(q[k]) > 1.0)
            pts.append(p + frac * d)
            break
        pts.append(q)
        length += h
        h = min(arc_step, 2 * h)
    return np.array(pts)


def stable_manifold(params: ModelParams, arc_step: float = 5e-3, max_len: float = 6.0,
                    eps: float = 1e-6) -> ManifoldCurve:
    """Separatrix through the saddle at the origin.

    Both branches are traced from ``+-eps * v_s`` in reversed time with the
    field normalised to unit speed (arc-length parametrisation), until they
    leave the square or reach ``max_len``.
    """
    _require_supercritical(params)
    vs = stable_direction(params)
    plus = _branch(params, eps * vs, arc_step, max_len)
    minus = _branch(params, -eps * vs, arc_step, max_len)
    pts = np.vstack([minus[::-1], np.zeros((1, 2)), plus])
    return ManifoldCurve(pts, params, origin_index=len(minus))


class Basin(enum.Enum):
    GAMMA_PLUS = "GammaPlus"
    GAMMA_MINUS = "GammaMinus"
    UNDECIDED = "Undecided"


def basin_of(params: ModelParams, m0_2d, T_max: float = 200.0, tol: float = 1e-6,
             step: float = 1e-2) -> Basin:
    """Basin of attraction of a planar initial condition, decided by proximity."""
    _require_supercritical(params)
    eq = stable_equilibrium(params, 1).m
    code = _flow_until_captured(params.beta, params.gamma, float(m0_2d[0]), float(m0_2d[1]),
                                eq.m_sigma, eq.m_omega, tol, step, T_max)
    return {1: Basin.GAMMA_PLUS, -1: Basin.GAMMA_MINUS, 0: Basin.UNDECIDED}[code]


def _nearest_segment(curve: ManifoldCurve, p: np.ndarray):
    a = curve.points[:-1]
    d = curve.points[1:] - a
    L2 = np.einsum("ij,ij->i", d, d)
    s = np.clip(np.einsum("ij,ij->i", p - a, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    proj = a + s[:, None] * d
    dist2 = np.einsum("ij,ij->i", p - proj, p - proj)
    k = int(np.argmin(dist2))
    cross = d[k, 0] * (p[1] - a[k, 1]) - d[k, 1] * (p[0] - a[k, 0])
    return float(np.sqrt(dist2[k])), float(np.sign(cross))


def side_of_curve(curve: ManifoldCurve, point) -> int:
    """+1 if ``point`` is on the GammaPlus side of the polyline, -1 otherwise, 0 on it."""
    eq = stable_equilibrium(curve.params, 1).m
    _, ref = _nearest_segment(curve, np.array([eq.m_sigma, eq.m_omega]))
    _, side = _nearest_segment(curve, np.asarray(point, dtype=float))
    return int(side * ref)


def distance_to_curve(curve: ManifoldCurve, point) -> float:
    return _nearest_segment(curve, np.asarray(point, dtype=float))[0]
