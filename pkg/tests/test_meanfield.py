import math

import numpy as np
import pytest
from scipy.optimize import brentq

from contagion_lab import meanfield as mf
from contagion_lab.errors import IntegrationBlowupError, RegimeError
from contagion_lab.model import ModelParams, MomentVector, critical_gamma

P23 = ModelParams(1.0, 2.3)


def test_vector_field_examples():
    beta = 1.0
    p = ModelParams(beta, 0.8)
    assert np.max(np.abs(mf.vector_field(p, (0, 0, math.tanh(beta / 2))))) < 1e-15
    assert mf.vector_field(p, (0, 0, 0))[2] == pytest.approx(2 * math.sinh(1), abs=1e-15)
    assert mf.vector_field(p, (0, 0, 0))[2] == pytest.approx(2.3504, abs=1e-4)


def test_origin_correlation_closed_form():
    beta = 1.3
    p = ModelParams(beta, 0.7)
    sol = mf.integrate(p, (0, 0, 0), 3.0)
    exact = math.tanh(beta / 2) * (1 - np.exp(-2 * (math.cosh(beta) + 1) * sol.grid))
    assert np.max(np.abs(sol.states[:, :2])) == 0
    assert np.max(np.abs(sol.states[:, 2] - exact)) < 1e-10
    assert np.all(np.diff(sol.states[:, 2]) > 0)


def test_rk4_fourth_order():
    p = ModelParams(1.0, 2.3)
    ref = mf.integrate(p, (0.3, -0.2, 0.1), 2.0, 1e-4).final.as_array()
    e1 = np.abs(mf.integrate(p, (0.3, -0.2, 0.1), 2.0, 0.04).final.as_array() - ref).max()
    e2 = np.abs(mf.integrate(p, (0.3, -0.2, 0.1), 2.0, 0.02).final.as_array() - ref).max()
    assert 12 < e1 / e2 < 20


def test_subcritical_global_convergence():
    p = ModelParams(1.0, 0.8)
    for m0 in [(0.9, 0.8, 0.72), (-0.5, 0.7, -0.35), (0.2, -0.9, -0.18)]:
        end = mf.integrate(p, m0, 60.0, 1e-2).final.as_array()
        assert end == pytest.approx([0, 0, math.tanh(0.5)], abs=1e-8)


def test_crisis_path():
    p = ModelParams(1.5, 2.1)
    sol = mf.integrate(p, (-0.5, 0.395, 0.0), 20.0)
    ms = sol.states[:, 0]
    k = int(np.argmin(np.abs(ms)))
    assert abs(ms[k]) < 0.1 and 0 < sol.grid[k] < 20
    m_star = mf.solve_equilibria(p)[1].m.m_sigma
    assert ms[-1] == pytest.approx(-m_star, abs=1e-3)


def test_integrate_records_initial_state_and_range():
    sol = mf.integrate(P23, (0.1, 0.2, 0.3), 1.0)
    assert sol.states[0].tolist() == [0.1, 0.2, 0.3]
    assert sol.grid[-1] == 1.0
    with pytest.raises(Exception):
        sol.at(1.5)


def test_blowup_detected():
    with pytest.raises(IntegrationBlowupError):
        mf.integrate(ModelParams(3.0, 4.0), (1, 1, 1), 5.0, step=1.0)


def test_flow_invariance_grid():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = ModelParams(rng.uniform(0.1, 3), rng.uniform(0, 4))
        probs = rng.dirichlet(np.ones(4))
        from contagion_lab.model import InitialLaw, moments_from_law

        sol = mf.integrate(p, moments_from_law(InitialLaw(tuple(probs))), 3.0)
        assert np.all(np.abs(sol.states) <= 1 + 1e-12)


def test_equilibria_subcritical():
    eqs = mf.solve_equilibria(ModelParams(1.0, 1.2))
    assert len(eqs) == 1
    assert eqs[0].m.as_array() == pytest.approx([0, 0, math.tanh(0.5)], abs=1e-15)
    assert eqs[0].stability is mf.Stability.STABLE


def test_equilibria_supercritical_against_brentq():
    eqs = mf.solve_equilibria(P23)
    assert [e.stability for e in eqs] == [mf.Stability.SADDLE, mf.Stability.STABLE, mf.Stability.STABLE]
    root = brentq(lambda x: x - math.tanh(1) * math.tanh(2.3 * x), 1e-3, 1.0, xtol=1e-15)
    assert eqs[1].m.m_sigma == pytest.approx(root, abs=1e-13)
    assert eqs[2].m.m_sigma == -eqs[1].m.m_sigma
    assert eqs[1].m.m_omega == pytest.approx(root / math.tanh(1), abs=1e-14)
    for e in eqs:
        assert np.max(np.abs(mf.vector_field(P23, e.m))) < 1e-12
        s = e.m.m_sigma
        assert e.m.m_sigma_omega == pytest.approx(
            (math.sinh(1) + s * math.sinh(2.3 * s)) / (math.cosh(1) + math.cosh(2.3 * s)), abs=1e-15)


def test_neutral_direction_on_critical_curve():
    eqs = mf.solve_equilibria(ModelParams(1.5, critical_gamma(1.5)))
    assert len(eqs) == 1 and eqs[0].stability is mf.Stability.NEUTRAL
    assert min(abs(complex(z)) for z in eqs[0].eigenvalues) < 1e-12


def test_near_critical_roots_still_resolved():
    gc = critical_gamma(1.0)
    eqs = mf.solve_equilibria(ModelParams(1.0, gc + 1e-10))
    assert len(eqs) == 3
    assert 0 < eqs[1].m.m_sigma < 1e-4
    p = ModelParams(1.0, gc + 1e-10)
    assert np.max(np.abs(mf.vector_field(p, eqs[1].m))) < 1e-15


def test_single_sign_change_in_bracket():
    for beta, gamma in [(0.5, 3.0), (1.0, 2.3), (1.5, 2.1), (3.0, 1.2)]:
        x = np.linspace(1e-12, math.tanh(beta), 10_000)
        f = x - math.tanh(beta) * np.tanh(gamma * x)
        assert np.count_nonzero(np.diff(np.sign(f)) != 0) == 1


def test_jacobian_at_origin_exact():
    J = mf.jacobian2(ModelParams(1.0, 2.0), 0.0, 0.0)
    assert J.tolist() == [[-2 * math.cosh(1), 2 * math.sinh(1)], [4.0, -2.0]]


def test_divergence_negative_on_grid():
    for p in [ModelParams(1.0, 2.3), ModelParams(3.0, 4.0), ModelParams(0.2, 0.1)]:
        for x in np.linspace(-1, 1, 41):
            for y in np.linspace(-1, 1, 41):
                assert np.trace(mf.jacobian2(p, x, y)) < 0


@pytest.fixture(scope="module")
def curve():
    return mf.stable_manifold(P23)


def test_manifold_through_origin_and_tangent(curve):
    pts = curve.points
    assert np.all(pts[curve.origin_index] == 0)
    vs = mf.stable_direction(P23)
    for seg in (pts[curve.origin_index + 2] - pts[curve.origin_index + 1],
                pts[curve.origin_index - 1] - pts[curve.origin_index - 2]):
        cos = abs(seg @ vs) / np.linalg.norm(seg)
        assert math.acos(min(1.0, cos)) < 1e-3
    assert np.all(np.abs(pts) <= 1 + 1e-12)


def test_manifold_point_symmetry(curve):
    from scipy.spatial.distance import directed_hausdorff

    a, b = curve.points, -curve.points
    d = max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])
    assert d < 1e-6


def test_manifold_shadowing(curve):
    """Points on the curve linger near the saddle while offset points escape."""
    pts = curve.points
    rng = np.random.default_rng(1)
    far = np.linalg.norm(pts, axis=1) > 0.05
    idx = rng.choice(np.flatnonzero(far), 20, replace=False)
    h = 1e-3
    for k in idx:
        k = min(max(k, 1), len(pts) - 2)
        tangent = pts[k + 1] - pts[k - 1]
        normal = np.array([-tangent[1], tangent[0]]) / np.linalg.norm(tangent)
        paths = [mf.integrate(P23, (*p, 0.0), 6.0, h).states[:, :2]
                 for p in (pts[k], pts[k] + 0.01 * normal, pts[k] - 0.01 * normal)]
        dist = [np.linalg.norm(q, axis=1) for q in paths]
        # first time both offset paths are >= 0.2 from the origin after their closest approach
        j = max(int(np.argmax((d > 0.2) & (np.arange(len(d)) > np.argmin(d)))) for d in dist[1:])
        assert j > 0
        assert dist[0][j] < 0.05


def test_basins_agree_with_side_of_curve(curve):
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(1000, 2))
    mismatches = 0
    for x, y in pts:
        b = mf.basin_of(P23, (x, y))
        side = mf.side_of_curve(curve, (x, y))
        expected = mf.Basin.GAMMA_PLUS if side > 0 else mf.Basin.GAMMA_MINUS
        mismatches += b is not expected
    assert mismatches == 0


def test_basin_examples():
    eq = mf.solve_equilibria(P23)[1].m
    assert mf.basin_of(P23, (eq.m_sigma, eq.m_omega)) is mf.Basin.GAMMA_PLUS
    assert mf.basin_of(P23, (0.6, -0.85)) is mf.Basin.GAMMA_MINUS
    assert mf.basin_of(P23, (-0.6, 0.85)) is mf.Basin.GAMMA_PLUS
    assert mf.basin_of(P23, (0.0, 0.0)) is mf.Basin.UNDECIDED


def test_regime_errors():
    with pytest.raises(RegimeError):
        mf.stable_manifold(ModelParams(1.0, 0.8))
    with pytest.raises(RegimeError):
        mf.basin_of(ModelParams(1.0, critical_gamma(1.0)), (0.1, 0.1))


def test_no_cycles_probe():
    sol = mf.integrate(P23, (0.6, -0.85, -0.51), 20.0, 1e-2)
    speed = np.array([np.linalg.norm(mf.vector_field(P23, s)[:2]) for s in sol.states])
    xy = sol.states[:, :2]
    left = np.linalg.norm(xy - xy[0], axis=1) > 1e-3
    k = int(np.argmax(left))
    assert np.min(np.linalg.norm(xy[k:] - xy[0], axis=1)) > 1e-9
    assert speed[-1] < 1e-6
