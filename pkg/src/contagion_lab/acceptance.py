"""Acceptance criteria as plain functions.

Each criterion returns a :class:`Criterion` with a pass flag and the measured
quantities, so the same code backs ``contagion-lab validate`` and the test
suite.  Seeds are fixed; every criterion is deterministic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import fluctuation as fl
from . import meanfield as mf
from . import portfolio as pf
from .model import (
    InitialLaw,
    ModelParams,
    critical_gamma,
    law_from_moments,
    moments_from_law,
)
from .particles import ensemble

CRISIS_M0 = (-0.5, 0.395, -0.5 * 0.395)
MIXTURE = dict(a=0.1, b1=1.0, b2=0.5)


@dataclass
class Criterion:
    name: str
    passed: bool
    measured: Dict[str, object]
    seconds: float = 0.0
    budget_s: Optional[float] = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        budget = f" (budget {self.budget_s:g}s)" if self.budget_s else ""
        return f"{status} {self.name} [{self.seconds:.2f}s{budget}] {parts}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


REGISTRY: Dict[str, Callable[[], Criterion]] = {}
BUDGETS: Dict[str, float] = {}


def criterion(name: str, budget_s: Optional[float] = None):
    def deco(fn):
        def run() -> Criterion:
            t0 = time.perf_counter()
            passed, measured = fn()
            c = Criterion(name, bool(passed), measured, time.perf_counter() - t0, budget_s)
            if budget_s is not None:
                c.measured["within_budget"] = c.seconds < budget_s
                c.passed = c.passed and c.seconds < budget_s
            return c

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        REGISTRY[name] = run
        if budget_s is not None:
            BUDGETS[name] = budget_s
        return run

    return deco


def _flow(params: ModelParams, m0, T: float, step: float = 1e-3):
    m0 = np.asarray(m0, dtype=float)
    S0 = fl.initial_covariance(law_from_moments(m0))
    return fl.integrate_covariance(params, m0, S0, T, step)


@criterion("EQ-1", budget_s=1.0)
def eq_1():
    worst_fix = worst_omega = 0.0
    count = 0
    for beta in (0.5, 1.0, 1.5, 3.0):
        gc = critical_gamma(beta)
        for factor in (1.01, 1.2, 2.0, 4.0):
            p = ModelParams(beta, factor * gc)
            eqs = mf.solve_equilibria(p)
            x = eqs[1].m.m_sigma
            worst_fix = max(worst_fix, abs(x - math.tanh(beta) * math.tanh(p.gamma * x)))
            worst_omega = max(worst_omega, abs(eqs[1].m.m_omega - x / math.tanh(beta)))
            count += 1
    return worst_fix < 1e-12 and worst_omega < 1e-12, dict(
        cases=count, max_fixed_point_residual=worst_fix, max_omega_error=worst_omega)


@criterion("CRIT-1")
def crit_1():
    expected = {1.0: 1.313, 1.5: 1.105, 0.9: 1.396}
    got = {b: critical_gamma(b) for b in expected}
    ok = all(round(got[b], 3) == v for b, v in expected.items())
    return ok, {f"gamma_c({b})": got[b] for b in expected}


EIG_PAIRS = [(1.0, 0.8), (1.5, 0.6), (1.0, "c"), (1.5, "c"), (1.0, 2.3), (1.5, 2.1), (0.5, 3.0), (3.0, 2.0)]


@criterion("EIG-1", budget_s=1.0)
def eig_1():
    worst = 0.0
    sign_ok = True
    critical_l3 = []
    for beta, g in EIG_PAIRS:
        gamma = critical_gamma(beta) if g == "c" else g
        p = ModelParams(beta, gamma)
        for e in mf.solve_equilibria(p):
            closed = fl.eigenvalues_closed_form(p, e.m.m_sigma)
            dense = np.sort(np.linalg.eigvals(fl.drift_matrix(p, e.m)).real)
            worst = max(worst, float(np.max(np.abs(np.sort(closed) - dense))))
            stable = fl.stability_condition(p, e.m.m_sigma)
            if g == "c":
                critical_l3.append(closed.lam3)
                sign_ok &= abs(closed.lam3) < 1e-10 and not stable
            else:
                sign_ok &= (closed.lam3 < 0) == stable
    return worst < 1e-9 and sign_ok, dict(
        max_abs_diff=worst, lam3_sign_consistent=sign_ok, lam3_at_critical=critical_l3)


@criterion("LLN-1", budget_s=10.0)
def lln_1():
    p = ModelParams(1.0, 0.8)
    law = InitialLaw.product(0.6, 0.6)
    grid = np.linspace(0.0, 5.0, 20)
    ode = mf.integrate(p, moments_from_law(law), 5.0)
    devs = []
    from .particles import reduced_simulate

    for seed in (11, 12, 13):
        tr = reduced_simulate(p, law, 10_000, 5.0, grid, seed)
        devs.append(float(np.max(np.abs(tr.moments[:, 0] - ode.at(grid)[:, 0]))))
    return max(devs) <= 0.06, dict(sup_deviation=devs)


def _clt_ensemble(replicas: int = 2000, seed: int = 2024):
    p = ModelParams(1.0, 0.8)
    law = InitialLaw.product(0.6, 0.6)
    flow = fl.integrate_covariance(p, moments_from_law(law), fl.initial_covariance(law), 1.0)
    ode = mf.OdeSolution(flow.grid, flow.moments, p, flow.step_size)
    ens = ensemble(p, law, 1000, 1.0, [1.0], replicas, seed, reference=ode)
    return flow, ens


_CLT_CACHE: dict = {}


def _clt():
    if "v" not in _CLT_CACHE:
        _CLT_CACHE["v"] = _clt_ensemble()
    return _CLT_CACHE["v"]


@criterion("CLT-1", budget_s=60.0)
def clt_1():
    flow, ens = _clt()
    V1 = fl.variance_sigma(flow, 1.0)
    var = float(ens.fluct_var[0, 0])
    mean = float(ens.fluct_mean[0, 0])
    M = ens.replicas
    mean_tol = 5 * math.sqrt(V1 / M) * 1.1
    rel = abs(var / V1 - 1)
    return rel <= 0.15 and abs(mean) <= mean_tol, dict(
        V1=V1, empirical_var=var, rel_error=rel, empirical_mean=mean, mean_tol=mean_tol)


def bootstrap_cov_se(samples: np.ndarray, B: int = 400, seed: int = 7) -> np.ndarray:
    """Bootstrap standard errors of the entries of the sample covariance."""
    rng = np.random.default_rng(seed)
    M = samples.shape[0]
    covs = np.empty((B, samples.shape[1], samples.shape[1]))
    for b in range(B):
        covs[b] = np.cov(samples[rng.integers(0, M, M)], rowvar=False)
    return covs.std(axis=0, ddof=1)


@criterion("CLT-2", budget_s=60.0)
def clt_2():
    flow, ens = _clt()
    S1 = flow.covariance_at(1.0)
    emp = ens.fluct_cov[0]
    se = bootstrap_cov_se(ens.fluctuations[:, 0, :])
    z = np.abs(emp - S1) / se
    # the flow is linear in (Sigma0, DD): halving DD subtracts half of the
    # zero-start solution, which gives the competing normalization for contrast
    p, m0 = flow.params, flow.moments[0]
    J = fl.integrate_covariance(p, m0, np.zeros((3, 3)), 1.0).covariances[-1]
    half = np.abs(emp - (S1 - J / 2)) / se
    return bool(np.all(z <= 5)), dict(
        max_z=float(z.max()), Sigma11=float(S1[0, 0]), empirical11=float(emp[0, 0]),
        max_z_if_diffusion_halved=float(half.max()))


@criterion("ORACLE-1", budget_s=60.0)
def oracle_1():
    p = ModelParams(1.0, 1.0)
    law = InitialLaw.product(0.6, 0.6)
    grid = [0.25, 0.5, 1.0]
    M = 20_000
    red = ensemble(p, law, 10, 1.0, grid, M, 101, method="reduced")
    full = ensemble(p, law, 10, 1.0, grid, M, 202, method="full")
    se = np.sqrt(red.var / M + full.var / M)
    z = np.abs(red.mean - full.mean) / se
    return bool(np.all(z <= 4)), dict(max_z=float(z.max()))


@criterion("LYA-1", budget_s=5.0)
def lya_1():
    p = ModelParams(1.0, 0.8)
    law = InitialLaw.uniform()
    flow = fl.integrate_covariance(p, moments_from_law(law), fl.initial_covariance(law), 50.0)
    eq = mf.solve_equilibria(p)[0]
    S_inf = fl.asymptotic_covariance(p, eq)
    A = fl.drift_matrix(p, eq.m)
    resid = float(np.max(np.abs(A @ S_inf + S_inf @ A.T + fl.diffusion_matrix(p, eq.m))))
    gap = float(np.max(np.abs(flow.covariances[-1] - S_inf)))
    return gap < 1e-6 and resid < 1e-10, dict(flow_gap=gap, lyapunov_residual=resid)


@criterion("CRITGROW-1")
def critgrow_1():
    p = ModelParams(1.0, critical_gamma(1.0))
    law = InitialLaw.uniform()
    flow = fl.integrate_covariance(p, moments_from_law(law), fl.initial_covariance(law), 50.0)
    mask = flow.grid >= 10.0 - 1e-12
    s11 = flow.covariances[mask, 0, 0]
    increasing = bool(np.all(np.diff(s11) > 0))
    v10, v50 = fl.variance_sigma(flow, 10.0), fl.variance_sigma(flow, 50.0)
    return increasing and v50 > 2 * v10, dict(
        increasing=increasing, S11_10=v10, S11_50=v50, ratio=v50 / v10)


@criterion("CRISIS-1")
def crisis_1():
    p = ModelParams(1.5, 2.1)
    flow = _flow(p, CRISIS_M0, 20.0)
    ms = flow.moments[:, 0]
    m_star = mf.solve_equilibria(p)[1].m.m_sigma
    V = flow.covariances[:, 0, 0]
    inside = (flow.grid > 2) & (flow.grid < 10)
    k = int(np.argmax(np.where(inside, V, -np.inf)))
    V2, V20 = fl.variance_sigma(flow, 2.0), fl.variance_sigma(flow, 20.0)
    interior = bool(V[k] > V[k - 1] and V[k] >= V[k + 1])
    a = float(np.min(np.abs(ms)))
    b = abs(ms[-1] + m_star)
    c = interior and V[k] > V2 and V[k] > V20
    return a < 0.1 and b < 1e-3 and c, dict(
        min_abs_m_sigma=a, final_gap=b, t_peak=float(flow.grid[k]), V_peak=float(V[k]), V2=V2, V20=V20)


LOSS1_REPLICAS = 5000


@criterion("LOSS-1", budget_s=120.0)
def loss_1():
    lm = pf.LossModel(0.0, 1.0)
    law = InitialLaw.uniform()
    N, t = 2000, 1.0
    ks = np.array([-2, -1, 0, 1, 2])
    res = {}
    for gamma in (0.0, 0.8):
        p = ModelParams(1.0, gamma)
        flow = fl.integrate_covariance(p, moments_from_law(law), fl.initial_covariance(law), t)
        m, V = float(flow.moments[-1, 0]), fl.variance_sigma(flow, t)
        res[gamma] = (m, V)
    m0, V0 = res[0.0]
    common_alpha = N * pf.asymptotic_loss(lm, m0) + 2 * math.sqrt(N * pf.loss_variance(lm, m0, V0))
    worst = worst_small = 0.0
    tail = {}
    for seed, gamma in ((31, 0.0), (32, 0.8)):
        m, V = res[gamma]
        L, vh = pf.asymptotic_loss(lm, m), pf.loss_variance(lm, m, V)
        alphas = np.r_[N * L + ks * math.sqrt(N * vh), common_alpha]
        mc = pf.monte_carlo_loss(ModelParams(1.0, gamma), law, lm, N, t, alphas,
                                 LOSS1_REPLICAS, seed)
        # the two-sided form of the Var-type measure: P(m_N <= (N - 2 alpha)/N)
        analytic = pf.std_normal_cdf((-2 * alphas + (1 - m) * N) / (math.sqrt(N) * math.sqrt(V)))
        worst = max(worst, float(np.max(np.abs(analytic[:-1] - mc.mc_probs[:-1]))))
        # informational: the first 500 replicas alone, whose noise is comparable to the tolerance
        small = (mc.losses[:500, None] >= alphas[None, :-1]).mean(axis=0)
        worst_small = max(worst_small, float(np.max(np.abs(analytic[:-1] - small))))
        tail[gamma] = (float(analytic[-1]), float(mc.mc_probs[-1]))
    ordered = tail[0.8][0] > tail[0.0][0] and tail[0.8][1] > tail[0.0][1]
    return worst < 0.03 and ordered, dict(
        max_abs_diff=worst, replicas=LOSS1_REPLICAS, max_abs_diff_first500=worst_small,
        tail_gamma0=list(tail[0.0]), tail_gamma08=list(tail[0.8]))


def _mixture(psi) -> pf.MixtureSpec:
    return pf.MixtureSpec(psi=psi, **MIXTURE)


@criterion("LOSS-2")
def loss_2():
    N = 10_000
    # (a) at the subcritical equilibrium, beta=1.5, gamma=1.1
    p = ModelParams(1.5, 1.1)
    eq = mf.solve_equilibria(p)[0]
    V = float(fl.asymptotic_covariance(p, eq)[0, 0])
    m = eq.m.m_sigma
    point, gam = _mixture(pf.PointMass(4.5)), _mixture(pf.GammaFactor(2.25, 2.0))
    lm = pf.mixture_loss_moments(point, 4.5)
    alpha = N * pf.asymptotic_loss(lm, m) + 2 * math.sqrt(N * pf.loss_variance(lm, m, V))
    p_point = pf.mixture_excess_prob(point, N, m, V, alpha)
    p_gamma = pf.mixture_excess_prob(gam, N, m, V, alpha)
    # (b) node doubling: the change at the accepted node count
    quad = [pf.mixture_quadrature(gam, N, m, V, a) for a in (0.9 * alpha, alpha, 1.1 * alpha)]
    diffs = [q[2] for q in quad]
    # (c) before and after the crisis
    pc = ModelParams(1.5, 2.1)
    flow = _flow(pc, CRISIS_M0, 10.0)
    (m1, V1), (m2, V2) = [(float(flow.moments_at(t)[0]), fl.variance_sigma(flow, t)) for t in (2.0, 10.0)]
    alphas = np.linspace(0.3, 1.0, 141) * N
    c1 = np.array([pf.mixture_excess_prob(gam, N, m1, V1, a) for a in alphas])
    c2 = np.array([pf.mixture_excess_prob(gam, N, m2, V2, a) for a in alphas])
    high = (c1 <= 1e-2) & (c1 >= 1e-8)
    above = bool(high.any() and np.all(c2[high] > c1[high]))
    ok = p_gamma > p_point and max(diffs) <= 1e-8 and above
    return ok, dict(p_gamma=p_gamma, p_point=p_point, max_doubling_diff=max(diffs), nodes=[q[1] for q in quad],
                    high_threshold_points=int(high.sum()), T2_above_T1=above,
                    m_T1=m1, V_T1=V1, m_T2=m2, V_T2=V2)


@criterion("PROP-1")
def prop_1():
    from .properties import run_all

    results = run_all()
    failed = [name for name, err in results.items() if err is not None]
    return not failed, dict(properties=len(results), failed=failed)


def names() -> List[str]:
    return list(REGISTRY)


def run(selected: Optional[List[str]] = None, report: Callable[[str], None] = print) -> List[Criterion]:
    chosen = names() if not selected else selected
    unknown = [n for n in chosen if n not in REGISTRY]
    if unknown:
        raise KeyError(f"unknown criteria {unknown}; known: {names()}")
    out = []
    for n in chosen:
        c = REGISTRY[n]()
        report(c.line())
        out.append(c)
    return out
