"""Large-portfolio losses driven by the rating spins.

Each firm's loss, conditional on its rating ``sigma``, has mean ``l_sigma`` and
variance ``v_sigma``.  For N firms the total loss is approximately Gaussian
with mean ``N * L(t)`` and variance ``N * Vhat(t)`` where

    L(t)    = (l1 - l_m1)/2 * m_sigma(t) + (l1 + l_m1)/2
    Vhat(t) = (l1 - l_m1)^2 * V(t) / 4 + (1 + m)/2 * v1 + (1 - m)/2 * v_m1

and ``V(t)`` is the limiting variance of sqrt(N) * (m_sigma_N - m_sigma).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special

from .errors import QuadratureError, ValidationError
from .model import InitialLaw, ModelParams
from .particles import initial_counts, make_rng, reduced_simulate


@dataclass(frozen=True)
class LossModel:
    """Conditional loss moments given the rating (+1 healthy, -1 distressed)."""

    l1: float
    l_minus1: float
    v1: float = 0.0
    v_minus1: float = 0.0

    def __post_init__(self):
        if not self.l1 < self.l_minus1:
            raise ValidationError(f"need l1 < l_minus1, got {self.l1} >= {self.l_minus1}")
        if self.v1 < 0 or self.v_minus1 < 0:
            raise ValidationError("conditional variances must be >= 0")


@dataclass(frozen=True)
class PointMass:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValidationError("PointMass value must be >= 0")

    @property
    def mean(self) -> float:
        return self.value


@dataclass(frozen=True)
class GammaFactor:
    """Gamma-distributed macro factor in the shape-scale convention."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValidationError("Gamma shape and scale must be > 0")

    @classmethod
    def from_shape_rate(cls, shape: float, rate: float) -> "GammaFactor":
        return cls(shape, 1.0 / rate)

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    def pdf(self, psi):
        psi = np.asarray(psi, dtype=float)
        k, th = self.shape, self.scale
        with np.errstate(divide="ignore"):
            logp = (k - 1) * np.log(psi) - psi / th - special.gammaln(k) - k * math.log(th)
        return np.exp(logp)

    def upper_limit(self) -> float:
        """Truncation point: the larger of mean + 12 sd and the 1 - 1e-12 quantile."""
        return max(self.shape * self.scale + 12.0 * math.sqrt(self.shape) * self.scale,
                   float(special.gammainccinv(self.shape, 1e-12)) * self.scale)


@dataclass(frozen=True)
class MixtureSpec:
    """Bernoulli mixture: P(default | sigma, psi) = 1 - exp(-a psi - b1 (1 - sigma)/2 - b2)."""

    a: float
    b1: float
    b2: float
    psi: Union[PointMass, GammaFactor]

    def __post_init__(self):
        if min(self.a, self.b1, self.b2) < 0:
            raise ValidationError("mixture weights must be >= 0")
        if self.b1 == 0:
            raise ValidationError("b1 = 0 gives equal losses in both rating classes")

    def default_prob(self, sigma: int, psi):
        return -np.expm1(-self.a * np.asarray(psi, dtype=float) - self.b1 * (1 - sigma) / 2 - self.b2)


@dataclass(frozen=True)
class LossCurve:
    thresholds: np.ndarray
    probs: np.ndarray
    t: float
    N: int
    mc_probs: Optional[np.ndarray] = None
    mc_stderr: Optional[np.ndarray] = None
    losses: Optional[np.ndarray] = None  # per-replica total losses (Monte Carlo only)


def std_normal_cdf(x):
    """Standard normal CDF through the complementary error function."""
    out = 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def asymptotic_loss(lm: LossModel, m_sigma_t: float) -> float:
    # weighted form of ((l1 - l-1)/2) m + (l1 + l-1)/2; exact at m = +-1
    return lm.l1 * (1 + m_sigma_t) / 2 + lm.l_minus1 * (1 - m_sigma_t) / 2


def loss_variance(lm: LossModel, m_sigma_t: float, V_t: float) -> float:
    if V_t < 0:
        raise ValidationError("V_t must be >= 0")
    return ((lm.l1 - lm.l_minus1) ** 2 * V_t / 4
            + (1 + m_sigma_t) * lm.v1 / 2
            + (1 - m_sigma_t) * lm.v_minus1 / 2)


def excess_loss_prob(lm: LossModel, N: int, m_sigma_t: float, V_t: float, alpha):
    """Gaussian approximation of P(L^N(t) >= alpha); ``alpha`` may be an array."""
    mean = N * asymptotic_loss(lm, m_sigma_t)
    vhat = loss_variance(lm, m_sigma_t, V_t)
    alpha = np.asarray(alpha, dtype=float)
    if vhat == 0:
        warnings.warn("zero loss variance: returning the degenerate distribution", RuntimeWarning)
        out = (alpha <= mean).astype(float)
        return float(out) if out.ndim == 0 else out
    return std_normal_cdf((mean - alpha) / (math.sqrt(N) * math.sqrt(vhat)))


def mixture_loss_moments(spec: MixtureSpec, psi_value: float) -> LossModel:
    if psi_value < 0:
        raise ValidationError("psi must be >= 0")
    p1 = float(spec.default_prob(1, psi_value))
    pm1 = float(spec.default_prob(-1, psi_value))
    return LossModel(p1, pm1, p1 * (1 - p1), pm1 * (1 - pm1))


def _mixture_integrand(spec: MixtureSpec, N, m, V, alpha, psi):
    p1 = spec.default_prob(1, psi)
    pm1 = spec.default_prob(-1, psi)
    L = (p1 - pm1) / 2 * m + (p1 + pm1) / 2
    vhat = (p1 - pm1) ** 2 * V / 4 + (1 + m) * p1 * (1 - p1) / 2 + (1 - m) * pm1 * (1 - pm1) / 2
    gap = N * L - alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        z = gap / np.sqrt(N * vhat)
    # zero variance (all firms default with certainty): the indicator of gap >= 0
    z = np.where(vhat > 0, z, np.where(gap >= 0, np.inf, -np.inf))
    return std_normal_cdf(z)


def _gamma_quadrature(spec, N, m, V, alpha, n):
    # psi = psi_max * u^k with k = max(2, 2/shape) turns the weight psi^(shape-1) dpsi
    # into a smooth function of u, so Gauss-Legendre converges quickly for any shape
    g = spec.psi
    k = max(2.0, 2.0 / g.shape)
    psi_max = g.upper_limit()
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    psi = psi_max * u**k
    jac = 0.5 * w * k * psi_max * u ** (k - 1)
    vals = _mixture_integrand(spec, N, m, V, alpha, psi)
    weights = jac * g.pdf(psi)
    return float(np.sum(weights * vals)), vals, float(np.sum(weights))


def mixture_quadrature(spec: MixtureSpec, N: int, m_sigma_t: float, V_t: float, alpha: float,
                       quad_nodes: int = 64, tol: float = 1e-8, max_nodes: int = 1 << 14):
    """Doubling Gauss-Legendre integration; returns ``(value, nodes, last_change)``."""
    if not isinstance(spec.psi, GammaFactor):
        raise ValidationError("quadrature needs a GammaFactor")
    if quad_nodes < 16:
        raise ValidationError("quad_nodes must be >= 16")
    n = quad_nodes
    prev = _gamma_quadrature(spec, N, m_sigma_t, V_t, alpha, n)[0]
    while 2 * n <= max_nodes:
        n *= 2
        cur = _gamma_quadrature(spec, N, m_sigma_t, V_t, alpha, n)[0]
        if abs(cur - prev) <= tol:
            return cur, n, abs(cur - prev)
        prev = cur
    raise QuadratureError(f"no convergence to {tol} with up to {max_nodes} nodes")


def mixture_excess_prob(spec: MixtureSpec, N: int, m_sigma_t: float, V_t: float, alpha: float,
                        quad_nodes: int = 64, tol: float = 1e-8) -> float:
    """P(L^N(t) >= alpha) averaged over the macro factor.

    Gauss-Legendre on the truncated factor range; the node count is doubled
    from ``quad_nodes`` until two successive values differ by at most ``tol``.
    """
    if isinstance(spec.psi, PointMass):
        return float(excess_loss_prob(mixture_loss_moments(spec, spec.psi.value), N,
                                      m_sigma_t, V_t, alpha))
    return mixture_quadrature(spec, N, m_sigma_t, V_t, alpha, quad_nodes, tol)[0]


def loss_curve(model, N: int, m_sigma_t: float, V_t: float, alphas, t: float = float("nan"),
               quad_nodes: int = 64) -> LossCurve:
    """Analytic exceedance curve for a LossModel or a MixtureSpec."""
    alphas = np.asarray(alphas, dtype=float)
    if isinstance(model, MixtureSpec):
        probs = np.array([mixture_excess_prob(model, N, m_sigma_t, V_t, a, quad_nodes) for a in alphas])
    else:
        probs = np.asarray(excess_loss_prob(model, N, m_sigma_t, V_t, alphas), dtype=float)
    return LossCurve(alphas, probs, t, N)


def _draw_losses(model, n_good: int, n_bad: int, rng: np.random.Generator) -> float:
    if isinstance(model, MixtureSpec):
        psi = model.psi.value if isinstance(model.psi, PointMass) else \
            rng.gamma(model.psi.shape, model.psi.scale)
        p1 = float(model.default_prob(1, psi))
        pm1 = float(model.default_prob(-1, psi))
        return float(rng.binomial(n_good, p1) + rng.binomial(n_bad, pm1))
    if model.v1 == 0 and model.v_minus1 == 0:
        return model.l1 * n_good + model.l_minus1 * n_bad
    if _is_bernoulli(model):
        return float(rng.binomial(n_good, model.l1) + rng.binomial(n_bad, model.l_minus1))
    raise ValidationError("Monte Carlo needs deterministic or Bernoulli conditional losses")


def _is_bernoulli(lm: LossModel) -> bool:
    return all(0 <= l <= 1 and math.isclose(v, l * (1 - l), rel_tol=1e-12, abs_tol=1e-15)
               for l, v in ((lm.l1, lm.v1), (lm.l_minus1, lm.v_minus1)))


def monte_carlo_loss(params: ModelParams, law: InitialLaw, model, N: int, t: float,
                     alphas: Sequence[float], replicas: int, seed: int,
                     loss_seed: Optional[int] = None) -> LossCurve:
    """Empirical exceedance curve of the total loss at time ``t``.

    Replica ``r`` simulates the reduced chain on stream ``(seed, r)`` and draws
    the conditional losses, one binomial per rating class, on the separate
    stream ``(loss_seed, r, 1)``.
    """
    if replicas < 100:
        raise ValidationError("monte_carlo_loss needs at least 100 replicas")
    loss_seed = seed if loss_seed is None else loss_seed
    alphas = np.asarray(alphas, dtype=float)
    losses = np.empty(replicas)
    for r in range(replicas):
        rng = make_rng(seed, r)
        if t == 0:
            counts = initial_counts(law, N, rng)
        else:
            counts = reduced_simulate(params, law, N, t, [t], rng).counts[0]
        n_good, n_bad = int(counts[0] + counts[1]), int(counts[2] + counts[3])
        lrng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(loss_seed), r, 1])))
        losses[r] = _draw_losses(model, n_good, n_bad, lrng)
    probs = (losses[None, :] >= alphas[:, None]).mean(axis=1)
    stderr = np.sqrt(probs * (1 - probs) / replicas)
    return LossCurve(alphas, probs, t, N, mc_probs=probs, mc_stderr=stderr, losses=losses)
