"""Parameters, initial laws on {-1, 1}^2 and regime classification.

A law on the four (sigma, omega) cells is equivalent to the moment triple
(m_sigma, m_omega, m_sigma_omega) through

    p(s, w) = (1 + s*m_sigma + w*m_omega + s*w*m_sigma_omega) / 4

and the moment triple is what every dynamical module works with.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from .errors import DomainError, InfeasibleMomentsError, ValidationError

# Fixed cell order used for every length-4 array in the package.
CELLS: Tuple[Tuple[int, int], ...] = ((1, 1), (1, -1), (-1, 1), (-1, -1))

TOL_CRIT = 1e-12
_LAW_SUM_TOL = 1e-9
_NEG_CELL_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Interaction strengths of the two-spin model.

    ``beta`` couples each firm's rating spin to its own fundamental spin,
    ``gamma`` couples the fundamental spin to the mean rating.  Zero is
    accepted for either so the non-interacting limits can be simulated.
    """

    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("beta", "gamma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating)) or isinstance(v, bool):
                raise ValidationError(f"{name} must be a real number, got {v!r}")
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, float(v))


@dataclass(frozen=True)
class MomentVector:
    m_sigma: float
    m_omega: float
    m_sigma_omega: float

    def __post_init__(self):
        for name in ("m_sigma", "m_omega", "m_sigma_omega"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or abs(v) > 1.0 + 1e-12:
                raise ValidationError(f"{name}={v!r} outside [-1, 1]")
            object.__setattr__(self, name, v)

    @classmethod
    def from_array(cls, a) -> "MomentVector":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.m_sigma, self.m_omega, self.m_sigma_omega])

    def cell_weights(self) -> np.ndarray:
        """Unnormalised cell weights ``1 + s*m_s + w*m_w + s*w*m_sw`` in CELLS order."""
        return np.array(
            [1.0 + s * self.m_sigma + w * self.m_omega + s * w * self.m_sigma_omega for s, w in CELLS]
        )

    def is_feasible(self, tol: float = _NEG_CELL_TOL) -> bool:
        return bool(self.cell_weights().min() >= -4.0 * tol)


@dataclass(frozen=True)
class InitialLaw:
    """Probability law on {-1, 1}^2, stored as four probabilities in CELLS order."""

    probs: Tuple[float, float, float, float]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (4,):
            raise ValidationError("an initial law needs exactly four cell probabilities")
        if not np.all(np.isfinite(p)):
            raise ValidationError("cell probabilities must be finite")
        if np.any(p < 0):
            raise ValidationError(f"negative cell probability in {p.tolist()}")
        total = p.sum()
        if abs(total - 1.0) > _LAW_SUM_TOL:
            raise ValidationError(f"cell probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p / total))

    @classmethod
    def from_mapping(cls, p: Mapping[Tuple[int, int], float]) -> "InitialLaw":
        unknown = set(p) - set(CELLS)
        if unknown:
            raise ValidationError(f"unknown cells {sorted(unknown)}")
        return cls(tuple(float(p.get(c, 0.0)) for c in CELLS))

    @classmethod
    def uniform(cls) -> "InitialLaw":
        return cls((0.25, 0.25, 0.25, 0.25))

    @classmethod
    def point_mass(cls, sigma: int = 1, omega: int = 1) -> "InitialLaw":
        return cls(tuple(1.0 if c == (sigma, omega) else 0.0 for c in CELLS))

    @classmethod
    def product(cls, m_sigma: float, m_omega: float) -> "InitialLaw":
        """Law with independent sigma and omega of the given means."""
        return cls(tuple((1 + s * m_sigma) * (1 + w * m_omega) / 4 for s, w in CELLS))

    def __getitem__(self, cell: Tuple[int, int]) -> float:
        return self.probs[CELLS.index(tuple(cell))]

    def as_array(self) -> np.ndarray:
        return np.array(self.probs)


class RegimeTag(enum.Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    critical_gamma: float


def moments_from_law(law: InitialLaw) -> MomentVector:
    if not isinstance(law, InitialLaw):
        law = InitialLaw(tuple(law))
    p = law.probs
    ms = sum(s * q for (s, _), q in zip(CELLS, p))
    mw = sum(w * q for (_, w), q in zip(CELLS, p))
    msw = sum(s * w * q for (s, w), q in zip(CELLS, p))
    return MomentVector(ms, mw, msw)


def law_from_moments(m: MomentVector) -> InitialLaw:
    """Invert :func:`moments_from_law`.

    Raises InfeasibleMomentsError naming the first cell whose probability is
    below -1e-12.  Tiny negative values above that threshold are set to 0.
    """
    if not isinstance(m, MomentVector):
        m = MomentVector.from_array(m)
    probs = m.cell_weights() / 4.0
    for cell, q in zip(CELLS, probs):
        if q < -_NEG_CELL_TOL:
            raise InfeasibleMomentsError(cell, float(q))
    probs = np.where(probs < 0, 0.0, probs)
    return InitialLaw(tuple(float(q) for q in probs))


def critical_gamma(beta: float) -> float:
    """Critical value ``1/tanh(beta)`` of the mean-field coupling."""
    if not (beta > 0) or not math.isfinite(beta):
        raise DomainError(f"critical_gamma needs beta > 0, got {beta!r}")
    return 1.0 / math.tanh(beta)


def regime(params: ModelParams) -> Regime:
    if params.beta == 0:
        # no sigma-omega coupling: the origin is the only equilibrium for any gamma
        return Regime(RegimeTag.SUBCRITICAL, math.inf)
    gc = critical_gamma(params.beta)
    if abs(params.gamma - gc) <= TOL_CRIT:
        tag = RegimeTag.CRITICAL
    elif params.gamma < gc:
        tag = RegimeTag.SUBCRITICAL
    else:
        tag = RegimeTag.SUPERCRITICAL
    return Regime(tag, gc)
