import math

import numpy as np
import pytest

from contagion_lab.errors import DomainError, InfeasibleMomentsError, ValidationError
from contagion_lab.model import (
    InitialLaw,
    ModelParams,
    MomentVector,
    RegimeTag,
    critical_gamma,
    law_from_moments,
    moments_from_law,
    regime,
)


def test_moments_of_simple_laws():
    assert moments_from_law(InitialLaw.uniform()).as_array().tolist() == [0, 0, 0]
    assert moments_from_law(InitialLaw.point_mass(1, 1)).as_array().tolist() == [1, 1, 1]
    law = InitialLaw.from_mapping({(1, 1): 0.5, (-1, -1): 0.5})
    assert moments_from_law(law).as_array().tolist() == [0, 0, 1]


@pytest.mark.parametrize("probs", [(0.5, 0.5, 0.5, -0.5), (0.3, 0.3, 0.3, 0.3), (0.25, 0.25, 0.25)])
def test_invalid_laws_rejected(probs):
    with pytest.raises(ValidationError):
        moments_from_law(InitialLaw(probs))


def test_law_from_moments_inverts():
    assert law_from_moments(MomentVector(0, 0, 0)).probs == (0.25,) * 4
    assert law_from_moments(MomentVector(1, 1, 1)).probs == (1.0, 0.0, 0.0, 0.0)


def test_infeasible_triple_names_the_cell():
    # cell weights by hand: (1,1) 1.9, (1,-1) 1.9, (-1,1) 1.9, (-1,-1) 1-0.9-0.9-0.9 = -1.7
    with pytest.raises(InfeasibleMomentsError) as info:
        law_from_moments(MomentVector(0.9, 0.9, -0.9))
    assert info.value.cell == (-1, -1)
    assert info.value.weight == pytest.approx(-1.7 / 4)
    assert "(-1, -1)" in str(info.value)


def test_product_law_moments():
    m = moments_from_law(InitialLaw.product(0.6, -0.3))
    assert m.as_array() == pytest.approx([0.6, -0.3, -0.18], abs=1e-15)


@pytest.mark.parametrize("beta, printed", [(1.0, 1.313), (1.5, 1.105), (0.9, 1.396)])
def test_critical_gamma_printed_values(beta, printed):
    assert critical_gamma(beta) == pytest.approx(printed, abs=5e-4)
    assert critical_gamma(beta) == 1 / math.tanh(beta)


@pytest.mark.parametrize("beta", [0.0, -1.0, float("nan"), float("inf")])
def test_critical_gamma_domain(beta):
    with pytest.raises(DomainError):
        critical_gamma(beta)


def test_critical_gamma_strictly_decreasing():
    values = [critical_gamma(b) for b in np.linspace(0.1, 5, 100)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_regime_examples():
    assert regime(ModelParams(1.0, 0.8)).tag is RegimeTag.SUBCRITICAL
    assert regime(ModelParams(1.0, critical_gamma(1.0))).tag is RegimeTag.CRITICAL
    assert regime(ModelParams(1.5, 2.1)).tag is RegimeTag.SUPERCRITICAL
    # the printed two-decimal value 1.105 is above 1/tanh(1.5) = 1.10479...
    assert regime(ModelParams(1.5, 1.105)).tag is RegimeTag.SUPERCRITICAL


def test_regime_tolerance_band():
    gc = critical_gamma(1.0)
    assert regime(ModelParams(1.0, gc + 5e-13)).tag is RegimeTag.CRITICAL
    assert regime(ModelParams(1.0, gc + 5e-12)).tag is RegimeTag.SUPERCRITICAL


@pytest.mark.parametrize("beta, gamma", [(-0.1, 1.0), (1.0, float("nan")), ("1", 1.0), (True, 1.0)])
def test_params_validation(beta, gamma):
    with pytest.raises(ValidationError):
        ModelParams(beta, gamma)


def test_moment_vector_bounds():
    with pytest.raises(ValidationError):
        MomentVector(1.1, 0, 0)
    assert not MomentVector(0.9, 0.9, -0.9).is_feasible()
    assert MomentVector(0.5, 0.5, 0.25).is_feasible()
