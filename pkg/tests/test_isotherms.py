import logging

import numpy as np
import pytest

from aquitrans.physics.isotherms import Isotherm, IsothermKind, isotherm_eval, isotherm_lipschitz


def test_reference_values():
    assert isotherm_eval(Isotherm.linear(2.0), 0.5) == pytest.approx(1.0)
    assert isotherm_eval(Isotherm.langmuir(1.0, 1.0), 1.0) == pytest.approx(0.5)
    assert isotherm_eval(Isotherm.freundlich(2.0, 2.0), 0.5) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "isotherm",
    [Isotherm.linear(3.0), Isotherm.freundlich(1.0, 1.5), Isotherm.langmuir(2.0, 0.7)],
)
def test_zero_concentration_gives_zero(isotherm):
    assert isotherm_eval(isotherm, 0.0) == 0.0


def test_negative_concentration_is_clamped():
    values = isotherm_eval(Isotherm.freundlich(1.0, 0.5), np.array([-0.25, 0.25]))
    assert values[0] == 0.0
    assert values[1] == pytest.approx(0.5)


def test_lipschitz_bounds():
    assert isotherm_lipschitz(Isotherm.linear(2.0), 5.0) == 2.0
    assert isotherm_lipschitz(Isotherm.langmuir(2.0, 3.0), 5.0) == 2.0
    assert isotherm_lipschitz(Isotherm.freundlich(1.0, 2.0), 3.0) == pytest.approx(6.0)
    assert isotherm_lipschitz(Isotherm.freundlich(1.0, 0.5), 1.0) == float("inf")


def test_freundlich_below_one_is_flagged(caplog):
    with caplog.at_level(logging.WARNING, logger="aquitrans.physics.isotherms"):
        isotherm = Isotherm.freundlich(1.0, 0.5)
    assert isotherm.unbounded_derivative
    assert "unbounded derivative" in caplog.text


@pytest.mark.parametrize("k, k_prime", [(-1.0, 1.0), (1.0, -0.5), (float("nan"), 1.0)])
def test_invalid_parameters(k, k_prime):
    with pytest.raises(ValueError):
        Isotherm(IsothermKind.LANGMUIR, k, k_prime)


def test_kind_accepts_string():
    assert Isotherm("langmuir", 1.0, 1.0).kind is IsothermKind.LANGMUIR
