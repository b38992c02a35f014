from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from embedded_eigs.errors import ConfigInvalid
from embedded_eigs.weights import ScaleParam, WeightSpec, rho, scale_point

coords = st.lists(st.floats(-50, 50), min_size=3, max_size=3)


def test_thm1_weight_blocks():
    w = WeightSpec.thm1(3)
    assert w.gamma == (Fraction(1, 2), Fraction(1, 2), Fraction(1))
    assert rho(w, [1.0, 1.0, 2.0]) == pytest.approx(np.sqrt(1 + 4 + 4))


def test_thm2_weight_flat_block():
    w = WeightSpec.thm2(3, 1, flat=3)
    assert w.gamma == (Fraction(1, 2), Fraction(1, 3), Fraction(1))
    assert w.k == 1
    assert rho(w, [1.0, 2.0, 0.0]) == pytest.approx(np.sqrt(1 + 1 + 64))


@given(coords)
def test_rho_scaling_covariance(x):
    """rho(h^gamma x)^2 - 1 = h^2 (rho(x)^2 - 1) for the thm1 weight."""
    w = WeightSpec.thm1(3)
    h = 0.25
    lhs = rho(w, scale_point(h, w.gamma, x)) ** 2 - 1
    rhs = h**2 * (rho(w, x) ** 2 - 1)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@given(coords, coords)
def test_temperate(x, y):
    w = WeightSpec.thm1(3)
    x, y = np.array(x), np.array(y)
    bound = w.temperate_constant * rho(w, y) * (1 + np.linalg.norm(x - y) ** 2) ** (w.s / 2)
    assert rho(w, x) <= bound * (1 + 1e-12)


def test_json_round_trip():
    w = WeightSpec.thm2(4, 2, flat=5)
    assert WeightSpec.from_json(w.to_json()) == w


def test_invalid():
    with pytest.raises(ConfigInvalid):
        WeightSpec.custom(2, [((0,), 1)])
    with pytest.raises(ConfigInvalid):
        WeightSpec.custom(2, [((0, 1), 2)])
    with pytest.raises(ConfigInvalid):
        ScaleParam(0)
    assert ScaleParam(4).h == 0.25
