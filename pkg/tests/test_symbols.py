import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedded_eigs import symbols as sy
from embedded_eigs.errors import ConfigInvalid, CriticalPoint, EmptySupport, NoRoot, NotEven, UnsupportedKind


def test_laplacian_value_and_derivatives():
    T = sy.SymbolSpec.laplacian(3)
    xi = np.array([1.0, -2.0, 0.5])
    assert sy.evaluate(T, xi) == pytest.approx(5.25)
    assert np.allclose(sy.gradient(T, xi), 2 * xi)
    assert np.allclose(sy.hessian(T, xi), 2 * np.eye(3))


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_discrete_cosine_is_periodic(xi):
    T = sy.SymbolSpec.discrete_cosine(2)
    a = np.array(xi)
    assert sy.evaluate(T, a) == pytest.approx(sy.evaluate(T, a + 2 * np.pi), abs=1e-12)
    assert sy.evaluate(T, a) == pytest.approx(2 - np.cos(a[0]) - np.cos(a[1]), abs=1e-12)


def test_radial_symbol_expands_to_polynomial():
    T = sy.SymbolSpec.radial(2, [1.0, 0.0, 1.0])  # 1 + |xi|^4
    xi = np.array([0.3, -1.1])
    r2 = float(xi @ xi)
    assert sy.evaluate(T, xi) == pytest.approx(1 + r2**2)


@pytest.mark.parametrize("T", [sy.SymbolSpec.laplacian(2), sy.SymbolSpec.radial(3, [0.0, 1.0]),
                               sy.SymbolSpec.discrete_cosine(3), sy.SymbolSpec.chandrasekhar(2)])
def test_json_round_trip(T):
    back = sy.SymbolSpec.from_json(T.to_json())
    xi = np.array([0.2, 0.7, -0.4][: T.d])
    assert back.kind == T.kind and back.d == T.d
    assert sy.evaluate(back, xi) == pytest.approx(sy.evaluate(T, xi))


def test_fermi_point_on_sphere():
    T = sy.SymbolSpec.laplacian(3)
    fp = sy.find_fermi_point(T, 4.0, [0, 0, 1])
    assert np.allclose(fp.eta, [0, 0, 2], atol=1e-12)
    assert fp.k_nonvanishing == 2
    # the rotation sends the gradient direction to e_d
    g = fp.gradient / np.linalg.norm(fp.gradient)
    assert np.allclose(fp.rotation @ g, [0, 0, 1], atol=1e-12)
    assert np.allclose(fp.curvatures, [1 / 2, 1 / 2])


@given(st.floats(0.1, 6.0), st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
@settings(max_examples=25, deadline=None)
def test_fermi_point_lies_on_level_set(lam, hint):
    T = sy.SymbolSpec.laplacian(3)
    fp = sy.find_fermi_point(T, lam, hint)
    assert sy.evaluate(T, fp.eta) == pytest.approx(lam, abs=sy.tol_fermi(lam))
    assert np.allclose(fp.frame @ fp.frame.T, np.eye(3), atol=1e-12)


def test_cylinder_has_one_curved_direction():
    T = sy.SymbolSpec.polynomial(3, {(2, 0, 0): 1.0, (0, 2, 0): 1.0})
    fp = sy.find_fermi_point(T, 1.0, [0, 1, 0])
    assert fp.k_nonvanishing == 1


def test_no_root_and_critical_point():
    with pytest.raises(NoRoot):
        sy.find_fermi_point(sy.SymbolSpec.laplacian(2), -1.0, [1, 0])
    with pytest.raises(CriticalPoint):
        sy.find_fermi_point(sy.SymbolSpec.laplacian(2), 0.0, [1, 0])
    with pytest.raises(ConfigInvalid):
        sy.find_fermi_point(sy.SymbolSpec.laplacian(2), 1.0, [0, 0])


def test_taylor_support_of_sphere_at_north_pole():
    T = sy.SymbolSpec.laplacian(2)
    ts = sy.taylor_support(T, [0.0, 1.0], 4)
    assert set(ts.support) == {(0, 1), (2, 0), (0, 2)}
    assert set(ts.newton_vertices) == {(0, 1), (2, 0)}
    cond = sy.check_gamma_condition(ts, (Fraction(1, 2), Fraction(1)))
    assert cond.holds and cond.margin == 0
    assert not sy.check_gamma_condition(ts, (Fraction(1, 3), Fraction(1))).holds


def test_taylor_support_errors():
    with pytest.raises(UnsupportedKind):
        sy.taylor_support(sy.SymbolSpec.discrete_cosine(2), [0, 1], 3)
    ts = sy.taylor_support(sy.SymbolSpec.laplacian(2), [0.0, 0.0], 1)
    with pytest.raises(EmptySupport):
        sy.check_gamma_condition(ts, (1, 1))


def test_newton_vertices_drop_dominated_points():
    assert set(sy.newton_vertices([(2, 0), (0, 2), (1, 1), (2, 2)])) == {(2, 0), (0, 2)}


def test_real_potential_condition():
    T = sy.SymbolSpec.laplacian(3)
    assert sy.check_real_potential_condition(T, [1.0, 0, 0], 1)
    assert sy.derivative_e1(T, [1.0, 0, 0], 1) == pytest.approx(2.0)
    odd = sy.SymbolSpec.polynomial(2, {(1, 0): 1.0, (2, 0): 1.0})
    with pytest.raises(NotEven):
        sy.check_real_potential_condition(odd, [1.0, 0], 1)
    with pytest.raises(ConfigInvalid):
        sy.check_real_potential_condition(T, [1.0, 0, 0], 2)


def test_real_frame_maps_e1_to_eta():
    eta = np.array([0.0, 3.0, 4.0])
    A = sy.real_frame(sy.SymbolSpec.laplacian(3), eta)
    assert np.allclose(A @ np.eye(3)[0], eta)
    assert math.isclose(abs(np.linalg.det(A)), 125.0)
