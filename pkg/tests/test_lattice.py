import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedded_eigs.errors import ConfigInvalid, CriticalPoint, TailTooFat
from embedded_eigs.lattice import (
    LatticeField,
    build_discrete_example,
    cosine_stencil,
    discrete_multiplier,
    poisson_check,
)
from embedded_eigs.symbols import SymbolSpec


def compact(d, M, values):
    """Field with the given values in the centre and zeros on the faces."""
    v = np.zeros((2 * M + 1,) * d, dtype=complex)
    k = values.shape[0] // 2
    sl = tuple(slice(M - k, M + k + 1) for _ in range(d))
    v[sl] = values
    return LatticeField(d, M, v)


def test_delta_response():
    f = compact(2, 8, np.ones((1, 1)))
    out = discrete_multiplier(SymbolSpec.discrete_cosine(2), f)
    assert out.values[8, 8] == pytest.approx(2.0)
    assert out.values[9, 8] == pytest.approx(-0.5)
    assert abs(out.values[10, 8]) < 1e-14


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_dft_agrees_with_stencil(seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    f = compact(2, 8, vals)
    a = discrete_multiplier(SymbolSpec.discrete_cosine(2), f).values
    b = cosine_stencil(f).values
    assert np.abs(a - b).max() < 1e-13


def test_field_validation_and_io(tmp_path):
    with pytest.raises(ConfigInvalid):
        LatticeField(2, 4, np.zeros((9, 9)))
    with pytest.raises(ConfigInvalid):
        LatticeField(2, 8, np.zeros((5, 5)))
    f = LatticeField.from_function(lambda x: np.exp(-(x[0] ** 2 + x[1] ** 2)), 2, 8)
    f.save(tmp_path / "f.gf")
    g = LatticeField.load(tmp_path / "f.gf")
    assert np.array_equal(f.values, g.values)
    f.to_csv(tmp_path / "f.csv")
    assert len((tmp_path / "f.csv").read_text().splitlines()) == 17 * 17 + 1


def test_fat_tail_rejected():
    f = LatticeField.from_function(lambda x: 1.0 / (1 + x[0] ** 2 + x[1] ** 2), 2, 8)
    with pytest.raises(TailTooFat):
        discrete_multiplier(SymbolSpec.discrete_cosine(2), f)


def test_non_periodic_symbol_rejected():
    f = compact(2, 8, np.ones((1, 1)))
    with pytest.raises(ConfigInvalid):
        discrete_multiplier(SymbolSpec.laplacian(2), f)


def test_poisson_gaussian():
    r = poisson_check(lambda x: np.exp(-(x[0] ** 2 + x[1] ** 2) / 2), SymbolSpec.discrete_cosine(2), 2, 16)
    assert r["deviation"] < 1e-12


def test_discrete_example_residual_and_realness():
    ex = build_discrete_example(2, 1.0, M=24)
    assert ex.residual < 1e-10
    assert ex.k in (0, 1)
    assert np.all(np.isfinite(ex.V.values))


def test_flat_direction_uses_thm2_weight():
    ex = build_discrete_example(3, 3.0, hint=[1, 1, 1])
    assert ex.k == 0
    assert ex.weight.kind == "thm2"
    assert ex.residual < 1e-10


def test_band_edge_is_critical():
    with pytest.raises(CriticalPoint):
        build_discrete_example(2, 0.0)
