import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedded_eigs.errors import AllMasked, ConfigInvalid
from embedded_eigs.grid import (
    GridField,
    GridSpec,
    Taper,
    apply_multiplier,
    common_points,
    envelope_constant,
    export_csv,
    load_field,
    lq_norm,
    pointwise_ratio,
    refine,
    sample,
    save_field,
)


def gaussian(spec):
    x = spec.coords()
    return np.broadcast_to(np.exp(-sum(xj**2 for xj in x) / 2), spec.shape).astype(complex)


def test_spec_validation():
    with pytest.raises(ConfigInvalid):
        GridSpec.make(2, 4.0, 96)
    g = GridSpec.make(2, (2.0, 4.0), (32, 64), (0.5, 0.0))
    assert g.shape == (32, 64)
    assert g.spacing == pytest.approx((0.125, 0.125))
    assert GridSpec.from_json(g.to_json()) == g


@given(st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=20, deadline=None)
def test_multiplier_is_linear(a, b):
    spec = GridSpec.make(1, 8.0, 64)
    f = GridField(spec, gaussian(spec), "f")
    x = spec.coords()[0]
    g = GridField(spec, (np.exp(-(x - 1) ** 2)).astype(complex), "g")
    sym = lambda xi: 1 + xi[0] ** 2  # noqa: E731
    lhs = apply_multiplier(sym, GridField(spec, a * f.values + b * g.values, "")).values
    rhs = a * apply_multiplier(sym, f).values + b * apply_multiplier(sym, g).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + abs(a) + abs(b))


def test_derivative_of_gaussian_1d():
    spec = GridSpec.make(1, 10.0, 128)
    x = spec.coords()[0]
    d = apply_multiplier(lambda xi: 1j * xi[0], GridField(spec, gaussian(spec), "g"))
    assert np.abs(d.values - (-x * np.exp(-x**2 / 2))).max() < 1e-12


def test_real_transform_matches_complex():
    spec = GridSpec.make(2, 8.0, 64)
    f = GridField(spec, gaussian(spec).real, "g")
    sym = lambda xi: xi[0] ** 2 + xi[1] ** 2  # noqa: E731
    a = apply_multiplier(sym, f, real=True).values
    b = apply_multiplier(sym, GridField(spec, f.values.astype(complex), "g")).values
    assert np.abs(a - b).max() < 1e-13


def test_refine_is_exact_for_band_limited():
    spec = GridSpec.make(1, np.pi, 16)
    x = spec.coords()[0]
    f = GridField(spec, np.cos(3 * x) + 0.5 * np.sin(x), "f")
    fine = refine(f)
    xf = fine.spec.coords()[0]
    assert np.abs(fine.values - (np.cos(3 * xf) + 0.5 * np.sin(xf))).max() < 1e-13
    sl = common_points(spec, fine.spec)
    assert np.allclose(fine.values[sl], f.values)


def test_taper_window_and_core():
    spec = GridSpec.make(1, 10.0, 128)
    t = Taper.for_grid(spec)
    w = t.window(spec)
    core = t.core(spec)
    assert np.all(np.abs(w[core] - 1) < 1e-12)
    assert w[0] < 1e-8


def test_lq_norm_and_envelope():
    spec = GridSpec.make(1, 4.0, 64)
    f = GridField(spec, np.ones(spec.shape), "one")
    assert lq_norm(f, 2) == pytest.approx(np.sqrt(8.0))
    assert lq_norm(f, np.inf) == 1.0
    env = envelope_constant(f, lambda x: 1 + np.abs(x[0]), inner=0.5)
    assert env.C == pytest.approx(3.0)


def test_pointwise_ratio_masks_small_denominators():
    spec = GridSpec.make(1, 4.0, 16)
    x = spec.coords()[0]
    num = GridField(spec, x.astype(complex), "num")
    den = np.where(np.abs(x) < 1, 0.0, x)
    r = pointwise_ratio(num, den, 1e-6)
    assert np.all(r.ratio.values[~r.mask] == 1)
    assert r.mask.sum() == np.sum(np.abs(x) < 1)
    with pytest.raises(AllMasked):
        pointwise_ratio(num, np.zeros(spec.shape), 1e-6)


def test_save_load_and_csv(tmp_path):
    spec = GridSpec.make(2, 2.0, 16)
    f = sample(lambda x: x[0] + 1j * x[1], spec, "z", complex)
    save_field(tmp_path / "f.gf", f)
    g = load_field(tmp_path / "f.gf")
    assert g.spec == spec and np.array_equal(g.values, f.values)
    export_csv(tmp_path / "f.csv", f)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x0,re,im" and len(lines) == 17
