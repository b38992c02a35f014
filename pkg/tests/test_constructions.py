import math

import numpy as np
import pytest
from scipy import special

from embedded_eigs import symbols as sy
from embedded_eigs.constructions import (
    BuildConfig,
    bessel_j,
    build,
    build_knapp,
    build_real,
    build_thm1,
    build_thm2,
    chandrasekhar_first_term,
    chandrasekhar_g,
    clifford_defect,
    config_of,
    dirac_data,
    dirac_log_derivatives,
    dirac_matrices,
    kappa_radial,
    knapp_tile,
    preset,
    radial_zeros,
    surface_measure_ft,
)
from embedded_eigs.errors import (
    ConfigInvalid,
    CoverGap,
    CurvatureMismatch,
    NonCompact,
)
from embedded_eigs.grid import GridSpec
from embedded_eigs.verify import eigen_residual

LAP2 = sy.SymbolSpec.laplacian(2)
SMALL2 = GridSpec.make(2, (3.5, 7.0), (64, 128))


@pytest.mark.parametrize("nu", [0, 0.5, 1, 1.5, 2])
def test_bessel_against_scipy(nu):
    s = np.linspace(0, 40, 401)
    assert np.abs(bessel_j(nu, s) - special.jv(nu, s)).max() < 1e-12


def test_sphere_transform_d3_is_sinc():
    r = np.linspace(0.1, 20, 200)
    assert np.allclose(surface_measure_ft(3, 1.0, r), 4 * np.pi * np.sin(r) / r, atol=1e-12)
    assert surface_measure_ft(3, 1.0, 0.0) == pytest.approx(4 * np.pi)


def test_radial_zeros_d3():
    z = radial_zeros(3, 0.5, 13.0)
    assert np.allclose(z, np.pi * np.arange(1, 5), atol=1e-12)


def test_kappa_rules():
    assert kappa_radial(1.0, 1, "dimensional", 3) == pytest.approx(1 / 6)
    assert kappa_radial(1.0, 1, "vanishing") == pytest.approx(-0.5)
    with pytest.raises(ConfigInvalid):
        kappa_radial(1.0, 1, "other")


def test_thm1_small_build_solves_equation():
    fp = sy.find_fermi_point(LAP2, 1.0, [0, 1])
    c = build_thm1(LAP2, 1.0, fp, 8, 1, SMALL2)
    assert eigen_residual(c) < 1e-12
    assert c.mask[c.taper.core(c.spec)].mean() < 0.5
    assert np.all(c.V.values[c.mask] == 0)


def test_thm1_rejects_small_N():
    fp = sy.find_fermi_point(LAP2, 1.0, [0, 1])
    with pytest.raises(ConfigInvalid, match=r"\(d\+1\)/4"):
        build_thm1(LAP2, 1.0, fp, 0.7, 1, SMALL2)


def test_thm2_needs_flat_direction():
    fp = sy.find_fermi_point(sy.SymbolSpec.laplacian(3), 1.0, [0, 0, 1])
    with pytest.raises(CurvatureMismatch):
        build_thm2(sy.SymbolSpec.laplacian(3), 1.0, fp, 8, 1, GridSpec.make(3, 3.0, 32))


def test_real_parameter_checks():
    T = sy.SymbolSpec.laplacian(3)
    g = GridSpec.make(3, (math.pi, 3.0, 3.0), 32)
    with pytest.raises(ConfigInvalid, match="pi/10"):
        build_real(T, 1.0, 1, 16, 0.4, g)
    with pytest.raises(ConfigInvalid, match="odd"):
        build_real(T, 1.0, 2, 16, 0.3, g)
    with pytest.raises(ConfigInvalid, match="q pi"):
        build_real(T, 1.0, 1, 16, 0.3, GridSpec.make(3, 3.0, 32))


def test_radial_rejects_two_spheres():
    T = sy.SymbolSpec.radial(2, [2.0, -3.0, 1.0])  # (s-1)(s-2)
    cfg = BuildConfig("radial", {"symbol": T.to_json(), "lam": 0.0, "N": 4, "r0": 1.0},
                      GridSpec.make(2, 8.0, 64), "fixed")
    with pytest.raises(NonCompact):
        build(cfg, 1)


def test_chandrasekhar_first_term_matches_derivative():
    """The closed form equals d_d w / sin(x_d) computed by finite differences."""
    from embedded_eigs.constructions import chandrasekhar_w

    x = [np.array([0.3]), np.linspace(0.2, 3.0, 50)]
    h = 1e-5
    fd = (chandrasekhar_w([x[0], x[1] + h], 2.0, 4) - chandrasekhar_w([x[0], x[1] - h], 2.0, 4)) / (2 * h)
    closed = chandrasekhar_first_term(x, 2.0, 4)
    assert np.allclose(fd / np.sin(x[1]), closed, rtol=1e-5, atol=1e-12)
    t = np.linspace(-5, 5, 101)
    assert np.all(np.diff(chandrasekhar_g(t)) >= 0)
    assert np.allclose(chandrasekhar_g(-t), -chandrasekhar_g(t))


@pytest.mark.parametrize("d,K", [(2, 2), (3, 4)])
def test_dirac_matrices(d, K):
    alphas, beta = dirac_matrices(d)
    assert beta.shape == (K, K)
    assert clifford_defect(alphas, beta) == 0.0
    dd = dirac_data(d)
    lam_v = (alphas[-1] + beta) @ dd.v
    assert np.abs(lam_v - math.sqrt(2) * dd.v).max() < 1e-14
    with pytest.raises(ConfigInvalid):
        dirac_data(d, 0.5)


def test_dirac_log_derivatives_against_finite_differences():
    x = [np.array(0.4), np.array(-0.7), np.array(1.3)]
    N, n = 3.0, 2

    def logpsi(y):
        r2 = y[0] ** 2 + y[1] ** 2
        return -N / 2 * np.log(n * n + r2 * r2 + y[2] ** 2)

    h = 1e-6
    got = dirac_log_derivatives(x, N, n)
    for j in range(3):
        e = [np.zeros(()) for _ in range(3)]
        e[j] = np.array(h)
        fd = (logpsi([a + b for a, b in zip(x, e)]) - logpsi([a - b for a, b in zip(x, e)])) / (2 * h)
        assert got[j] == pytest.approx(fd, rel=1e-7)


def test_dirac_build_is_anti_hermitian():
    c = build(preset("dirac-2d"), 2)
    v = c.V.values
    assert np.abs(v + np.conj(np.swapaxes(v, -1, -2))).max() < 1e-12


def test_knapp_partition_and_gap():
    grid = GridSpec.make(2, (16.0, 64.0), 64)
    r = build_knapp(2.0, grid)
    assert r.partition_error < 1e-10
    assert 0 < r.c_lower <= r.c_upper
    with pytest.raises(CoverGap):
        build_knapp(2.0, grid, j_max=1)
    x = grid.coords()
    assert np.all(knapp_tile(x, 3) >= -1e-15)


def test_config_json_round_trip_and_rebuild():
    cfg = preset("thm1-2d")
    assert BuildConfig.from_json(cfg.to_json()) == cfg
    c = build(cfg, 2)
    again = build(config_of(c), 2)
    assert np.array_equal(c.V.values, again.V.values)


def test_unknown_preset():
    with pytest.raises(ConfigInvalid, match="available"):
        preset("nope")
