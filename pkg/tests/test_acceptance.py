"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line listing the measured values
against the pinned tolerances; the lines are repeated in the terminal
summary.  Tolerances are fixed here and must not be relaxed.
"""

import gc
import math
from dataclasses import replace

import numpy as np
import pytest
import sympy as sp

from embedded_eigs import cli
from embedded_eigs.constructions import (
    build,
    build_knapp,
    clifford_defect,
    dirac_data,
    preset,
    radial_zeros,
)
from embedded_eigs.grid import GridField, GridSpec, apply_multiplier, fft_values
from embedded_eigs.lattice import build_discrete_example, poisson_check
from embedded_eigs.storage import load_construction, save_construction
from embedded_eigs.symbols import SymbolSpec
from embedded_eigs.verify import (
    anti_hermiticity,
    chandrasekhar_first_term_error,
    first_term_error,
    radiality,
    real_lower_bound,
    realness,
    residual,
    scan,
    verify,
)

N_SCAN = [1, 2, 4, 8, 16]

# frozen from the reference run of the real-potential preset (n = 1)
GOLDEN_REAL_C = 1014.8343761106894
GOLDEN_REL_TOL = 1e-6


def thm1_oracle(d, N, n, k):
    """Closed-form V for T = |xi|^2 and u = exp(i k x_d) psi, where
    psi = (1 + h^2 |x'|^4 + h^2 x_d^2)^(-N/2): V = (Lap psi + 2 i k d_d psi) / psi."""
    xs = sp.symbols(f"x0:{d}", real=True)
    h = sp.Rational(1, n)
    psi = (1 + h**2 * sum(x**2 for x in xs[:-1]) ** 2 + h**2 * xs[-1] ** 2) ** (-sp.nsimplify(N) / 2)
    lap = sp.simplify(sum(sp.diff(psi, x, 2) for x in xs) / psi)
    dd = sp.simplify(sp.diff(psi, xs[-1]) / psi)
    f_lap = sp.lambdify(xs, lap, "numpy")
    f_dd = sp.lambdify(xs, dd, "numpy")
    return lambda x: f_lap(*x) + 2j * k * f_dd(*x)


def oracle_error(c):
    p = c.provenance["params"]
    carrier = np.asarray(c.carrier)
    assert np.allclose(carrier[:-1], 0.0)
    V_exact = thm1_oracle(c.spec.d, p["N"], c.scale.n, carrier[-1])
    x = c.spec.coords()
    region = c.taper.core(c.spec) & ~c.mask
    ref = np.broadcast_to(V_exact(x), c.spec.shape)
    return float(np.abs(c.V.values - ref)[region].max())


def oracle_config(cfg):
    """The preset in extended precision with twice the points along x_d.

    In double precision the ratio carries FFT round-off divided by psi,
    about 1e-7 at the guard level, so the 1e-8 comparison needs the
    longer mantissa; the extra x_d points remove the aliasing left at
    the edge of the d = 3 box.
    """
    g = cfg.grid
    grid = GridSpec.make(g.d, g.L, g.N[:-1] + (2 * g.N[-1],), g.offset) if g.d == 3 else g
    return replace(cfg, params={**cfg.params, "precision": "extended"}, grid=grid)


# --------------------------------------------------------------------------


def test_criterion_01_multiplier_engine(criterion):
    ch = criterion("criterion 1 multiplier engine")
    spec = GridSpec.make(2, 12.0, 128)
    x = spec.coords()
    r2 = x[0] ** 2 + x[1] ** 2
    g = np.broadcast_to(np.exp(-r2 / 2), spec.shape)
    lap = apply_multiplier(lambda xi: xi[0] ** 2 + xi[1] ** 2, GridField(spec, g.astype(complex), "g"))
    ch.add("gaussian identity", float(np.abs(lap.values - (2 - r2) * g).max()), "<=", 1e-9)

    rng = np.random.default_rng(0)
    f = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    back = fft_values(fft_values(f, 2), 2, inverse=True)
    ch.add("fft round trip", float(np.abs(back - f).max()), "<=", 1e-13)

    def a(xi):
        return 1.0 + xi[0] ** 2

    def b(xi):
        return np.cos(xi[1]) + 0.5 * xi[0]

    field = GridField(spec, g.astype(complex), "g")
    ab = apply_multiplier(a, apply_multiplier(b, field))
    direct = apply_multiplier(lambda xi: a(xi) * b(xi), field)
    ch.add("composition", float(np.abs(ab.values - direct.values).max()), "<=", 1e-12)
    ch.finish()


def test_criterion_02_thm1(criterion):
    ch = criterion("criterion 2 thm1 d=2,3")
    for name, d in (("thm1-2d", 2), ("thm1-3d", 3)):
        cfg = preset(name)
        c = build(cfg, 1)
        r = residual(c)
        ch.add(f"d={d} same-grid", r["same_grid"], "<=", 1e-12)
        ch.add(f"d={d} doubled", r["doubled"], "<=", 1e-6)
        ch.add(f"d={d} V oracle", oracle_error(build(oracle_config(cfg), 1)), "<=", 1e-8)
        qs = (3, 6, math.inf) if d == 3 else ()
        s = scan(cfg, N_SCAN, qs, builds={1: c})
        del c
        gc.collect()
        ch.add(f"d={d} uniformity", s["envelope"]["uniformity"], "<=", 3.0)
        for lq in s["lq"]:
            ch.add(f"slope q={lq['q']}", lq["relative_error"], "<=", 0.10)
    ch.finish()


def test_criterion_03_thm2_cylinder(criterion):
    ch = criterion("criterion 3 thm2 cylinder")
    cfg = preset("thm2-cylinder")
    c = build(cfg, 1)
    assert c.data["k"] == 1
    s = scan(cfg, N_SCAN, (3, 6, math.inf), builds={1: c})
    del c
    ch.add("uniformity", s["envelope"]["uniformity"], "<=", 3.0)
    for lq in s["lq"]:
        ch.add(f"slope q={lq['q']}", lq["relative_error"], "<=", 0.10)
    s5 = scan(preset("thm2-cylinder-m5"), N_SCAN)
    ch.add("m=5 uniformity", s5["envelope"]["uniformity"], "<=", 3.0)
    ch.finish()


def test_criterion_04_real(criterion):
    ch = criterion("criterion 4 real potential")
    c = build(preset("real-3d"), 1)
    ch.add("max |Im V|", realness(c), "<=", 1e-8)
    ch.add("lower bound", real_lower_bound(c), ">", 0.0)
    rep = verify(c, checks=("envelope",))
    C = rep.envelope["per_n"][1]["C"]
    ch.add("C finite", C, "<", math.inf)
    ch.add("C vs golden (rel)", abs(C - GOLDEN_REAL_C) / GOLDEN_REAL_C, "<=", GOLDEN_REL_TOL)
    ch.add("doubled", residual(c)["doubled"], "<=", 1e-5)
    ch.finish()


def test_criterion_05_radial(criterion):
    ch = criterion("criterion 5 radial (kappa = 1/6)")
    zeros = radial_zeros(3, 0.5, 10.0)
    ch.add("zeros vs k pi", max(abs(z - (k + 1) * math.pi) for k, z in enumerate(zeros)), "<=", 1e-10)
    cfg = preset("radial-3d")
    cfg = replace(cfg, params={**cfg.params, "kappa_rule": "dimensional"})
    s = scan(cfg, [1, 2, 4], (4,), each=radiality)
    ch.add("radiality", max(s["each"].values()), "<=", 1e-6)
    ch.add("uniformity", s["envelope"]["uniformity"], "<=", 3.0)
    ch.add("slope q=4", s["lq"][0]["relative_error"], "<=", 0.10)
    ch.note("slope", s["lq"][0]["slope"])
    ch.finish()


def test_criterion_06_chandrasekhar(criterion):
    ch = criterion("criterion 6 Chandrasekhar")

    def stats(c):
        return {"first": chandrasekhar_first_term_error(c), "lower": c.data["lower_bound"], "imag": realness(c)}

    s = scan(preset("chandrasekhar-2d"), [4, 8, 16], each=stats)
    ch.add("d=2 first term", max(v["first"] for v in s["each"].values()), "<=", 1e-8)
    ch.add("lower bound", min(v["lower"] for v in s["each"].values()), ">", 0.0)
    ch.add("uniformity", s["envelope"]["uniformity"], "<=", 3.0)
    ch.note("max |Im V|", max(v["imag"] for v in s["each"].values()))
    err3 = []
    for n in (4, 8, 16):
        a = 8.0 * math.sqrt(n / 4)
        err3.append(first_term_error(GridSpec.make(3, (a, a, 220.0 * n), (16, 16, 4096 * n)), 2.0, n))
    ch.add("d=3 first term", max(err3), "<=", 1e-8)
    ch.finish()


def test_criterion_07_dirac(criterion):
    ch = criterion("criterion 7 Dirac d=3")
    dd = dirac_data(3)
    ch.add("K", dd.K, "==", 4)
    ch.add("Clifford", clifford_defect(dd.alphas, dd.beta), "<=", 1e-14)
    M = dd.alphas[-1] + dd.beta
    ch.add("(alpha_d + beta) v", float(np.abs(M @ dd.v - math.sqrt(2) * dd.v).max()), "<=", 1e-14)
    c = build(preset("dirac-3d"), 1)
    ch.add("anti-hermiticity", anti_hermiticity(c), "<=", 1e-12)
    ch.add("FFT residual", residual(c, doubled=False)["same_grid"], "<=", 1e-8)
    ch.finish()


def test_criterion_08_knapp(criterion):
    ch = criterion("criterion 8 Knapp")
    ratios, errs = [], []
    for pts in (64, 128, 256):
        r = build_knapp(2.0, GridSpec.make(2, (16.0, 64.0), pts))
        ratios.append(r.c_upper / r.c_lower)
        errs.append(r.partition_error)
    ch.add("partition of unity", max(errs), "<=", 1e-10)
    ch.add("ratio finite", max(ratios), "<", math.inf)
    ch.add("ratio change", max(abs(b - a) / a for a, b in zip(ratios, ratios[1:])), "<=", 0.20)
    ch.finish()


def test_criterion_09_lattice(criterion):
    ch = criterion("criterion 9 lattice")
    T = SymbolSpec.discrete_cosine(2)
    gauss = poisson_check(lambda x: np.exp(-(x[0] ** 2 + x[1] ** 2) / 2), T, 2, 16)
    ch.add("Gaussian deviation", gauss["deviation"], "<=", 1e-8)
    ex = build_discrete_example(3, 3.0)
    ch.add("discrete residual", ex.residual, "<=", 1e-6)
    devs = [poisson_check(lambda x: (1 + x[0] ** 2 + x[1] ** 2) ** -4.5, T, 2, M)["deviation"] for M in (8, 16, 32)]
    ch.add("decreasing in M", all(b < a for a, b in zip(devs, devs[1:])), "==", True)
    ch.finish()


def test_criterion_10_determinism(criterion, tmp_path):
    ch = criterion("criterion 10 determinism")
    cfg = preset("thm1-2d")
    dumps = [verify(build(cfg, 1), checks=("residual", "envelope", "scan", "symmetry"), config=cfg,
                    n_list=[1, 2, 4], q_list=(3, math.inf)).dumps() for _ in range(2)]
    ch.add("repeated verify identical", dumps[0] == dumps[1], "==", True)
    c = build(cfg, 1)
    save_construction(c, tmp_path / "c")
    stored = verify(load_construction(tmp_path / "c")).dumps()
    ch.add("round trip identical", stored == verify(c).dumps(), "==", True)
    runs = []
    for k in range(2):
        out = tmp_path / f"scan{k}"
        assert cli.main(["scan", "--preset", "thm1-2d", "--n", "1,2,4", "--q", "3,inf", "--out", str(out)]) == 0
        runs.append((out / "report.json").read_bytes())
    ch.add("CLI report.json identical", runs[0] == runs[1], "==", True)
    ch.finish()


@pytest.mark.parametrize("rule", ["vanishing"])
def test_radial_vanishing_kappa_variant(criterion, rule):
    """Companion to criterion 5 with kappa = -1/2, the value for which the
    leading correction cancels; the envelope is then uniform."""
    ch = criterion("radial variant kappa = -1/2 (not an acceptance criterion)")
    cfg = preset("radial-3d")
    cfg = replace(cfg, params={**cfg.params, "kappa_rule": rule})
    s = scan(cfg, [1, 2, 4], (4,), each=radiality)
    ch.add("radiality", max(s["each"].values()), "<=", 1e-6)
    ch.add("uniformity", s["envelope"]["uniformity"], "<=", 3.0)
    ch.note("slope q=4 rel. error", s["lq"][0]["relative_error"])
    ch.finish()
