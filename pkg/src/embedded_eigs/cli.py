"""Command line front-end.

Subcommands: ``construct``, ``verify``, ``scan``, ``lattice``, ``knapp``
and ``report``.  Every option can also come from a JSON file given with
``--config``; command line flags override it.  Exit codes: 0 when every
required check passes, 1 when one fails, 2 for invalid input, 3 when a
numerical guard stops the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import symbols as sy
from .constructions import BuildConfig, build, build_knapp, preset
from .errors import ConfigInvalid, EmbeddedEigError, ThresholdViolated
from .grid import GridSpec, export_csv
from .lattice import build_discrete_example, poisson_check
from .storage import load_construction, save_construction
from .verify import THRESHOLDS, verify

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3

THEOREMS = ("thm1", "thm2", "real", "radial", "chandrasekhar", "dirac")

# default configuration per (theorem, dimension)
DEFAULT_PRESET = {
    ("thm1", 2): "thm1-2d",
    ("thm1", 3): "thm1-3d",
    ("thm2", 3): "thm2-cylinder",
    ("real", 3): "real-3d",
    ("radial", 3): "radial-3d",
    ("chandrasekhar", 2): "chandrasekhar-2d",
    ("dirac", 2): "dirac-2d",
    ("dirac", 3): "dirac-3d",
}


def builtin_symbol(name):
    """Named symbols: laplacian<d>d, cylinder3d, discrete<d>d."""
    stem = Path(name).stem
    for d in (1, 2, 3, 4):
        if stem == f"laplacian{d}d":
            return sy.SymbolSpec.laplacian(d)
        if stem == f"discrete{d}d":
            return sy.SymbolSpec.discrete_cosine(d)
    if stem == "cylinder3d":
        return sy.SymbolSpec.polynomial(3, {(2, 0, 0): 1.0, (0, 2, 0): 1.0})
    return None


def load_symbol(ref):
    """A symbol from a JSON object, a JSON file or a builtin name."""
    if isinstance(ref, dict):
        return sy.SymbolSpec.from_json(ref)
    path = Path(ref)
    if path.is_file():
        try:
            return sy.SymbolSpec.from_json(json.loads(path.read_text()))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigInvalid(f"{path}: not a symbol description ({exc})") from exc
    spec = builtin_symbol(str(ref))
    if spec is None:
        raise ConfigInvalid(f"symbol {ref!r} is neither a file nor a builtin name")
    return spec


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigInvalid(f"expected a comma separated list of integers, got {text!r}") from exc


def _q_list(text):
    if isinstance(text, (list, tuple)):
        items = text
    else:
        items = [v for v in str(text).split(",") if v.strip()]
    out = []
    for v in items:
        if str(v).strip().lower() in ("inf", "infinity"):
            out.append(math.inf)
            continue
        try:
            out.append(float(v))
        except ValueError as exc:
            raise ConfigInvalid(f"bad exponent q = {v!r}") from exc
    return out


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


# --------------------------------------------------------------------------
# run configuration


def merge_config(args):
    """Options from ``--config`` overridden by explicit flags."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise ConfigInvalid(f"config file {args.config} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config file {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigInvalid("config file must hold a JSON object")
        if cfg.get("command") not in (None, args.command):
            raise ConfigInvalid(f"config is for {cfg['command']!r}, not {args.command!r}")
    for key, value in vars(args).items():
        if key in ("config", "func") or value is None:
            continue
        cfg[key.replace("-", "_")] = value
    return cfg


def _grid_from(cfg, d, base):
    g = cfg.get("grid") or {}
    L = cfg.get("L", g.get("L"))
    Np = cfg.get("N_pts", g.get("N_pts"))
    off = cfg.get("offset", g.get("offset"))
    if L is None and Np is None and off is None:
        return base
    if base is None and (L is None or Np is None):
        raise ConfigInvalid("grid needs both L and N_pts")
    L = _float_list(L) if L is not None else list(base.L)
    Np = _int_list(Np) if Np is not None else list(base.N)
    off = _float_list(off) if off is not None else list(base.offset)
    L, Np, off = [v * d if len(v) == 1 else v for v in (L, Np, off)]
    return GridSpec.make(d, tuple(L), tuple(Np), tuple(off))


def build_config(cfg):
    """BuildConfig from a merged run configuration."""
    if cfg.get("preset"):
        base = preset(cfg["preset"])
        theorem = cfg.get("theorem") or base.theorem
        if theorem != base.theorem:
            raise ConfigInvalid(f"preset {cfg['preset']!r} is a {base.theorem} build, not {theorem}")
    else:
        theorem = cfg.get("theorem")
        if theorem is None:
            raise ConfigInvalid("give --theorem or --preset")
        if theorem not in THEOREMS:
            raise ConfigInvalid(f"unknown theorem {theorem!r}; choose from {', '.join(THEOREMS)}")
        base = None
    params = dict(base.params) if base else {}
    if cfg.get("symbol") is not None:
        if theorem in ("chandrasekhar", "dirac"):
            raise ConfigInvalid(f"{theorem} builds have a fixed symbol")
        params["symbol"] = load_symbol(cfg["symbol"]).to_json()
    d = _dimension(theorem, params, cfg, base)
    if base is None:
        name = DEFAULT_PRESET.get((theorem, d))
        if name is not None:
            base = preset(name)
            params = {**base.params, **params}
    if theorem == "dirac":
        params["d"] = d
    if theorem not in ("chandrasekhar", "dirac") and "symbol" not in params:
        raise ConfigInvalid(f"{theorem} builds need --symbol")
    for key, name in (("lambda", "lam"), ("N", "N"), ("c", "c"), ("m", "m"), ("r0", "r0"),
                      ("flat", "flat"), ("precision", "precision"), ("kappa_rule", "kappa_rule")):
        if cfg.get(key) is not None:
            params[name] = cfg[key]
    if cfg.get("hint") is not None:
        params["hint"] = _float_list(cfg["hint"])
    elif base is None or params.get("hint") is not None and len(params["hint"]) != d:
        params["hint"] = [0.0] * (d - 1) + [1.0]
    if "lam" not in params:
        raise ConfigInvalid("--lambda is required")
    if "N" not in params:
        raise ConfigInvalid("--N (decay exponent) is required")
    grid = _grid_from(cfg, d, base.grid if base else None)
    if grid is None:
        raise ConfigInvalid("no default grid for this build; give --L and --N-pts")
    scaling = cfg.get("scaling") or (base.scaling if base else "anisotropic")
    out = BuildConfig(theorem, params, grid, scaling, base.n_ref if base else 1, base.exponent if base else 0.5)
    validate(out)
    return out


def _dimension(theorem, params, cfg, base):
    if "symbol" in params:
        return sy.SymbolSpec.from_json(params["symbol"]).d
    if cfg.get("d") is not None:
        return int(cfg["d"])
    if base is not None:
        return base.grid.d
    return 2 if theorem == "chandrasekhar" else 3


def validate(config):
    """Parameter constraints of the chosen builder, checked before any
    grid is allocated."""
    p, d, t = config.params, config.grid.d, config.theorem
    N = float(p["N"])
    if t in ("thm1", "thm2", "chandrasekhar", "dirac") and not N > (d + 1) / 4:
        raise ConfigInvalid(f"N must exceed (d+1)/4 = {(d + 1) / 4:g}")
    if t in ("real", "radial") and not N > d / 2:
        raise ConfigInvalid(f"N must exceed d/2 = {d / 2:g}")
    if t == "real":
        if not 0 < float(p.get("c", 0.3)) < math.pi / 10:
            raise ConfigInvalid("cutoff width c must satisfy 0 < c < pi/10")
        m = int(p.get("m", 1))
        if m < 1 or m % 2 == 0:
            raise ConfigInvalid("m must be an odd positive integer")
    if t == "chandrasekhar" and not float(p["lam"]) > 0:
        raise ConfigInvalid("lambda must be positive")
    if t == "dirac" and not float(p["lam"]) > 1:
        raise ConfigInvalid("Dirac eigenvalue must exceed the mass 1")
    if "symbol" in p and sy.SymbolSpec.from_json(p["symbol"]).d != d:
        raise ConfigInvalid("grid dimension differs from the symbol dimension")


def check_q(config, q_list):
    """Reject exponents at or below the integrability threshold."""
    d, t = config.grid.d, config.theorem
    if t == "thm2":
        return  # threshold depends on the detected k; checked after the first build
    thr = float(d) if t == "radial" else (d + 1) / 2
    for q in q_list:
        if not q > thr:
            raise ThresholdViolated(f"q = {q:g} must exceed {thr:g} for {t}")


# --------------------------------------------------------------------------
# output helpers


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
    Path(path).write_text(buf.getvalue())


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "embedded-eigs"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def plot_envelope(path, per_n, title):
    plt = _pyplot()
    ns = sorted(int(n) for n in per_n)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ns, [per_n[n]["C"] if n in per_n else per_n[str(n)]["C"] for n in ns], "o-")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("n")
    ax.set_ylabel("C_n")
    ax.set_title(title)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_lq(path, scans, title):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for s in scans:
        ns = sorted(int(n) for n in s["norms"])
        x = np.log(ns)
        y = np.log([s["norms"][n] for n in ns])
        line, = ax.plot(x, y, "o-", label=f"q = {s['q']}, fitted {s['slope']:.3f}")
        # theoretical slope through the last point
        ax.plot(x, y[-1] + s["theoretical_slope"] * (x - x[-1]), "--", color=line.get_color(),
                label=f"slope {s['theoretical_slope']:.3f}")
    ax.set_xlabel("log n")
    ax.set_ylabel("log ||V_n||_q")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def _print_criteria(criteria, stream=None):
    stream = stream or sys.stdout
    for c in criteria:
        status = "pass" if c["passed"] else ("FAIL" if c["required"] else "fail (reported only)")
        print(f"  {c['name']:<24} {c['value']!s:<24} {c['op']} {('inf' if c['threshold'] is None else c['threshold'])!s:<10} {status}", file=stream)


# --------------------------------------------------------------------------
# subcommands


def _out_dir(cfg, default):
    out = Path(cfg.get("out") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_construct(cfg):
    config = build_config(cfg)
    n = int(cfg.get("n") or 1)
    c = build(config, n)
    out = _out_dir(cfg, "construction")
    save_construction(c, out, extra={"run": {"command": "construct", "n": n, "build": config.to_json()}})
    # slices along the last axis; matrix-valued fields are skipped
    for name, f in (("V", c.V), ("u", c.envelope)):
        if f.values.ndim == c.spec.d:
            export_csv(out / f"{name}.csv", f, axes=(c.spec.d - 1,))
    print(f"{c.theorem} construction, n = {n}, grid {c.spec.shape}, written to {out}")
    return EXIT_OK


def _checks(cfg, default):
    raw = cfg.get("checks")
    if raw is None:
        return default
    items = raw if isinstance(raw, (list, tuple)) else [v.strip() for v in str(raw).split(",") if v.strip()]
    known = {"residual", "envelope", "symmetry", "realness", "scan"}
    bad = [v for v in items if v not in known]
    if bad:
        raise ConfigInvalid(f"unknown checks {bad}; choose from {sorted(known)}")
    return tuple(items)


def _thresholds(cfg):
    th = cfg.get("thresholds") or {}
    bad = [k for k in th if k not in THRESHOLDS]
    if bad:
        raise ConfigInvalid(f"unknown thresholds {bad}")
    return th


def _finish_report(rep, out, title):
    obj = rep.to_json()
    (out / "report.json").write_text(rep.dumps() + "\n")
    write_csv(out / "report.csv", rep.csv_rows())
    write_csv(out / "criteria.csv", [["name", "value", "op", "threshold", "required", "passed"]]
              + [[c["name"], c["value"], c["op"], c["threshold"], c["required"], c["passed"]]
                 for c in obj["criteria"]])
    if obj["envelope"] and len(obj["envelope"]["per_n"]) > 1:
        plot_envelope(out / "envelope.svg", {int(k): v for k, v in obj["envelope"]["per_n"].items()}, title)
    if rep.lq_scan:
        plot_lq(out / "lq_scan.svg", rep.lq_scan, title)
    print(f"{title}: {'pass' if rep.passed else 'FAIL'}")
    _print_criteria(obj["criteria"])
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_verify(cfg):
    src = cfg.get("in_dir")
    if not src:
        raise ConfigInvalid("verify needs --in <construction directory>")
    c = load_construction(src)
    checks = _checks(cfg, ("residual", "envelope", "symmetry"))
    rep = verify(c, checks=checks, thresholds=_thresholds(cfg))
    out = _out_dir(cfg, src)
    return _finish_report(rep, out, f"{c.theorem} n={c.scale.n}")


def cmd_scan(cfg):
    config = build_config(cfg)
    n_list = _int_list(cfg.get("n_list") or "1,2,4,8,16")
    if len(n_list) < 2:
        raise ConfigInvalid("a scan needs at least two values of n")
    q_list = _q_list(cfg.get("q") or [])
    check_q(config, q_list)
    checks = _checks(cfg, ("envelope", "scan"))
    c = build(config, n_list[0])
    rep = verify(c, checks=checks, config=config, n_list=n_list, q_list=q_list, thresholds=_thresholds(cfg))
    out = _out_dir(cfg, "scan")
    write_json(out / "manifest.json", {"command": "scan", "build": config.to_json(), "n_list": n_list,
                                       "q_list": ["inf" if q == math.inf else q for q in q_list],
                                       "checks": list(checks),
                                       "files": ["report.json", "report.csv", "criteria.csv", "envelope.svg"]
                                       + (["lq_scan.svg"] if q_list else [])})
    return _finish_report(rep, out, f"{config.theorem} scan")


def cmd_lattice(cfg):
    d = int(cfg.get("d") or 3)
    lam = float(cfg.get("lambda") if cfg.get("lambda") is not None else 3.0)
    M = int(cfg.get("M") or 24)
    m_list = _int_list(cfg.get("m_list") or "8,16,32")
    hint = _float_list(cfg["hint"]) if cfg.get("hint") is not None else None
    out = _out_dir(cfg, "lattice")
    T = sy.SymbolSpec.discrete_cosine(2)

    def gauss(x):
        return np.exp(-sum(xj * xj for xj in x) / 2)

    def trend(x):
        return (1.0 + sum(xj * xj for xj in x)) ** -4.5

    gaussian = poisson_check(gauss, T, 2, 16)
    series = [poisson_check(trend, T, 2, Mi) for Mi in m_list]
    ex = build_discrete_example(d, lam, M=M, hint=hint)
    ex.u.save(out / "u.gf")
    ex.V.save(out / "V.gf")
    _lattice_slice_csv(out / "V.csv", ex.V)
    devs = [s["deviation"] for s in series]
    criteria = [
        {"name": "poisson_gaussian", "value": gaussian["deviation"], "op": "<=", "threshold": 1e-8},
        {"name": "discrete_residual", "value": ex.residual, "op": "<=", "threshold": 1e-6},
        {"name": "deviation_decreasing", "value": bool(all(b < a for a, b in zip(devs, devs[1:]))),
         "op": "==", "threshold": True},
    ]
    for c in criteria:
        c["required"] = True
        c["passed"] = bool(c["value"] == c["threshold"]) if c["op"] == "==" else bool(c["value"] <= c["threshold"])
    report = {"gaussian": gaussian, "trend": series, "example": ex.to_json(), "criteria": criteria,
              "passed": all(c["passed"] for c in criteria)}
    write_json(out / "report.json", report)
    write_csv(out / "poisson.csv", [["M", "deviation", "relative"]]
              + [[s["M"], s["deviation"], s["relative"]] for s in series])
    write_json(out / "manifest.json", {"command": "lattice", "d": d, "lambda": lam, "M": M, "m_list": m_list,
                                       "hint": hint, "files": ["report.json", "poisson.csv", "u.gf", "V.gf", "V.csv"]})
    print(f"lattice: {'pass' if report['passed'] else 'FAIL'}")
    _print_criteria(criteria)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def _lattice_slice_csv(path, f):
    """Values along the first axis through the origin."""
    idx = [slice(None)] + [f.M] * (f.d - 1)
    v = f.values[tuple(idx)]
    write_csv(path, [["n0", "re", "im"]]
              + [[int(k), float(z.real), float(z.imag)] for k, z in zip(range(-f.M, f.M + 1), v)])


def cmd_knapp(cfg):
    d = int(cfg.get("d") or 2)
    N = float(cfg.get("N") or 2.0)
    L = _float_list(cfg.get("L") or ([16.0] * (d - 1) + [64.0]))
    pts = _int_list(cfg.get("n_list") or "64,128,256")
    if len(L) == 1:
        L = L * d
    rows, results = [["points", "c_lower", "c_upper", "ratio", "partition_error", "j_max"]], []
    for p in pts:
        r = build_knapp(N, GridSpec.make(d, tuple(L), p))
        ratio = r.c_upper / r.c_lower
        results.append({"points": p, "c_lower": r.c_lower, "c_upper": r.c_upper, "ratio": ratio,
                        "partition_error": r.partition_error, "j_max": r.j_max})
        rows.append([p, r.c_lower, r.c_upper, ratio, r.partition_error, r.j_max])
    ratios = [r["ratio"] for r in results]
    change = max(abs(b - a) / a for a, b in zip(ratios, ratios[1:])) if len(ratios) > 1 else 0.0
    criteria = [
        {"name": "partition_of_unity", "value": max(r["partition_error"] for r in results), "op": "<=",
         "threshold": 1e-10},
        {"name": "ratio_change", "value": change, "op": "<=", "threshold": 0.2},
    ]
    for c in criteria:
        c["required"] = True
        c["passed"] = bool(math.isfinite(c["value"]) and c["value"] <= c["threshold"])
    out = _out_dir(cfg, "knapp")
    report = {"d": d, "N": N, "L": L, "refinements": results, "criteria": criteria,
              "passed": all(c["passed"] for c in criteria)}
    write_json(out / "report.json", report)
    write_csv(out / "knapp.csv", rows)
    write_json(out / "manifest.json", {"command": "knapp", "d": d, "N": N, "L": L, "points": pts,
                                       "files": ["report.json", "knapp.csv"]})
    print(f"knapp: {'pass' if report['passed'] else 'FAIL'}")
    _print_criteria(criteria)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_report(cfg):
    roots = cfg.get("in_dir")
    if not roots:
        raise ConfigInvalid("report needs --in <directory> (repeatable)")
    roots = roots if isinstance(roots, list) else [roots]
    found = sorted({p for r in roots for p in Path(r).rglob("report.json")})
    if not found:
        raise ConfigInvalid("no report.json under the given directories")
    rows = [["report", "name", "value", "threshold", "required", "passed"]]
    summary = []
    for path in found:
        try:
            rep = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from exc
        summary.append({"report": str(path), "passed": bool(rep.get("passed")),
                        "theorem": rep.get("theorem")})
        for c in rep.get("criteria", []):
            rows.append([str(path), c["name"], c["value"], c["threshold"], c["required"], c["passed"]])
    out = _out_dir(cfg, ".")
    ok = all(s["passed"] for s in summary)
    write_json(out / "summary.json", {"reports": summary, "passed": ok})
    write_csv(out / "summary.csv", rows)
    for s in summary:
        print(f"{'pass' if s['passed'] else 'FAIL'}  {s['report']}")
    return EXIT_OK if ok else EXIT_FAILED


# --------------------------------------------------------------------------


def _build_flags(p):
    p.add_argument("--preset", help="named configuration")
    p.add_argument("--theorem", choices=THEOREMS)
    p.add_argument("--symbol", help="symbol JSON file or builtin name (laplacian3d, cylinder3d, ...)")
    p.add_argument("--lambda", dest="lambda", type=float, help="energy level")
    p.add_argument("--N", dest="N", type=float, help="decay exponent")
    p.add_argument("--d", type=int, help="dimension when no symbol fixes it")
    p.add_argument("--hint", help="search direction for the Fermi point, e.g. 0,0,1")
    p.add_argument("--L", help="box half-widths, one value or one per axis")
    p.add_argument("--N-pts", dest="N_pts", help="points per axis (powers of two)")
    p.add_argument("--offset", help="grid offset in cells")
    p.add_argument("--scaling", choices=("fixed", "anisotropic", "oscillatory", "power"))
    p.add_argument("--c", type=float, help="cutoff width (real and radial builds)")
    p.add_argument("--m", type=int, help="odd order (real builds)")
    p.add_argument("--r0", type=float, help="sphere radius (radial builds)")
    p.add_argument("--flat", type=int, help="exponent of the flat directions (thm2)")
    p.add_argument("--precision", choices=("double", "extended"))
    p.add_argument("--kappa-rule", dest="kappa_rule", choices=("vanishing", "dimensional"))


def make_parser():
    ap = argparse.ArgumentParser(prog="embedded-eigs", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="build u and V and write them to a directory")
    p.add_argument("--config")
    _build_flags(p)
    p.add_argument("--n", type=int, help="scale parameter")
    p.add_argument("--out")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="check a stored construction")
    p.add_argument("--config")
    p.add_argument("--in", dest="in_dir")
    p.add_argument("--checks", help="comma separated: residual, envelope, symmetry, realness")
    p.add_argument("--out", help="report directory (default: the input directory)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scan", help="envelope uniformity and L^q slopes over n")
    p.add_argument("--config")
    _build_flags(p)
    p.add_argument("--n", dest="n_list", help="values of n, e.g. 1,2,4,8,16")
    p.add_argument("--q", help="exponents, e.g. 3,6,inf")
    p.add_argument("--checks", help="comma separated subset of residual, envelope, scan, symmetry")
    p.add_argument("--out")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("lattice", help="Poisson summation check and the discrete example")
    p.add_argument("--config")
    p.add_argument("--d", type=int)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--M", type=int, help="box radius of the example")
    p.add_argument("--M-list", dest="m_list", help="box radii of the decay check")
    p.add_argument("--hint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("knapp", help="partition of unity and comparability under refinement")
    p.add_argument("--config")
    p.add_argument("--d", type=int)
    p.add_argument("--N", dest="N", type=float)
    p.add_argument("--L")
    p.add_argument("--points", dest="n_list", help="points per axis for each refinement")
    p.add_argument("--out")
    p.set_defaults(func=cmd_knapp)

    p = sub.add_parser("report", help="collect report.json files into one summary")
    p.add_argument("--config")
    p.add_argument("--in", dest="in_dir", action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        cfg = merge_config(args)
        return args.func(cfg)
    except EmbeddedEigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError:
        print("error: out of memory; use a smaller grid", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
