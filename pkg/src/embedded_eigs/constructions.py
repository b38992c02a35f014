"""Eigenfunction / potential pairs for T(D) + V, one builder per family.

Every builder works in a computational frame: grid coordinates are
``x_grid = F x`` for a matrix F (rotation, rescaling, or the linear
bijection of the real-potential construction), so that the symbol on the
grid is ``T(F^T xi)``.  Plane-wave factors are not sampled; the
Construction stores the slowly varying envelope together with a carrier
frequency, and multipliers act on the envelope through the shifted
symbol ``T(F^T (carrier + xi))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from . import symbols as sy
from .errors import (
    BoxTooSmall,
    CliffordViolation,
    ConditionFailed,
    ConfigInvalid,
    CoverGap,
    CurvatureMismatch,
    CutoffOverlap,
    LowerBoundFailed,
    NonCompact,
    ZeroGapTooSmall,
)
from .grid import GridField, GridSpec, Taper, apply_multiplier, pointwise_ratio
from .weights import ScaleParam, WeightSpec, rho, scale_point

_RD = {"double": np.float64, "extended": np.longdouble}

GUARD_POSITIVE = 1e-6
GUARD_OSCILLATORY = 1e-3


@dataclass(frozen=True)
class RegularizationParams:
    N: float
    m: int
    c: float
    kappa: float
    chi: str = "gaussian"

    def to_json(self):
        return {"N": self.N, "m": self.m, "c": self.c, "kappa": self.kappa, "chi": self.chi}


@dataclass(frozen=True)
class RadialData:
    r0: float
    zeros: tuple
    delta: float
    f_at_zeros: tuple
    sphere_radius: float
    trusted_radius: float = math.inf
    trust_width: float = 0.0

    def to_json(self):
        return {
            "r0": self.r0,
            "zeros": list(self.zeros),
            "delta": self.delta,
            "f_at_zeros": list(self.f_at_zeros),
            "sphere_radius": self.sphere_radius,
            "trusted_radius": self.trusted_radius,
            "trust_width": self.trust_width,
        }


@dataclass(frozen=True, eq=False)
class DiracData:
    d: int
    K: int
    alphas: np.ndarray
    beta: np.ndarray
    v: np.ndarray
    momentum: float

    def to_json(self):
        return {"d": self.d, "K": self.K, "momentum": self.momentum, "v": [[z.real, z.imag] for z in self.v]}


@dataclass(eq=False)
class Construction:
    """An eigenpair (u, V) sampled on a grid.

    ``envelope`` is u with the plane-wave carrier removed; ``reference``
    is a positive scale used by the division guards.  ``mask`` marks
    points where V is not trusted (outside the taper core or rejected by
    a guard); V is zero there.
    """

    theorem: str
    envelope: GridField
    V: GridField
    lam: float
    scale: ScaleParam
    symbol: object
    weight: WeightSpec | None
    mask: np.ndarray
    carrier: np.ndarray
    frame: np.ndarray
    reference: GridField
    taper: Taper
    provenance: dict
    reg: RegularizationParams | None = None
    potential_kind: str = "ratio"
    data: dict = field(default_factory=dict)

    @property
    def spec(self):
        return self.envelope.spec

    @property
    def u(self):
        phase = carrier_phase(self.spec, self.carrier)
        v = self.envelope.values
        if v.ndim > self.spec.d:
            phase = phase.reshape(phase.shape + (1,) * (v.ndim - self.spec.d))
        return GridField(self.spec, phase * v, "u")

    def symbol_callable(self):
        """a(xi) = T(F^T (carrier + xi)) acting on the envelope."""
        return envelope_symbol(self.symbol, self.frame, self.carrier, self.data.get("dirac"))


def carrier_phase(spec, carrier):
    x = spec.coords()
    ph = 0.0
    for c, xj in zip(carrier, x):
        if c:
            ph = ph + c * xj
    return np.broadcast_to(np.exp(1j * ph), spec.shape)


def envelope_symbol(symbol, frame, carrier, dirac=None):
    F = np.asarray(frame, dtype=float)
    carrier = np.asarray(carrier, dtype=float)
    d = len(carrier)

    def zeta(xi):
        return [xi[j] + xi[j].dtype.type(carrier[j]) if carrier[j] else xi[j] for j in range(d)]

    if dirac is not None:
        def a(xi):
            z = zeta(xi)
            out = dirac.beta
            for j in range(d):
                out = out + z[j][..., None, None] * dirac.alphas[j]
            return out
        return a

    def a(xi):
        z = zeta(xi)
        if np.allclose(F, np.diag(np.diag(F))):
            phys = [F[j, j] * z[j] if F[j, j] != 1 else z[j] for j in range(d)]
        else:
            phys = [sum(F[j, i] * z[j] for j in range(d) if F[j, i] != 0) for i in range(d)]
            phys = [p if not np.isscalar(p) else np.zeros(1) for p in phys]
        return sy.evaluate(symbol, phys)
    return a


# --------------------------------------------------------------------------
# helpers


def _check_tail(profile, spec, tol):
    """Relative size of ``profile`` at the box faces along each axis."""
    d = spec.d
    zero = [np.zeros(1) for _ in range(d)]
    p0 = float(np.abs(profile(zero)).max())
    for j in range(d):
        pt = [np.zeros(1) for _ in range(d)]
        pt[j] = np.array([spec.L[j]])
        pj = float(np.abs(profile(pt)).max())
        if pj > tol * p0:
            raise BoxTooSmall(
                f"profile at L e_{j + 1} is {pj / p0:.2e} of its central value (limit {tol:g})"
            )


def _taper(grid, taper, margin=0.0):
    return taper if taper is not None else Taper.for_grid(grid, margin=margin)


def _window(grid, taper, precision="double"):
    return taper.window(grid, _RD[precision])


def _as_field(spec, values, label):
    return GridField(spec, np.asarray(values), label)


def _to_double(v):
    return np.asarray(v, dtype=np.complex128 if np.iscomplexobj(v) else np.float64)


def _ratio_potential(spec, num, den, ref, core, guard, guard_pos):
    """V = -num/den with positivity and oscillation guards."""
    domain = core & (np.abs(ref) > guard_pos * np.abs(ref[core]).max())
    r = pointwise_ratio(
        GridField(spec, num, "num"), den, guard, reference=ref, domain=domain
    )
    return -r.ratio.values, r.mask


def _frame_gamma_check(symbol, F, eta, lam, gamma):
    """Taylor support of T(F^T(F eta + .)) - lam must satisfy the gamma condition."""
    if symbol.kind not in ("polynomial", "radial_polynomial"):
        return None
    p = sy.substitute_affine(symbol.poly(), np.asarray(F).T, eta)
    scale = max(abs(c) for c in p.values())
    zero = (0,) * symbol.d
    p[zero] = p.get(zero, 0.0) - lam
    entries = {a: c for a, c in p.items() if abs(c) > 1e-10 * scale}
    ts = sy.TaylorSupport(np.asarray(eta), entries, sy.newton_vertices(entries), 99, 1e-10 * scale)
    res = sy.check_gamma_condition(ts, gamma)
    if not res.holds:
        raise ConditionFailed(f"Taylor support violates the gamma condition (margin {res.margin})")
    return res


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def gaussian_cutoff(t, c):
    """Gaussian cutoff exp(-t^2 / (2 c^2)); chi(0) = 1 and chi vanishes to
    all orders at 0 relative to 1.  Its value at distance D is
    exp(-D^2 / (2 c^2))."""
    return np.exp(-0.5 * (np.asarray(t) / c) ** 2)


# --------------------------------------------------------------------------
# Theorems 1 and 2


def build_thm1(symbol, lam, fermi, N, n, grid, *, weight=None, taper=None, precision="double",
               tail_tol=1e-6, guard=GUARD_POSITIVE, theorem="thm1", flat=3, k=None):
    """Plane wave times rho(h x)^(-N) with the ratio potential.

    ``theorem="thm2"`` uses the curvature-adapted frame and the weight
    with k curved directions (gamma 1/2) and d-1-k flat ones (gamma
    1/flat).
    """
    d = symbol.d
    if grid.d != d:
        raise ConfigInvalid("grid dimension differs from the symbol dimension")
    if not N > (d + 1) / 4:
        raise ConfigInvalid(f"N must exceed (d+1)/4 = {(d + 1) / 4:g}")
    if theorem == "thm2":
        if k is None:
            k = fermi.k_nonvanishing
        if k != fermi.k_nonvanishing:
            raise CurvatureMismatch(f"requested k={k}, curvature data gives k={fermi.k_nonvanishing}")
        if k >= d - 1:
            raise CurvatureMismatch("all curvatures nonvanishing; use the thm1 builder")
        weight = weight or WeightSpec.thm2(d, k, flat=flat)
        F = fermi.frame
    else:
        weight = weight or WeightSpec.thm1(d)
        F = fermi.rotation
    gamma = weight.gamma_float
    _frame_gamma_check(symbol, F, fermi.eta, lam, weight.gamma)
    carrier = F @ fermi.eta
    scale = ScaleParam(n)
    taper = _taper(grid, taper)
    rd = _RD[precision]

    def profile(x):
        return rho(weight, scale_point(rd(scale.h), gamma, x)) ** rd(-N)

    _check_tail(profile, grid, tail_tol)
    x = grid.coords(rd)
    psi = np.broadcast_to(profile(x), grid.shape)
    env = _window(grid, taper, precision) * psi
    a = envelope_symbol(symbol, F, carrier)
    num = apply_multiplier(lambda xi: a(xi) - lam, GridField(grid, env, "psi"), precision=precision)
    core = taper.core(grid)
    V, mask = _ratio_potential(grid, num.values, env, env, core, guard, 0.0)
    mask = mask | ~(np.abs(env) > GUARD_POSITIVE * np.abs(env).max())
    V = np.where(mask, 0, V)
    params = {
        "symbol": symbol.to_json(), "lam": lam, "eta": fermi.eta.tolist(), "N": N, "n": n,
        "weight": weight.to_json(), "precision": precision, "tail_tol": tail_tol, "guard": guard,
        "flat": flat, "k": k,
    }
    return Construction(
        theorem=theorem,
        envelope=_as_field(grid, _to_double(env), "u envelope"),
        V=_as_field(grid, _to_double(V).astype(complex), "V"),
        lam=float(lam), scale=scale, symbol=symbol, weight=weight, mask=mask,
        carrier=np.asarray(carrier, dtype=float), frame=np.asarray(F, dtype=float),
        reference=_as_field(grid, _to_double(env), "reference"), taper=taper,
        provenance={"builder": theorem, "params": params, "grid": grid.to_json(), "taper": taper.to_json()},
        data={"fermi": fermi.to_json(), "k": weight.k if theorem == "thm2" else d - 1, "flat": flat},
    )


def build_thm2(symbol, lam, fermi, N, n, grid, k=None, flat=3, **kw):
    return build_thm1(symbol, lam, fermi, N, n, grid, theorem="thm2", k=k, flat=flat, **kw)


# --------------------------------------------------------------------------
# real-valued potentials


def build_real(symbol, lam, m, N, c, grid, *, hint=None, taper=None, precision="double",
               tail_tol=1e-6, guard=GUARD_OSCILLATORY):
    """sin(x_1)(psi - kappa w) with the plane corrections w.

    The grid's first axis must put the planes x_1 = k pi on grid points
    of its unshifted version: L_1 = q pi and N_1 divisible by 2q.  The
    offset along x_1 is forced to one half so that u never vanishes on
    the sampled points.
    """
    d = symbol.d
    if grid.d != d:
        raise ConfigInvalid("grid dimension differs from the symbol dimension")
    if not N > d / 2:
        raise ConfigInvalid(f"N must exceed d/2 = {d / 2:g}")
    if m < 1 or m % 2 == 0:
        raise ConfigInvalid("m must be an odd positive integer")
    if c >= math.pi / 4:
        raise CutoffOverlap("cutoff width must stay below pi/4 so the plane corrections are disjoint")
    if not 0 < c < math.pi / 10:
        raise ConfigInvalid("cutoff width c must satisfy 0 < c < pi/10")
    fermi = sy.find_fermi_point(symbol, lam, np.eye(d)[0] if hint is None else hint)
    eta = fermi.eta
    if not sy.check_real_potential_condition(symbol, eta, m):
        raise ConditionFailed(f"odd Taylor coefficients with alpha_1 = {m} other than m e_1")
    q_poly, A = sy.normalized_real_poly(symbol, eta)
    Tt = sy.SymbolSpec.polynomial(d, q_poly)
    kappa = 1.0 / ((-1) ** ((m + 1) // 2) * sy.derivative_e1(symbol, eta, m))
    g1 = np.real(sy.gradient(Tt, np.eye(d)[0]))
    nu = g1 / np.linalg.norm(g1)

    qpi = grid.L[0] / math.pi
    if abs(qpi - round(qpi)) > 1e-12 or grid.N[0] % (2 * round(qpi)):
        raise ConfigInvalid("need L_1 = q pi with N_1 divisible by 2q so the planes x_1 = k pi are grid points")
    qpi = int(round(qpi))
    grid = grid.with_offset((0.5,) + grid.offset[1:])
    aligned = grid.with_offset((0.0,) + grid.offset[1:])
    taper = _taper(grid, taper)
    rd = _RD[precision]

    def profile(x):
        t = sum(nu[j] * x[j] for j in range(d))
        perp2 = sum((x[j] - t * nu[j]) ** 2 for j in range(d))
        return (1.0 + t * t + perp2 * perp2) ** rd(-N / 2)

    _check_tail(profile, grid, tail_tol)
    a = envelope_symbol(Tt, np.eye(d), np.zeros(d))

    def T_minus(xi):
        return a(xi) - lam

    # f = (T - lam)(sin(x_1) psi) on the plane-aligned grid
    xa = aligned.coords(rd)
    phi_a = _window(aligned, taper, precision) * np.sin(xa[0]) * profile(xa)
    f = apply_multiplier(T_minus, GridField(aligned, np.broadcast_to(phi_a, aligned.shape), "phi"),
                         precision=precision).values.real
    ks = list(range(-qpi, qpi))
    step = grid.N[0] // (2 * qpi)
    f_planes = {k: f[(k + qpi) * step] for k in ks}

    x = grid.coords(rd)
    w = 0.0
    for k in ks:
        t = x[0] - rd(k * math.pi)
        w = w + (-1.0) ** k * t**m * gaussian_cutoff(t, c) * f_planes[k][None, ...]
    W = _window(grid, taper, precision)
    psi = np.broadcast_to(profile(x), grid.shape)
    u = np.sin(x[0]) * W * (psi - rd(kappa) * w)
    num = apply_multiplier(T_minus, GridField(grid, u, "u"), precision=precision).values
    ref = W * psi
    core = taper.core(grid)
    V, mask = _ratio_potential(grid, num, u, ref, core, guard, GUARD_POSITIVE)
    reg = RegularizationParams(N, m, c, kappa)
    params = {"symbol": symbol.to_json(), "lam": lam, "m": m, "N": N, "c": c,
              "hint": None if hint is None else list(map(float, hint)), "precision": precision,
              "tail_tol": tail_tol, "guard": guard}
    return Construction(
        theorem="real",
        envelope=_as_field(grid, _to_double(u), "u"),
        V=_as_field(grid, _to_double(V).astype(complex), "V"),
        lam=float(lam), scale=ScaleParam(1), symbol=Tt, weight=None, mask=mask,
        carrier=np.zeros(d), frame=np.eye(d),
        reference=_as_field(grid, _to_double(ref), "reference"), taper=taper,
        provenance={"builder": "real", "params": params, "grid": grid.to_json(), "taper": taper.to_json()},
        reg=reg,
        data={"nu": nu.tolist(), "linear_map": A.tolist(), "original_symbol": symbol.to_json(),
              "fermi": fermi.to_json()},
    )


# --------------------------------------------------------------------------
# Bessel functions and the Fourier transform of the sphere measure


def _bessel_series(nu, s):
    s = np.asarray(s, dtype=float)
    half = 0.5 * s
    term = np.exp(nu * np.log(np.where(half > 0, half, 1.0)) - gammaln(nu + 1.0))
    term = np.where(half > 0, term, 1.0 if nu == 0 else 0.0)
    total = term.copy()
    q = -half * half
    for k in range(1, 80):
        term = term * q / (k * (k + nu))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _bessel_half_integer(nu, s):
    """Terminating Hankel expansion, exact for half-integer order."""
    s = np.asarray(s, dtype=float)
    mu = 4.0 * nu * nu
    P = np.zeros_like(s)
    Q = np.zeros_like(s)
    a = 1.0
    k = 0
    while True:
        if k % 2 == 0:
            P = P + (-1) ** (k // 2) * a / s**k
        else:
            Q = Q + (-1) ** (k // 2) * a / s**k
        nxt = (mu - (2 * k + 1) ** 2) / (8.0 * (k + 1))
        if nxt == 0:
            break
        a = a * nxt
        k += 1
    w = s - 0.5 * nu * math.pi - 0.25 * math.pi
    return np.sqrt(2.0 / (math.pi * s)) * (P * np.cos(w) - Q * np.sin(w))


def _bessel_integer(n, s):
    """Bessel's integral by the trapezoidal rule (spectrally accurate)."""
    s = np.asarray(s, dtype=float)
    M = int(max(64, 2 * (s.max() + n) + 64))
    tau = (np.arange(M) + 0.5) * (math.pi / M)
    out = np.empty_like(s)
    flat = s.ravel()
    res = out.ravel()
    chunk = max(1, 2_000_000 // M)
    for i in range(0, flat.size, chunk):
        blk = flat[i:i + chunk, None]
        res[i:i + chunk] = np.cos(n * tau - blk * np.sin(tau)).mean(axis=1)
    return res.reshape(s.shape)


def bessel_j(nu, s):
    """J_nu(s) for s >= 0 and nu a nonnegative integer or half-integer."""
    s = np.asarray(s, dtype=float)
    if 2 * nu != round(2 * nu) or nu < 0:
        raise ConfigInvalid("order must be a nonnegative integer or half-integer")
    small = s <= 12.0
    out = np.empty_like(s)
    out[small] = _bessel_series(nu, s[small])
    if np.any(~small):
        if nu == round(nu):
            out[~small] = _bessel_integer(int(round(nu)), s[~small])
        else:
            out[~small] = _bessel_half_integer(nu, s[~small])
    return out


def surface_measure_ft(d, r, x):
    """Fourier transform of the surface measure of the radius-r sphere.

    ``x`` is a point (length-d vector) or an array of radii.
    """
    if d < 2 or not r > 0:
        raise ConfigInvalid("need d >= 2 and r > 0")
    x = np.asarray(x, dtype=float)
    rad = np.linalg.norm(x) if x.ndim == 1 and x.shape[0] == d else np.abs(x)
    s = r * np.asarray(rad, dtype=float)
    nu = (d - 2) / 2.0
    s_safe = np.where(s > 0, s, 1.0)
    val = (2 * math.pi) ** (d / 2) * bessel_j(nu, s_safe) / s_safe**nu
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    val = np.where(s > 0, val, area)
    out = r ** (d - 1) * val
    return float(out) if np.ndim(out) == 0 else out


def radial_zeros(d, r_min, r_max):
    """Zeros of the unit-sphere transform in (r_min, r_max], by bracketing."""
    rs = np.linspace(max(r_min, 1e-6), r_max, int(64 * (r_max - r_min)) + 64)
    vals = surface_measure_ft(d, 1.0, rs)
    out = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        out.append(brentq(lambda t: surface_measure_ft(d, 1.0, t), rs[i], rs[i + 1], xtol=1e-15))
    return out


# --------------------------------------------------------------------------
# radial potentials


def kappa_radial(cm, m, rule="vanishing", d=None):
    """Amplitude of the shell correction.

    ``"vanishing"`` makes (T(D) - lam) u vanish on the zero spheres:
    the top-order term gives (-1)^m (2m)! c_m at |x| = r_k.  ``"dimensional"``
    is the value 1 / (c_m (2d)^m).
    """
    if rule == "vanishing":
        return (-1) ** m / (cm * math.factorial(2 * m))
    if rule == "dimensional":
        return 1.0 / (cm * (2 * d) ** m)
    raise ConfigInvalid(f"unknown kappa rule {rule!r}")


def build_radial(symbol, lam, N, r0, n, grid, *, c=0.45, kappa=None, kappa_rule="vanishing",
                 taper=None, precision="double", tail_tol=1e-6, guard=GUARD_OSCILLATORY):
    """Radial eigenfunction sigma^(|x|) psi_n(x) - kappa w(x).

    The sphere transform is itself positive on [0, r0] for r0 below its
    first zero, so it serves as the smooth positive profile there.
    """
    d = symbol.d
    if symbol.kind != "radial_polynomial":
        raise ConfigInvalid("radial builder needs a radial_polynomial symbol")
    if grid.d != d:
        raise ConfigInvalid("grid dimension differs from the symbol dimension")
    if not N > d / 2:
        raise ConfigInvalid(f"N must exceed d/2 = {d / 2:g}")
    if len(set(grid.spacing)) != 1 or len(set(grid.L)) != 1:
        raise ConfigInvalid("radial builds need a cubic grid")
    cs = np.array(symbol.coeffs)
    # Fermi set {P(s) = lam}, s = |xi|^2, must be a single sphere
    fermi = sy.find_fermi_point(symbol, lam, np.eye(d)[0])
    R0 = float(np.linalg.norm(fermi.eta))
    shifted = cs.astype(float).copy()
    shifted[0] -= lam
    roots = np.roots(shifted[::-1])
    pos = [z.real for z in roots if abs(z.imag) <= 1e-9 * max(1.0, abs(z)) and z.real > 0]
    if len(pos) != 1 or cs[-1] <= 0:
        raise NonCompact("Fermi set is not a single sphere")
    scaled = sy.SymbolSpec.radial(d, [cj * R0 ** (2 * j) for j, cj in enumerate(cs)])
    m = len(cs) - 1
    cm = scaled.coeffs[-1]
    if kappa is None:
        kappa = kappa_radial(cm, m, kappa_rule, d)
    first = radial_zeros(d, 1e-6, 20.0)[0]
    if not 0 < r0 < first:
        raise ConfigInvalid(f"r0 must lie in (0, {first:.6f}) where the sphere transform is positive")
    rmax = float(np.sqrt(sum(L * L for L in grid.L)))
    zeros = [z for z in radial_zeros(d, r0, rmax) if z > r0]
    gaps = np.diff([r0] + zeros)
    delta = float(gaps[1:].min()) if len(gaps) > 1 else float("inf")
    if 6 * c >= delta:
        raise ZeroGapTooSmall(f"cutoff width {c} too large for zero gap {delta:.4f} (need 6 c < gap)")

    scale = ScaleParam(n)
    taper = _taper(grid, taper)
    rd = _RD[precision]

    def radial_profile(x):
        r = np.sqrt(sum(xj.astype(float) ** 2 for xj in x))
        sig = surface_measure_ft(d, 1.0, r)
        return sig * (1.0 + (scale.h * r) ** 2) ** (-N / 2)

    _check_tail(radial_profile, grid, tail_tol)
    x = grid.coords(rd)
    r = np.sqrt(sum(xj * xj for xj in x))
    rf = r.astype(float)
    W = _window(grid, taper, precision)
    psi = (1.0 + (rd(scale.h) * r) ** 2) ** rd(-N / 2)
    ref = W * psi * (1.0 + r) ** rd(-(d - 1) / 2) * rd(surface_measure_ft(d, 1.0, 0.0))
    ut = W * surface_measure_ft(d, 1.0, rf).astype(rd) * psi
    del psi
    a = envelope_symbol(scaled, np.eye(d), np.zeros(d))

    def T_minus(xi):
        return a(xi) - lam

    # the symbol is real and even, so real transforms halve the memory
    f = apply_multiplier(T_minus, GridField(grid, ut, "u~"), precision=precision, real=True).values
    core = taper.core(grid)
    dx = grid.spacing[0]
    # Only shells inside the inscribed ball of the taper core are
    # corrected.  V is singular on the first uncorrected shell, so it is
    # trusted up to the midpoint between that shell and the previous one.
    r_safe = min(L - 9 * s - mg for L, s, mg in zip(grid.L, taper.width, taper.margin))
    f_at = []
    for rk in zeros:
        sel = (np.abs(rf - rk) <= 3 * dx) & core
        if rk > r_safe or sel.sum() < 50:
            break
        t = rf[sel] - rk
        coef = np.polynomial.polynomial.polyfit(t, f[sel].astype(float), 8)
        f_at.append(float(coef[0]))
    corrected = zeros[:len(f_at)]
    if len(f_at) < len(zeros):
        r_bad = zeros[len(f_at)]
        r_prev = corrected[-1] if corrected else r0
        trusted = 0.5 * (r_prev + r_bad)
        trust_width = (r_bad - trusted) / 5.0
    else:
        trusted, trust_width = math.inf, 0.0
    w = 0.0
    for rk, fk in zip(zeros, f_at):
        # even extension in r, so each term is smooth at the origin
        t, tm = r - rd(rk), r + rd(rk)
        w = w + (t ** (2 * m) * gaussian_cutoff(t, c) + tm ** (2 * m) * gaussian_cutoff(tm, c)) * rd(fk)
    u = ut - rd(kappa) * W * w
    del ut, w, f
    num = apply_multiplier(T_minus, GridField(grid, u, "u"), precision=precision, real=True).values
    V, mask = _ratio_potential(grid, num, u, ref, core & (rf <= trusted), guard, GUARD_POSITIVE)
    reg = RegularizationParams(N, m, c, float(kappa))
    rdata = RadialData(float(r0), tuple(corrected), delta, tuple(f_at), R0, trusted, trust_width)
    params = {"symbol": symbol.to_json(), "lam": lam, "N": N, "r0": r0, "n": n, "c": c,
              "kappa": None if kappa is None else float(kappa), "kappa_rule": kappa_rule,
              "precision": precision, "tail_tol": tail_tol, "guard": guard}
    params["kappa"] = float(kappa)
    return Construction(
        theorem="radial",
        envelope=_as_field(grid, _to_double(u), "u"),
        V=_as_field(grid, _to_double(V).astype(complex), "V"),
        lam=float(lam), scale=scale, symbol=scaled, weight=WeightSpec.radial(d), mask=mask,
        carrier=np.zeros(d), frame=R0 * np.eye(d),
        reference=_as_field(grid, _to_double(ref), "reference"), taper=taper,
        provenance={"builder": "radial", "params": params, "grid": grid.to_json(), "taper": taper.to_json()},
        reg=reg,
        data={"radial": rdata.to_json(), "original_symbol": symbol.to_json()},
    )


# --------------------------------------------------------------------------
# relativistic kinetic energy


def chandrasekhar_g(t):
    """g(t) = int_0^t sin^2 = t/2 - sin(2t)/4."""
    return 0.5 * t - 0.25 * np.sin(2 * t)


def chandrasekhar_first_term(x, N, n):
    """Closed form of (d/dx_d) w_n / sin(x_d)."""
    xd = x[-1]
    g = chandrasekhar_g(xd)
    r2 = sum(xj * xj for xj in x[:-1]) if len(x) > 1 else 0.0
    base = n * n + r2 * r2 + g * g
    return -N * g * np.sin(xd) * base ** (-N / 2 - 1)


def chandrasekhar_w(x, N, n):
    g = chandrasekhar_g(x[-1])
    r2 = sum(xj * xj for xj in x[:-1]) if len(x) > 1 else 0.0
    return (n * n + r2 * r2 + g * g) ** (-N / 2)


def build_chandrasekhar(lam, N, n, grid, *, mass=1.0, taper=None, kernel_margin=15.0,
                        tail_tol=1e-4, guard=GUARD_POSITIVE, split_factor=None):
    """sin(x_d) phi_n with phi_n = (S_+ + S_-) w_n and the split potential.

    Coordinates are rescaled by the Fermi momentum kappa so that the
    carrier frequency is e_d; on the grid T reads
    kappa sqrt(|xi|^2 + mu^2) - mass with mu = mass / kappa, and
    S_(+-) = sqrt(|xi +- e_d|^2 + mu^2).  The potential is

        V = s e^(i x_d) (d_d w_n / sin x_d) / phi_n - (T(D - e_d) - lam) phi_n / phi_n

    with ``s = split_factor`` (default 2 kappa, which makes V real).
    """
    d = grid.d
    if not N > (d + 1) / 4:
        raise ConfigInvalid(f"N must exceed (d+1)/4 = {(d + 1) / 4:g}")
    if not lam > 0:
        raise ConfigInvalid("lambda must be positive")
    kappa = math.sqrt((lam + mass) ** 2 - mass**2)
    mu = mass / kappa
    s_split = 2.0 * kappa if split_factor is None else float(split_factor)
    taper = _taper(grid, taper, margin=kernel_margin)
    _check_tail(lambda x: chandrasekhar_w(x, N, n), grid, tail_tol)
    x = grid.coords()
    W = _window(grid, taper)
    w = W * chandrasekhar_w(x, N, n)

    def S(sign):
        def s(xi):
            r2 = sum(xi[j] ** 2 for j in range(d - 1)) if d > 1 else 0.0
            return np.sqrt(r2 + (xi[-1] + sign) ** 2 + mu * mu)
        return s

    Sp, Sm = S(1.0), S(-1.0)
    phi = apply_multiplier(lambda xi: Sp(xi) + Sm(xi), GridField(grid, w, "w")).values.real
    core = taper.core(grid)
    xd = x[-1]
    weight = n + (sum(xj * xj for xj in x[:-1]) if d > 1 else 0.0) + np.abs(xd)
    lower = float(np.min(np.where(core, phi * weight ** (N / 2), np.inf)))
    if not lower > 0:
        raise LowerBoundFailed(f"min phi_n (n + |x'|^2 + |x_d|)^(N/2) = {lower:.3g} <= 0 for n = {n}")
    first = W * chandrasekhar_first_term(x, N, n)
    second = apply_multiplier(lambda xi: kappa * Sm(xi) - mass - lam, GridField(grid, phi, "phi")).values
    ref = np.broadcast_to(w, grid.shape)
    domain = core & (ref > guard * ref[core].max())
    Vfull = s_split * np.exp(1j * xd) * first / np.where(domain, phi, 1.0) - second / np.where(domain, phi, 1.0)
    mask = ~domain
    V = np.where(mask, 0, Vfull)
    u = np.sin(xd) * phi
    sym = sy.SymbolSpec.chandrasekhar(d, mass)
    params = {"lam": lam, "N": N, "n": n, "mass": mass, "kernel_margin": kernel_margin,
              "tail_tol": tail_tol, "guard": guard, "split_factor": split_factor}
    return Construction(
        theorem="chandrasekhar",
        envelope=_as_field(grid, u, "u"),
        V=_as_field(grid, V, "V"),
        lam=float(lam), scale=ScaleParam(n), symbol=sym, weight=WeightSpec.thm1(d), mask=mask,
        carrier=np.zeros(d), frame=kappa * np.eye(d),
        reference=_as_field(grid, np.array(ref), "reference"), taper=taper,
        provenance={"builder": "chandrasekhar", "params": params, "grid": grid.to_json(), "taper": taper.to_json()},
        potential_kind="split",
        data={"kappa": kappa, "mu": mu, "lower_bound": lower, "split_factor": s_split,
              "phi_min": float(phi[core].min())},
    )


# --------------------------------------------------------------------------
# Dirac operators


_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def clifford_generators(count):
    """At least ``count`` mutually anticommuting hermitian involutions."""
    gens = list(_PAULI)
    while len(gens) < count:
        K = gens[0].shape[0]
        gens = [np.kron(_PAULI[0], g) for g in gens] + [
            np.kron(_PAULI[1], np.eye(K)), np.kron(_PAULI[2], np.eye(K))]
    return gens


def dirac_matrices(d):
    """alpha_1..alpha_d and beta; Pauli for d = 2, Dirac representation for d = 3."""
    gens = clifford_generators(d + 1)
    return np.array(gens[:d]), gens[-1]


def clifford_defect(alphas, beta):
    K = beta.shape[0]
    I = np.eye(K)
    err = float(np.abs(beta @ beta - I).max())
    for i, ai in enumerate(alphas):
        err = max(err, float(np.abs(ai @ beta + beta @ ai).max()))
        for j, aj in enumerate(alphas):
            err = max(err, float(np.abs(ai @ aj + aj @ ai - 2 * (i == j) * I).max()))
    return err


def dirac_data(d, lam=math.sqrt(2.0)):
    if not lam > 1:
        raise ConfigInvalid("Dirac eigenvalue must exceed the mass 1")
    alphas, beta = dirac_matrices(d)
    defect = clifford_defect(alphas, beta)
    if defect > 1e-14:
        raise CliffordViolation(f"Clifford relations violated by {defect:.2e}")
    p = math.sqrt(lam * lam - 1.0)
    M = p * alphas[-1] + beta
    P = 0.5 * (np.eye(len(beta)) + M / lam)
    for j in range(P.shape[1]):
        col = P[:, j]
        nrm = np.linalg.norm(col)
        if nrm > 1e-8:
            v = col / nrm
            break
    return DiracData(d, beta.shape[0], alphas, beta, v, p)


def dirac_log_derivatives(x, N, n):
    """d_j psi_n / psi_n for psi_n = (n^2 + |x'|^4 + x_d^2)^(-N/2)."""
    d = len(x)
    r2 = sum(xj * xj for xj in x[:-1]) if d > 1 else 0.0
    Q = n * n + r2 * r2 + x[-1] ** 2
    out = [-2.0 * N * r2 * xj / Q for xj in x[:-1]]
    out.append(-N * x[-1] / Q)
    return out


def build_dirac(d, lam, N, n, grid, *, taper=None, tail_tol=1e-6):
    """e^(i p x_d) psi_n v with V = -(1/psi_n) sum_j D_j psi_n alpha_j."""
    if grid.d != d:
        raise ConfigInvalid("grid dimension differs from d")
    if not N > (d + 1) / 4:
        raise ConfigInvalid(f"N must exceed (d+1)/4 = {(d + 1) / 4:g}")
    dd = dirac_data(d, lam)
    taper = _taper(grid, taper)

    def profile(x):
        r2 = sum(xj * xj for xj in x[:-1]) if d > 1 else 0.0
        return (n * n + r2 * r2 + x[-1] ** 2) ** (-N / 2)

    _check_tail(profile, grid, tail_tol)
    x = grid.coords()
    psi = np.broadcast_to(profile(x), grid.shape)
    W = _window(grid, taper)
    env = (W * psi)[..., None] * dd.v
    logd = dirac_log_derivatives(x, N, n)
    V = np.zeros(grid.shape + (dd.K, dd.K), dtype=complex)
    for j in range(d):
        V += 1j * np.broadcast_to(logd[j], grid.shape)[..., None, None] * dd.alphas[j]
    core = taper.core(grid)
    carrier = np.zeros(d)
    carrier[-1] = dd.momentum
    params = {"d": d, "lam": lam, "N": N, "n": n, "tail_tol": tail_tol}
    return Construction(
        theorem="dirac",
        envelope=_as_field(grid, env, "u envelope"),
        V=_as_field(grid, V, "V"),
        lam=float(lam), scale=ScaleParam(n), symbol=None, weight=WeightSpec.thm1(d), mask=~core,
        carrier=carrier, frame=np.eye(d),
        reference=_as_field(grid, W * psi, "reference"), taper=taper,
        provenance={"builder": "dirac", "params": params, "grid": grid.to_json(), "taper": taper.to_json()},
        potential_kind="closed",
        data={"dirac": dd},
    )


# --------------------------------------------------------------------------
# dyadic superposition of Knapp pieces


def knapp_quasinorm(x):
    r2 = sum(xj * xj for xj in x[:-1]) if len(x) > 1 else 0.0
    return np.sqrt(r2 * r2 + x[-1] ** 2)


def knapp_beta(s):
    """1 for s <= 1, 0 for s >= 4, smooth in log_4 s."""
    s = np.asarray(s, dtype=float)
    t = np.log(np.maximum(s, 1e-300)) / math.log(4.0)
    return 1.0 - smooth_step(t)


def knapp_tile(x, j):
    q = knapp_quasinorm(x)
    return knapp_beta(q / 4.0**j) - knapp_beta(q / 4.0 ** (j - 1))


@dataclass(frozen=True, eq=False)
class KnappResult:
    u: GridField
    c_lower: float
    c_upper: float
    partition_error: float
    j_max: int


def knapp_annulus(spec):
    x = spec.coords()
    r = np.sqrt(sum(xj * xj for xj in x))
    return (r >= 2.0) & (r <= 0.8 * min(spec.L))


def build_knapp(N, grid, j_max=None):
    """u = sum_j 4^(-N j) chi_j over a dyadic anisotropic partition of unity.

    chi_j lives where |x'|^2 + |x_d| is comparable to 4^j.
    """
    x = grid.coords()
    q = np.broadcast_to(knapp_quasinorm(x), grid.shape)
    ann = knapp_annulus(grid)
    q_need = float(q[ann].max()) if ann.any() else 1.0
    if j_max is None:
        j_max = int(math.ceil(math.log(max(q_need, 1.0), 4.0))) + 1
    u = np.zeros(grid.shape)
    pou = np.zeros(grid.shape)
    for j in range(0, j_max + 1):
        chi = knapp_tile(x, j)
        pou += chi
        u += 4.0 ** (-N * j) * chi
    err = float(np.abs(pou[ann] - 1.0).max()) if ann.any() else 0.0
    if err > 1e-10:
        raise CoverGap(f"partition of unity deviates by {err:.2e} on the annulus (j_max={j_max})")
    r2 = sum(xj * xj for xj in x[:-1])
    comp = u * (r2 + np.abs(x[-1])) ** N
    return KnappResult(GridField(grid, u, "knapp u"), float(comp[ann].min()), float(comp[ann].max()), err, j_max)


def knapp_tile_leak(grid, j, symbol=None, lam=0.0, carrier=None):
    """Relative L^2 mass of a single tile (or of (T(D) - lam) applied to
    it) outside the doubled bounding rectangle of the tile's support."""
    d = grid.d
    x = grid.coords()
    tile = np.broadcast_to(knapp_tile(x, j), grid.shape).astype(complex)
    if symbol is not None:
        c = np.zeros(d) if carrier is None else np.asarray(carrier, dtype=float)
        a = envelope_symbol(symbol, np.eye(d), c)
        tile = apply_multiplier(lambda xi: a(xi) - lam, GridField(grid, tile, "tile")).values
    outside = np.zeros(grid.shape, dtype=bool)
    for xj in x[:-1]:
        outside = outside | (np.abs(xj) > 2.0 ** (j + 2))
    outside = outside | (np.abs(x[-1]) > 2.0 * 4.0 ** (j + 1))
    total = float(np.sum(np.abs(tile) ** 2))
    return float(np.sum(np.abs(tile[outside]) ** 2)) / total if total > 0 else 0.0


# --------------------------------------------------------------------------
# configurations, rebuilds and scans


@dataclass(frozen=True)
class BuildConfig:
    """A builder plus parameters and a rule producing the grid for each n.

    ``scaling``:
      - ``"fixed"``: the same grid for every n;
      - ``"anisotropic"``: L_j multiplied by (n / n_ref)^gamma_j, point
        counts fixed (exact scaling covariance for carrier builds);
      - ``"oscillatory"``: as anisotropic, except that the last axis keeps
        its spacing (points multiplied by n / n_ref), for builds with an
        explicit sin(x_d) factor;
      - ``"power"``: every L_j multiplied by (n / n_ref)^exponent, point
        counts fixed.
    """

    theorem: str
    params: dict
    grid: GridSpec
    scaling: str = "anisotropic"
    n_ref: int = 1
    exponent: float = 0.5

    def gamma(self):
        d = self.grid.d
        if self.theorem in ("thm1", "dirac", "chandrasekhar"):
            return WeightSpec.thm1(d).gamma_float
        if self.theorem == "thm2":
            return build(self, self.n_ref, only_weight=True).gamma_float
        return np.ones(d)

    def grid_for(self, n):
        if self.scaling == "fixed":
            return self.grid
        ratio = n / self.n_ref
        if self.scaling == "power":
            return self.grid.scaled([ratio**self.exponent] * self.grid.d)
        if self.scaling not in ("anisotropic", "oscillatory"):
            raise ConfigInvalid(f"unknown grid scaling {self.scaling!r}")
        factors = ratio ** self.gamma()
        g = self.grid.scaled(factors)
        if self.scaling == "oscillatory":
            L = list(g.L)
            Np = list(g.N)
            L[-1] = self.grid.L[-1] * ratio
            Np[-1] = int(round(self.grid.N[-1] * ratio))
            g = GridSpec(tuple(L), tuple(Np), g.offset)
        return g

    def to_json(self):
        return {"theorem": self.theorem, "params": self.params, "grid": self.grid.to_json(),
                "scaling": self.scaling, "n_ref": self.n_ref, "exponent": self.exponent}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["theorem"], dict(obj["params"]), GridSpec.from_json(obj["grid"]),
                   obj.get("scaling", "anisotropic"), int(obj.get("n_ref", 1)), float(obj.get("exponent", 0.5)))


def _symbol_from(p):
    s = p["symbol"]
    return s if isinstance(s, sy.SymbolSpec) else sy.SymbolSpec.from_json(s)


def _fermi_from(p, symbol):
    if p.get("eta") is not None:
        return sy.fermi_data(symbol, p["lam"], p["eta"])
    hint = p.get("hint") or list(np.eye(symbol.d)[-1])
    return sy.find_fermi_point(symbol, p["lam"], hint)


_OPTIONAL = ("precision", "tail_tol", "guard")


def _opts(p, names):
    return {k: p[k] for k in names if k in p and p[k] is not None}


def build(config, n, grid=None, taper=None, only_weight=False):
    """Run the configured builder for a given n."""
    p = dict(config.params)
    t = config.theorem
    if only_weight:
        symbol = _symbol_from(p)
        fermi = _fermi_from(p, symbol)
        return WeightSpec.thm2(symbol.d, fermi.k_nonvanishing, flat=p.get("flat", 3))
    grid = grid if grid is not None else config.grid_for(n)
    if t in ("thm1", "thm2"):
        symbol = _symbol_from(p)
        fermi = _fermi_from(p, symbol)
        kw = _opts(p, _OPTIONAL)
        if t == "thm2":
            kw.update(_opts(p, ("k", "flat")))
        return build_thm1(symbol, p["lam"], fermi, p["N"], n, grid, taper=taper, theorem=t, **kw)
    if t == "real":
        return build_real(_symbol_from(p), p["lam"], p["m"], p["N"], p["c"], grid, taper=taper,
                          **_opts(p, _OPTIONAL + ("hint",)))
    if t == "radial":
        return build_radial(_symbol_from(p), p["lam"], p["N"], p["r0"], n, grid, taper=taper,
                            **_opts(p, _OPTIONAL + ("c", "kappa", "kappa_rule")))
    if t == "chandrasekhar":
        return build_chandrasekhar(p["lam"], p["N"], n, grid, taper=taper,
                                   **_opts(p, ("mass", "kernel_margin", "tail_tol", "guard", "split_factor")))
    if t == "dirac":
        return build_dirac(p["d"], p["lam"], p["N"], n, grid, taper=taper, **_opts(p, ("tail_tol",)))
    raise ConfigInvalid(f"unknown theorem {t!r}")


def config_of(c):
    """BuildConfig reproducing a construction (fixed grid)."""
    prov = c.provenance
    return BuildConfig(prov["builder"], dict(prov["params"]), GridSpec.from_json(prov["grid"]), "fixed")


def rebuild(c, grid):
    """Rerun the builder of ``c`` on another grid with the same taper."""
    return build(config_of(c), c.scale.n, grid=grid, taper=Taper.from_json(c.provenance["taper"]))


# --------------------------------------------------------------------------
# reference configurations


def preset(name):
    """Standard configurations used by the acceptance suite and the CLI."""
    lap = lambda d: sy.SymbolSpec.laplacian(d).to_json()  # noqa: E731
    P = {
        "thm1-2d": BuildConfig("thm1", {"symbol": lap(2), "lam": 1.0, "hint": [0, 1], "N": 8},
                               GridSpec.make(2, (3.5, 7.0), (128, 256))),
        "thm1-3d": BuildConfig("thm1", {"symbol": lap(3), "lam": 1.0, "hint": [0, 0, 1], "N": 10},
                               GridSpec.make(3, (3.0, 3.0, 5.0), (128, 128, 128))),
        "thm2-cylinder": BuildConfig(
            "thm2", {"symbol": sy.SymbolSpec.polynomial(3, {(2, 0, 0): 1.0, (0, 2, 0): 1.0}).to_json(),
                     "lam": 1.0, "hint": [0, 1, 0], "N": 10, "flat": 3},
            GridSpec.make(3, (3.0, 2.0, 5.0), (128, 128, 128))),
        "thm2-cylinder-m5": BuildConfig(
            "thm2", {"symbol": sy.SymbolSpec.polynomial(3, {(2, 0, 0): 1.0, (0, 2, 0): 1.0}).to_json(),
                     "lam": 1.0, "hint": [0, 1, 0], "N": 10, "flat": 5},
            GridSpec.make(3, (3.0, 1.6, 5.0), (128, 128, 128))),
        "real-3d": BuildConfig("real", {"symbol": lap(3), "lam": 1.0, "m": 1, "N": 16, "c": 0.3},
                               GridSpec.make(3, (math.pi, 3.0, 3.0), (128, 128, 128), (0.5, 0, 0)), "fixed"),
        "radial-3d": BuildConfig("radial", {"symbol": sy.SymbolSpec.radial(3, [0.0, 1.0]).to_json(), "lam": 1.0,
                                            "N": 12, "r0": 1.5, "c": 0.5, "precision": "extended"},
                                 GridSpec.make(3, 7.4, 256), "power", 1, 0.5),
        "radial-3d-small": BuildConfig("radial", {"symbol": sy.SymbolSpec.radial(3, [0.0, 1.0]).to_json(), "lam": 1.0,
                                                  "N": 12, "r0": 1.5, "c": 0.5},
                                       GridSpec.make(3, 3.7, 128), "power", 1, 0.5),
        "chandrasekhar-2d": BuildConfig("chandrasekhar", {"lam": math.sqrt(2) - 1, "N": 2},
                                        GridSpec.make(2, (40.0, 880.0), (256, 16384)), "oscillatory", 4),
        "dirac-3d": BuildConfig("dirac", {"d": 3, "lam": math.sqrt(2), "N": 10},
                                GridSpec.make(3, (3.0, 3.0, 5.0), (128, 128, 128))),
        "dirac-2d": BuildConfig("dirac", {"d": 2, "lam": math.sqrt(2), "N": 10},
                                GridSpec.make(2, (3.0, 5.0), (128, 128))),
    }
    if name not in P:
        raise ConfigInvalid(f"unknown preset {name!r}; available: {', '.join(sorted(P))}")
    return P[name]
