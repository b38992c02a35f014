"""Dispersion relations T(xi) and the algebraic data the builders need.

Four kinds of symbol are supported: general polynomials, radial
polynomials sum_j c_j |xi|^(2j), the relativistic symbol
sqrt(|xi|^2 + m^2) - m and the lattice symbol d - sum_j cos(xi_j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq, linprog

from .errors import (
    ConfigInvalid,
    CriticalPoint,
    EmptySupport,
    NoRoot,
    NotEven,
    UnsupportedKind,
)

KINDS = ("polynomial", "radial_polynomial", "chandrasekhar", "discrete_cosine")

TOL_REGULAR = 1e-8
TOL_CURVATURE = 1e-8


def tol_fermi(lam):
    return 1e-12 * (1.0 + abs(lam))


# --------------------------------------------------------------------------
# sparse multivariate polynomials: dict {alpha tuple: coefficient}


def _padd(p, q, scale=1.0):
    out = dict(p)
    for a, c in q.items():
        out[a] = out.get(a, 0.0) + scale * c
    return out


def _pmul(p, q):
    out = {}
    for a, c in p.items():
        for b, e in q.items():
            k = tuple(i + j for i, j in zip(a, b))
            out[k] = out.get(k, 0.0) + c * e
    return out


def _ppow(p, k, d):
    out = {(0,) * d: 1.0}
    base = p
    while k:
        if k & 1:
            out = _pmul(out, base)
        k >>= 1
        if k:
            base = _pmul(base, base)
    return out


def _prune(p, tol=0.0):
    return {a: c for a, c in p.items() if abs(c) > tol}


def substitute_affine(p, A, b):
    """Return the coefficients of xi -> p(A xi + b)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = A.shape[0]
    unit = np.eye(d, dtype=int)
    linear = []
    for i in range(d):
        li = {(0,) * d: float(b[i])}
        for j in range(d):
            if A[i, j] != 0.0:
                li[tuple(int(v) for v in unit[j])] = float(A[i, j])
        linear.append(li)
    cache = {}
    out = {}
    for alpha, c in p.items():
        term = {(0,) * d: c}
        for i, k in enumerate(alpha):
            if k:
                if (i, k) not in cache:
                    cache[(i, k)] = _ppow(linear[i], k, d)
                term = _pmul(term, cache[(i, k)])
        out = _padd(out, term)
    return out


def _pdiff(p, j):
    out = {}
    for a, c in p.items():
        if a[j]:
            b = list(a)
            b[j] -= 1
            out[tuple(b)] = out.get(tuple(b), 0.0) + c * a[j]
    return out


def _radial_to_poly(cs, d):
    sq = {tuple(2 if i == j else 0 for i in range(d)): 1.0 for j in range(d)}
    out = {}
    for j, c in enumerate(cs):
        if c:
            out = _padd(out, _ppow(sq, j, d), c)
    return _prune(out)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolSpec:
    """A dispersion relation.

    ``coeffs`` holds ``((alpha, c), ...)`` for polynomials and
    ``(c_0, ..., c_K)`` for radial polynomials.
    """

    kind: str
    d: int
    coeffs: tuple = ()
    mass: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigInvalid(f"unknown symbol kind {self.kind!r}")
        if self.d < 1:
            raise ConfigInvalid("dimension must be positive")
        if self.kind == "polynomial":
            for alpha, c in self.coeffs:
                if len(alpha) != self.d or min(alpha) < 0:
                    raise ConfigInvalid(f"bad multi-index {alpha}")
                if c == 0:
                    raise ConfigInvalid("explicit zero coefficient")
        if self.kind == "radial_polynomial":
            if not self.coeffs or self.coeffs[-1] == 0:
                raise ConfigInvalid("radial symbol needs a nonzero top coefficient")
        if self.kind == "chandrasekhar" and not self.mass > 0:
            raise ConfigInvalid("mass must be positive")

    @classmethod
    def polynomial(cls, d, coeffs):
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        merged = {}
        for alpha, c in items:
            alpha = tuple(int(a) for a in alpha)
            merged[alpha] = merged.get(alpha, 0) + c
        return cls("polynomial", d, tuple(sorted((a, c) for a, c in merged.items() if c != 0)))

    @classmethod
    def laplacian(cls, d):
        """|xi|^2 as a polynomial."""
        return cls.polynomial(d, {tuple(2 if i == j else 0 for i in range(d)): 1.0 for j in range(d)})

    @classmethod
    def radial(cls, d, cs):
        return cls("radial_polynomial", d, tuple(float(c) for c in cs))

    @classmethod
    def chandrasekhar(cls, d, mass=1.0):
        return cls("chandrasekhar", d, (), float(mass))

    @classmethod
    def discrete_cosine(cls, d):
        return cls("discrete_cosine", d)

    @property
    def is_real(self):
        if self.kind == "polynomial":
            return all(np.isreal(c) for _, c in self.coeffs)
        return True

    def poly(self):
        """Coefficient dictionary; only for the two polynomial kinds."""
        if self.kind == "polynomial":
            return dict(self.coeffs)
        if self.kind == "radial_polynomial":
            return _radial_to_poly(self.coeffs, self.d)
        raise UnsupportedKind(f"{self.kind} symbol has no finite coefficient list")

    def degree(self):
        return max((sum(a) for a in self.poly()), default=0)

    def to_json(self):
        out = {"kind": self.kind, "d": self.d}
        if self.kind == "polynomial":
            out["coeffs"] = [
                {"alpha": list(a), "c": _json_number(c)} for a, c in self.coeffs
            ]
        elif self.kind == "radial_polynomial":
            out["coeffs"] = list(self.coeffs)
        elif self.kind == "chandrasekhar":
            out["mass"] = self.mass
        return out

    @classmethod
    def from_json(cls, obj):
        try:
            kind, d = obj["kind"], int(obj["d"])
            if kind == "polynomial":
                return cls.polynomial(
                    d, [(e["alpha"], _from_json_number(e["c"])) for e in obj["coeffs"]]
                )
            if kind == "radial_polynomial":
                return cls.radial(d, obj["coeffs"])
            if kind == "chandrasekhar":
                return cls.chandrasekhar(d, obj.get("mass", 1.0))
            if kind == "discrete_cosine":
                return cls.discrete_cosine(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"malformed symbol: {exc}") from exc
        raise ConfigInvalid(f"unknown symbol kind {kind!r}")


def _json_number(c):
    c = complex(c)
    return c.real if c.imag == 0 else [c.real, c.imag]


def _from_json_number(c):
    return complex(c[0], c[1]) if isinstance(c, (list, tuple)) else float(c)


def _components(xi, d):
    comps = list(xi) if isinstance(xi, (list, tuple)) else list(np.asarray(xi))
    if len(comps) != d:
        raise ConfigInvalid(f"expected {d} frequency components, got {len(comps)}")
    return [np.asarray(c) for c in comps]


def _poly_eval(p, comps):
    d = len(comps)
    powers = [{0: 1.0} for _ in range(d)]
    total = 0.0
    for alpha, c in p.items():
        term = c
        for j, k in enumerate(alpha):
            if k:
                if k not in powers[j]:
                    powers[j][k] = comps[j] ** k
                term = term * powers[j][k]
        total = total + term
    return total


def evaluate(symbol, xi):
    """Value of T at xi (a d-vector or a sequence of d broadcastable arrays)."""
    comps = _components(xi, symbol.d)
    if symbol.kind == "polynomial":
        out = _poly_eval(dict(symbol.coeffs), comps)
    elif symbol.kind == "radial_polynomial":
        s = sum(c * c for c in comps)
        out = 0.0
        for c in reversed(symbol.coeffs):
            out = out * s + c
    elif symbol.kind == "chandrasekhar":
        s = sum(c * c for c in comps)
        out = np.sqrt(s + symbol.mass**2) - symbol.mass
    else:
        out = symbol.d - sum(np.cos(c) for c in comps)
    shape = np.broadcast_shapes(*(c.shape for c in comps))
    return np.broadcast_to(out, shape) + 0.0 if shape else out + 0.0


def gradient(symbol, xi):
    """Analytic gradient, stacked along the first axis."""
    comps = _components(xi, symbol.d)
    d = symbol.d
    if symbol.kind == "polynomial":
        p = dict(symbol.coeffs)
        g = [_poly_eval(_pdiff(p, j), comps) for j in range(d)]
    elif symbol.kind == "radial_polynomial":
        s = sum(c * c for c in comps)
        dp = 0.0
        for j in range(len(symbol.coeffs) - 1, 0, -1):
            dp = dp * s + j * symbol.coeffs[j]
        g = [2.0 * dp * c for c in comps]
    elif symbol.kind == "chandrasekhar":
        s = np.sqrt(sum(c * c for c in comps) + symbol.mass**2)
        g = [c / s for c in comps]
    else:
        g = [np.sin(c) for c in comps]
    return np.stack(np.broadcast_arrays(*[np.asarray(x) + 0.0 for x in g]))


def hessian(symbol, xi):
    """Analytic Hessian at a single point."""
    x = np.asarray(xi, dtype=float)
    d = symbol.d
    if symbol.kind == "polynomial":
        p = dict(symbol.coeffs)
        H = np.empty((d, d), dtype=complex)
        for i in range(d):
            pi = _pdiff(p, i)
            for j in range(d):
                H[i, j] = _poly_eval(_pdiff(pi, j), list(x))
        return H.real if symbol.is_real else H
    if symbol.kind == "radial_polynomial":
        s = float(x @ x)
        cs = symbol.coeffs
        d1 = sum(j * cs[j] * s ** (j - 1) for j in range(1, len(cs)))
        d2 = sum(j * (j - 1) * cs[j] * s ** (j - 2) for j in range(2, len(cs)))
        return 2.0 * d1 * np.eye(d) + 4.0 * d2 * np.outer(x, x)
    if symbol.kind == "chandrasekhar":
        s = math.sqrt(float(x @ x) + symbol.mass**2)
        return np.eye(d) / s - np.outer(x, x) / s**3
    return np.diag(np.cos(x))


# --------------------------------------------------------------------------
# Fermi points


def householder_to(u, target):
    """Orthogonal reflection mapping the unit vector u onto target."""
    u = np.asarray(u, dtype=float)
    v = u - target
    nv = float(v @ v)
    if nv < 1e-30:
        return np.eye(len(u))
    return np.eye(len(u)) - 2.0 * np.outer(v, v) / nv


@dataclass(frozen=True)
class FermiPoint:
    """A point eta on {T = lam} with its normal-form data.

    ``rotation`` maps grad T(eta) onto |grad T(eta)| e_d.  ``frame`` does
    the same and additionally diagonalizes the curvature form, ordering
    the tangential axes by decreasing |curvature| (``curvatures`` follow
    that order).
    """

    lam: float
    eta: np.ndarray
    gradient: np.ndarray
    rotation: np.ndarray
    frame: np.ndarray
    curvatures: np.ndarray
    k_nonvanishing: int

    def to_json(self):
        return {
            "lambda": self.lam,
            "eta": self.eta.tolist(),
            "gradient": self.gradient.tolist(),
            "rotation": self.rotation.tolist(),
            "frame": self.frame.tolist(),
            "curvatures": self.curvatures.tolist(),
            "k_nonvanishing": self.k_nonvanishing,
        }


def fermi_data(symbol, lam, eta):
    """Gradient, rotation and curvature data at a known point eta."""
    eta = np.asarray(eta, dtype=float)
    d = symbol.d
    g = np.real(gradient(symbol, eta)).astype(float)
    gn = float(np.linalg.norm(g))
    if gn <= TOL_REGULAR:
        raise CriticalPoint(f"|grad T| = {gn:.3g} at eta = {eta.tolist()}")
    e_d = np.eye(d)[-1]
    R = householder_to(g / gn, e_d)
    H = np.real(hessian(symbol, eta))
    Ht = R @ H @ R.T
    block = Ht[: d - 1, : d - 1] / gn
    if d > 1:
        w, Q = np.linalg.eigh(0.5 * (block + block.T))
        order = np.argsort(-np.abs(w), kind="stable")
        w, Q = w[order], Q[:, order]
        for j in range(Q.shape[1]):
            if Q[np.argmax(np.abs(Q[:, j])), j] < 0:
                Q[:, j] = -Q[:, j]
        B = np.eye(d)
        B[: d - 1, : d - 1] = Q.T
        frame = B @ R
    else:
        w = np.zeros(0)
        frame = R
    k = int(np.sum(np.abs(w) > TOL_CURVATURE))
    return FermiPoint(float(lam), eta, g, R, frame, w, k)


def find_fermi_point(symbol, lam, hint, t_max=None, samples=20001):
    """Locate the first crossing of {T = lam} along the ray t * hint, t >= 0.

    Raises
    ------
    NoRoot
        If T - lam does not change sign on the scanned segment.
    CriticalPoint
        If the gradient vanishes at the crossing.
    """
    u = np.asarray(hint, dtype=float)
    if u.shape != (symbol.d,) or not np.linalg.norm(u) > 0:
        raise ConfigInvalid("hint must be a nonzero d-vector")
    u = u / np.linalg.norm(u)
    lam = float(lam)

    def F(t):
        return float(np.real(evaluate(symbol, t * u))) - lam

    tol = tol_fermi(lam)
    if abs(F(0.0)) <= tol:
        t_star = 0.0
    else:
        if t_max is None:
            t_max = 2.0 * math.pi * math.sqrt(symbol.d) if symbol.kind == "discrete_cosine" else 1e3
        ts = np.linspace(0.0, t_max, samples)
        vals = np.real(evaluate(symbol, [t * ts for t in u])) - lam
        sign = np.sign(vals)
        hits = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
        if len(hits) == 0:
            raise NoRoot(f"T - {lam} has no sign change on the ray up to t = {t_max}")
        i = hits[0]
        if vals[i] == 0:
            t_star = ts[i]
        elif vals[i + 1] == 0:
            t_star = ts[i + 1]
        else:
            t_star = brentq(F, ts[i], ts[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    eta = t_star * u
    if abs(F(t_star)) > tol:
        raise NoRoot(f"root polish failed: |T - lam| = {abs(F(t_star)):.3g}")
    return fermi_data(symbol, lam, eta)


# --------------------------------------------------------------------------
# Taylor support and Newton polyhedron


@dataclass(frozen=True)
class TaylorSupport:
    eta: np.ndarray
    entries: dict
    newton_vertices: tuple
    k_max: int
    zero_tol: float
    truncated: bool = False

    @property
    def support(self):
        return tuple(sorted(self.entries))

    def evaluate(self, xi):
        return _poly_eval(self.entries, _components(xi, len(self.eta)))


def newton_vertices(points):
    """Vertices of conv(points) + R_+^d."""
    pts = sorted(set(tuple(p) for p in points))
    if not pts:
        return ()
    P = np.array(pts, dtype=float)
    keep = [
        i for i, a in enumerate(P)
        if not any(j != i and np.all(P[j] <= a) for j in range(len(P)))
    ]
    verts = []
    for i in keep:
        others = [j for j in keep if j != i]
        if not others:
            verts.append(pts[i])
            continue
        B = P[others]
        res = linprog(
            np.zeros(len(others)),
            A_ub=B.T,
            b_ub=P[i],
            A_eq=np.ones((1, len(others))),
            b_eq=[1.0],
            bounds=[(0, None)] * len(others),
            method="highs",
        )
        if res.status != 0:
            verts.append(pts[i])
    return tuple(verts)


def taylor_support(symbol, eta, k_max, zero_tol=1e-12, lam=None):
    """Taylor coefficients of a = T(eta + .) - lam at the origin.

    With ``lam=None`` the value T(eta) is subtracted, which is the
    natural choice when eta lies on the Fermi surface.
    """
    if symbol.kind not in ("polynomial", "radial_polynomial"):
        raise UnsupportedKind(f"Taylor support needs a polynomial symbol, got {symbol.kind}")
    d = symbol.d
    eta = np.asarray(eta, dtype=float)
    shifted = substitute_affine(symbol.poly(), np.eye(d), eta)
    zero = (0,) * d
    c0 = shifted.get(zero, 0.0)
    shifted[zero] = c0 - (c0 if lam is None else lam)
    entries = {
        a: c for a, c in shifted.items() if sum(a) <= k_max and abs(c) > zero_tol
    }
    truncated = any(sum(a) > k_max and abs(c) > zero_tol for a, c in shifted.items())
    return TaylorSupport(eta, entries, newton_vertices(entries), k_max, zero_tol, truncated)


@dataclass(frozen=True)
class GammaCondition:
    holds: bool
    margin: Fraction


def _frac(x):
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(1000)


def check_gamma_condition(ts, gamma):
    """Check sum_j gamma_j alpha_j >= 1 on the Taylor support, exactly."""
    if not ts.entries:
        raise EmptySupport("Taylor support is empty")
    g = [_frac(x) for x in gamma]
    margin = min(sum(gj * aj for gj, aj in zip(g, a)) for a in ts.entries) - 1
    return GammaCondition(margin >= 0, margin)


# --------------------------------------------------------------------------
# real-potential condition


def _check_even_real(p):
    for a, c in p.items():
        if abs(np.imag(c)) > 0:
            raise NotEven("real-potential construction needs real coefficients")
        if sum(a) % 2 and abs(c) > 0:
            raise NotEven(f"odd monomial {a} with coefficient {c}")


def real_frame(symbol, eta):
    """Linear map A = |eta| Q with A e_1 = eta (Q a Householder reflection)."""
    eta = np.asarray(eta, dtype=float)
    r = float(np.linalg.norm(eta))
    if r == 0:
        raise CriticalPoint("eta = 0 cannot be mapped to e_1")
    Q = householder_to(np.eye(symbol.d)[0], eta / r)
    return r * Q


def normalized_real_poly(symbol, eta):
    """Coefficients of xi -> T(A xi) with A e_1 = eta; T must be even and real."""
    p = symbol.poly()
    _check_even_real(p)
    A = real_frame(symbol, eta)
    return _prune(substitute_affine(p, A, np.zeros(symbol.d)), 1e-12), A


def check_real_potential_condition(symbol, eta, m):
    """True iff the only odd-order index with alpha_1 = m in the Taylor
    support of T(A(e_1 + .)) is m e_1."""
    if m < 1 or m % 2 == 0:
        raise ConfigInvalid("m must be an odd positive integer")
    q, _ = normalized_real_poly(symbol, eta)
    d = symbol.d
    shifted = _prune(substitute_affine(q, np.eye(d), np.eye(d)[0]), 1e-12)
    hits = {a for a in shifted if sum(a) % 2 == 1 and a[0] == m}
    return hits == {(m,) + (0,) * (d - 1)}


def derivative_e1(symbol, eta, m):
    """d_1^m of xi -> T(A xi) at e_1."""
    q, _ = normalized_real_poly(symbol, eta)
    for _ in range(m):
        q = _pdiff(q, 0)
    return float(np.real(_poly_eval(q, list(np.eye(symbol.d)[0]))))
