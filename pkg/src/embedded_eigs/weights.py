"""Anisotropic weights rho, exponent vectors gamma and semiclassical scaling.

A weight is described by coordinate blocks B with exponents gamma_B:

    rho(x)^2 = 1 + sum_B |x_B|^(2 / gamma_B)

so that rho is homogeneous of degree one under x_j -> t^(1/gamma_j) x_j.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigInvalid, GridTooCoarse


def _as_fraction(x):
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(1000)


@dataclass(frozen=True)
class WeightSpec:
    kind: str
    d: int
    blocks: tuple  # ((axes...), gamma as Fraction), ...
    ell: float = 0.0

    def __post_init__(self):
        axes = sorted(a for block, _ in self.blocks for a in block)
        if axes != list(range(self.d)):
            raise ConfigInvalid("weight blocks must partition the coordinates")
        for _, g in self.blocks:
            if not 0 < g <= 1:
                raise ConfigInvalid("gamma components must lie in (0, 1]")

    @classmethod
    def thm1(cls, d, ell=0.0):
        blocks = [(tuple(range(d - 1)), Fraction(1, 2))] if d > 1 else []
        blocks.append(((d - 1,), Fraction(1)))
        return cls("thm1", d, tuple(blocks), ell)

    @classmethod
    def thm2(cls, d, k, ell=0.0, flat=3):
        """k curved directions with gamma 1/2, d-1-k flat ones with gamma 1/flat."""
        if not 0 <= k <= d - 1:
            raise ConfigInvalid("need 0 <= k <= d-1")
        blocks = []
        if k:
            blocks.append((tuple(range(k)), Fraction(1, 2)))
        if d - 1 - k:
            blocks.append((tuple(range(k, d - 1)), Fraction(1, flat)))
        blocks.append(((d - 1,), Fraction(1)))
        return cls("thm2", d, tuple(blocks), ell)

    @classmethod
    def radial(cls, d, ell=0.0):
        return cls("radial", d, ((tuple(range(d)), Fraction(1)),), ell)

    @classmethod
    def custom(cls, d, blocks, ell=0.0):
        return cls("custom", d, tuple((tuple(b), _as_fraction(g)) for b, g in blocks), ell)

    @property
    def gamma(self):
        g = [None] * self.d
        for block, gb in self.blocks:
            for a in block:
                g[a] = gb
        return tuple(g)

    @property
    def gamma_float(self):
        return np.array([float(g) for g in self.gamma])

    @property
    def k(self):
        return sum(len(b) for b, g in self.blocks if g == Fraction(1, 2) and self.kind == "thm2")

    @property
    def s(self):
        """Temperate exponent: rho(x) <= C rho(y) <x - y>^s."""
        return float(max(1 / g for _, g in self.blocks))

    @property
    def temperate_constant(self):
        return 2.0**self.s * np.sqrt(len(self.blocks) + 1)

    def to_json(self):
        return {
            "kind": self.kind,
            "d": self.d,
            "gamma": [str(g) for g in self.gamma],
            "blocks": [[list(b), str(g)] for b, g in self.blocks],
            "ell": self.ell,
        }

    @classmethod
    def from_json(cls, obj):
        blocks = tuple((tuple(b), Fraction(g)) for b, g in obj["blocks"])
        return cls(obj["kind"], int(obj["d"]), blocks, float(obj.get("ell", 0.0)))


@dataclass(frozen=True)
class ScaleParam:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigInvalid("n must be a positive integer")

    @property
    def h(self):
        return 1.0 / self.n


def _blocks_sum(w, x):
    comps = list(x) if isinstance(x, (list, tuple)) else list(np.asarray(x, dtype=float))
    if len(comps) != w.d:
        raise ConfigInvalid(f"expected {w.d} coordinates")
    total = 0.0
    for block, g in w.blocks:
        sq = sum(np.asarray(comps[a]) ** 2 for a in block)
        total = total + (sq if g == 1 else sq ** (1 / float(g)))
    return total


def rho(w, x):
    """Weight value; ``x`` is a d-vector or a list of d broadcastable arrays."""
    return np.sqrt(1.0 + _blocks_sum(w, x))


def scale_point(s, gamma, x):
    """Componentwise h^gamma_j x_j."""
    h = s.h if isinstance(s, ScaleParam) else float(s)
    if isinstance(x, (list, tuple)) and len(x) and np.ndim(x[0]) > 0:
        return [h ** float(g) * xj for g, xj in zip(gamma, x)]
    return np.array([h ** float(g) for g in gamma]) * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class EnvelopeCheck:
    constants: dict  # alpha -> C_alpha on the inner region
    growth: float  # max_alpha C_alpha(inner) / C_alpha(half of inner)
    in_class: bool


def envelope_check(f, w, ell, max_order=2, inner=0.8, growth_limit=2.0):
    """Numerical symbol-class constants of a sampled function.

    C_alpha = max |d^alpha f| rho^(-ell + sum gamma_j alpha_j) over the
    central ``inner`` fraction of the box, derivatives taken spectrally.
    A function is flagged as not in the class when the constants on the
    inner region exceed those on a box of half the size by more than
    ``growth_limit``.
    """
    from .grid import spectral_derivative, inner_mask

    spec = f.spec
    x = spec.coords()
    r = rho(w, x)
    gam = w.gamma_float
    big = inner_mask(spec, inner)
    small = inner_mask(spec, inner / 2)
    alphas = [
        a for a in np.ndindex(*(max_order + 1,) * spec.d) if sum(a) <= max_order
    ]
    constants = {}
    growth = 0.0
    for a in sorted(alphas, key=lambda a: (sum(a), tuple(-v for v in a))):
        df, top = spectral_derivative(f, a, with_top_energy=True)
        if top > 0.01:
            raise GridTooCoarse(
                f"derivative {a}: {100 * top:.2g}% of spectral energy in the top third of the band"
            )
        ratio = np.abs(df) * r ** (-ell + float(np.dot(gam, a)))
        c_big = float(ratio[big].max())
        c_small = float(ratio[small].max())
        constants[a] = c_big
        if c_small > 0:
            growth = max(growth, c_big / c_small)
        elif c_big > 0:
            growth = np.inf
    return EnvelopeCheck(constants, growth, bool(growth <= growth_limit))
