"""Periodic grids and the FFT engine for Fourier multipliers.

Sample points are ``x_j = -L + (j + offset) * dx`` with ``dx = 2L/N`` per
axis, so a grid covers the box [-L, L)^d.  Frequencies are the grid
frequencies ``pi k / L`` with k in FFT order.  Half-widths and point
counts may differ between axes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.special import erfc

from .errors import AllMasked, ConfigInvalid, NonFinite, SymbolSingular


def _tuple(v, d, cast=float):
    if np.ndim(v) == 0:
        return (cast(v),) * d
    v = tuple(cast(x) for x in v)
    if len(v) != d:
        raise ConfigInvalid(f"expected {d} per-axis values, got {len(v)}")
    return v


@dataclass(frozen=True)
class GridSpec:
    L: tuple
    N: tuple
    offset: tuple

    def __post_init__(self):
        if not len(self.L) == len(self.N) == len(self.offset):
            raise ConfigInvalid("L, N and offset must have one entry per axis")
        for n in self.N:
            if n < 16 or n & (n - 1):
                raise ConfigInvalid(f"points per axis must be a power of two >= 16, got {n}")
        for L in self.L:
            if not L > 0:
                raise ConfigInvalid("box half-width must be positive")
        for o in self.offset:
            if not 0 <= o < 1:
                raise ConfigInvalid("offsets must lie in [0, 1)")

    @classmethod
    def make(cls, d, L, N, offset=0.0):
        return cls(_tuple(L, d), _tuple(N, d, int), _tuple(offset, d))

    @property
    def d(self):
        return len(self.N)

    @property
    def shape(self):
        return tuple(self.N)

    @property
    def spacing(self):
        return tuple(2.0 * L / N for L, N in zip(self.L, self.N))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self, dtype=float):
        out = []
        for L, N, o in zip(self.L, self.N, self.offset):
            L, o = dtype(L), dtype(o)
            j = np.arange(N, dtype=dtype)
            out.append(-L + (j + o) * (2 * L / N))
        return out

    def coords(self, dtype=float):
        """Sparse (broadcastable) coordinate arrays."""
        return np.meshgrid(*self.axes(dtype), indexing="ij", sparse=True)

    def frequency_axes(self, dtype=float, real=False):
        pi = np.arccos(dtype(-1))
        out = []
        for a, (L, N) in enumerate(zip(self.L, self.N)):
            if real and a == self.d - 1:
                k = np.arange(N // 2 + 1, dtype=dtype)
            else:
                k = (np.fft.fftfreq(N) * N).astype(dtype)
            out.append(k * (pi / dtype(L)))
        return out

    def freqs(self, dtype=float, real=False):
        return np.meshgrid(*self.frequency_axes(dtype, real), indexing="ij", sparse=True)

    def refined(self, factor=2):
        return GridSpec(self.L, tuple(factor * n for n in self.N), self.offset)

    def scaled(self, factors):
        return GridSpec(tuple(L * f for L, f in zip(self.L, factors)), self.N, self.offset)

    def with_offset(self, offset):
        return GridSpec(self.L, self.N, _tuple(offset, self.d))

    def to_json(self):
        return {"d": self.d, "L": list(self.L), "N": list(self.N), "offset": list(self.offset)}

    @classmethod
    def from_json(cls, obj):
        d = int(obj["d"]) if "d" in obj else len(obj["N"])
        return cls.make(d, obj["L"], obj["N"], obj.get("offset", 0.0))


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples on a grid; ``values`` has shape ``spec.shape + channel_shape``."""

    spec: GridSpec
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.values.shape[: self.spec.d] != self.spec.shape:
            raise ConfigInvalid("field shape does not match its grid")
        if not np.all(np.isfinite(self.values)):
            raise NonFinite(f"non-finite samples in field {self.label!r}")

    @property
    def channel_shape(self):
        return self.values.shape[self.spec.d:]

    @property
    def channels(self):
        return int(np.prod(self.channel_shape)) if self.channel_shape else 1

    def pointwise_abs(self):
        v = np.abs(self.values)
        if self.channel_shape:
            v = np.sqrt(np.sum(v * v, axis=tuple(range(self.spec.d, v.ndim))))
        return v


def sample(fn, spec, label="", dtype=float):
    """Evaluate ``fn`` on the sparse coordinate arrays of ``spec``."""
    vals = np.asarray(fn(spec.coords(dtype)))
    vals = np.broadcast_to(vals, spec.shape + vals.shape[spec.d:] if vals.ndim > spec.d else spec.shape)
    return GridField(spec, np.array(vals), label)


# --------------------------------------------------------------------------
# tapering


@dataclass(frozen=True)
class Taper:
    """Smooth box window used to make polynomially decaying fields periodic.

    Along axis j the window is ``erfc((|x| - (L - 4 s)) / s) / 2`` with a
    physical width s; the core, where the window equals one to about
    1e-12, is ``|x| <= L - 9 s - margin``.
    """

    width: tuple
    margin: tuple

    @classmethod
    def for_grid(cls, spec, cells=3.0, margin=0.0):
        return cls(tuple(cells * dx for dx in spec.spacing), _tuple(margin, spec.d))

    def window(self, spec, dtype=float):
        w = 1.0
        for x, L, s in zip(spec.coords(dtype), spec.L, self.width):
            w = w * (0.5 * erfc((np.abs(x.astype(float)) - (L - 4 * s)) / s)).astype(dtype)
        return np.broadcast_to(w, spec.shape)

    def core(self, spec):
        c = np.ones(spec.shape, dtype=bool)
        for x, L, s, m in zip(spec.coords(), spec.L, self.width, self.margin):
            c = c & (np.abs(x) <= L - 9 * s - m)
        return c

    def scaled(self, factors):
        return Taper(
            tuple(s * f for s, f in zip(self.width, factors)),
            tuple(m * f for m, f in zip(self.margin, factors)),
        )

    def to_json(self):
        return {"width": list(self.width), "margin": list(self.margin)}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["width"]), tuple(obj["margin"]))


# --------------------------------------------------------------------------
# multipliers


_CDTYPE = {"double": np.complex128, "extended": np.clongdouble}
_RDTYPE = {"double": np.float64, "extended": np.longdouble}


def symbol_on_grid(a, spec, scale=None, gamma=None, precision="double", real=False):
    """Evaluate a symbol callable on the (possibly h-scaled) grid frequencies."""
    xi = spec.freqs(_RDTYPE[precision], real=real)
    if scale is not None:
        h = _RDTYPE[precision](scale.h if hasattr(scale, "h") else scale)
        g = [1.0] * spec.d if gamma is None else [float(x) for x in gamma]
        xi = [h ** _RDTYPE[precision](gj) * x for gj, x in zip(g, xi)]
    sym = np.asarray(a(xi))
    if not np.all(np.isfinite(sym)):
        raise SymbolSingular("symbol is not finite at a grid frequency")
    return sym


def fft_values(values, d, precision="double", inverse=False, real=False, shape=None):
    axes = tuple(range(d))
    if real:
        if inverse:
            return sfft.irfftn(values, s=shape, axes=axes)
        return sfft.rfftn(values, axes=axes)
    if precision == "extended":
        values = values.astype(np.clongdouble)
    return (sfft.ifftn if inverse else sfft.fftn)(values, axes=axes)


def apply_multiplier(a, f, scale=None, gamma=None, precision="double", real=False, label=None):
    """Apply the Fourier multiplier a(h xi) to a sampled field.

    Parameters
    ----------
    a : callable
        Takes a list of d broadcastable frequency arrays and returns the
        symbol values; a trailing (K, K) axis pair marks a matrix symbol
        acting on spinor fields.
    f : GridField
    scale : ScaleParam, optional
        Evaluates ``a(h^gamma_1 xi_1, ..., h^gamma_d xi_d)``.
    precision : {"double", "extended"}
        ``"extended"`` runs the transforms in long double.
    real : bool
        Use real transforms; valid only for real input and a symbol with
        a(-xi) = conj(a(xi)).

    Returns
    -------
    GridField
        The result; in extended precision the values stay in long double.
    """
    spec = f.spec
    d = spec.d
    sym = symbol_on_grid(a, spec, scale, gamma, precision, real)
    F = fft_values(f.values, d, precision, real=real)
    extra = F.ndim - d
    if sym.ndim >= d + 2 and sym.shape[-1] == sym.shape[-2] and extra == 1:
        F = np.einsum("...ij,...j->...i", sym, F)
    else:
        F = sym.reshape(sym.shape + (1,) * extra) * F if sym.ndim == d else sym * F
    out = fft_values(F, d, precision, inverse=True, real=real, shape=spec.shape if real else None)
    return GridField(spec, out, label if label is not None else f"multiplier({f.label})")


def spectral_derivative(f, alpha, with_top_energy=False):
    """d^alpha f by spectral differentiation.

    With ``with_top_energy`` also returns the fraction of the derivative's
    spectral energy in the top third of the band along any axis.
    """
    spec = f.spec
    xi = spec.freqs()
    F = np.fft.fftn(f.values, axes=tuple(range(spec.d)))
    m = 1.0
    for x, k in zip(xi, alpha):
        if k:
            m = m * (1j * x) ** k
    G = m * F
    out = np.fft.ifftn(G, axes=tuple(range(spec.d)))
    if np.isrealobj(f.values) and all(k % 1 == 0 for k in alpha):
        out = out.real
    if not with_top_energy:
        return out
    top = np.zeros(spec.shape, dtype=bool)
    for x, L, N in zip(xi, spec.L, spec.N):
        top = top | (np.abs(x) > (2.0 / 3.0) * np.pi * N / (2 * L))
    e = np.abs(G) ** 2
    total = float(e.sum())
    return out, (float(e[top].sum()) / total if total > 0 else 0.0)


# --------------------------------------------------------------------------
# norms, envelopes, ratios


def inner_mask(spec, fraction=0.8):
    m = np.ones(spec.shape, dtype=bool)
    for x, L in zip(spec.coords(), spec.L):
        m = m & (np.abs(x) <= fraction * L)
    return m


def _abs_values(f):
    return f.pointwise_abs() if isinstance(f, GridField) else np.abs(np.asarray(f))


def lq_norm(f, q, mask=None):
    """(sum |f|^q dx^d)^(1/q) over points not excluded by ``mask``."""
    v = _abs_values(f)
    if mask is not None:
        v = v[~mask]
    else:
        v = v.ravel()
    if q == np.inf:
        return float(v.max()) if v.size else 0.0
    return float(np.sum(v**q) * f.spec.cell_volume) ** (1.0 / q)


@dataclass(frozen=True)
class Envelope:
    C: float
    argmax: tuple


def envelope_constant(f, wfn, mask=None, inner=0.8):
    """max |f| * wfn over the central ``inner`` fraction of the box."""
    spec = f.spec
    w = wfn(spec.coords()) if callable(wfn) else (wfn.values if isinstance(wfn, GridField) else wfn)
    prod = _abs_values(f) * np.real(w)
    region = inner_mask(spec, inner)
    if mask is not None:
        region = region & ~mask
    if not region.any():
        return Envelope(0.0, ())
    vals = np.where(region, prod, -np.inf)
    idx = np.unravel_index(int(np.argmax(vals)), spec.shape)
    point = tuple(float(ax[i]) for ax, i in zip(spec.axes(), idx))
    return Envelope(float(vals[idx]), point)


@dataclass(frozen=True, eq=False)
class Ratio:
    ratio: GridField
    mask: np.ndarray

    @property
    def masked_fraction(self):
        return float(self.mask.mean())


def pointwise_ratio(num, den, guard, reference=None, domain=None, max_masked=0.5):
    """num / den where the denominator is safely away from zero.

    A point is kept when ``|den| > guard * ref`` with ``ref`` the global
    maximum of |den| or, if given, a local reference scale (an array of
    the grid shape).  Points outside ``domain`` are always excluded; the
    masked fraction is counted relative to the domain.  Excluded points
    carry ratio 0.
    """
    spec = num.spec
    dv = den.values if isinstance(den, GridField) else np.asarray(den)
    nv = num.values
    ad = np.abs(dv)
    ref = ad.max() if reference is None else np.abs(reference)
    keep = ad > guard * ref
    if domain is not None:
        keep = keep & domain
    dom_count = int(domain.sum()) if domain is not None else keep.size
    masked_in_domain = dom_count - int(keep.sum())
    if dom_count == 0 or masked_in_domain > max_masked * dom_count:
        raise AllMasked(f"{masked_in_domain} of {dom_count} points masked")
    safe = np.where(keep, dv, 1.0)
    r = np.where(keep.reshape(keep.shape + (1,) * (nv.ndim - keep.ndim)), nv / safe.reshape(safe.shape + (1,) * (nv.ndim - safe.ndim)), 0.0)
    return Ratio(GridField(spec, r, "ratio"), ~keep)


# --------------------------------------------------------------------------
# trigonometric interpolation onto refined grids


def _refine_axis(v, axis, N, factor, o_old, o_new):
    F = np.fft.fft(np.moveaxis(v, axis, -1), axis=-1)
    M = factor * N
    k = np.fft.fftfreq(N) * N
    # phase from the shift of the first sample: (o_new / factor - o_old) cells
    shift = o_new / factor - o_old
    phase = np.exp(2j * np.pi * k * shift / N)
    G = np.zeros(F.shape[:-1] + (M,), dtype=complex)
    half = N // 2
    G[..., :half] = F[..., :half] * phase[:half]
    G[..., M - half + 1:] = F[..., half + 1:] * phase[half + 1:]
    ny = F[..., half]
    G[..., half] = 0.5 * ny * np.exp(2j * np.pi * half * shift / N)
    G[..., M - half] = 0.5 * ny * np.exp(-2j * np.pi * half * shift / N)
    out = np.fft.ifft(G, axis=-1) * factor
    return np.moveaxis(out, -1, axis)


def refine(f, factor=2, offset=None):
    """Trigonometric interpolation of ``f`` onto a grid with ``factor``
    times more points per axis (same box; same offset fraction unless
    ``offset`` is given)."""
    spec = f.spec
    new = GridSpec(spec.L, tuple(factor * n for n in spec.N), spec.offset if offset is None else _tuple(offset, spec.d))
    v = f.values
    real = np.isrealobj(v)
    for a in range(spec.d):
        v = _refine_axis(v, a, spec.N[a], factor, spec.offset[a], new.offset[a])
    if real:
        v = v.real
    return GridField(new, v, f"refined({f.label})")


def common_points(coarse, fine):
    """Index slices of ``fine`` that coincide with all points of ``coarse``,
    or None when the grids share no points."""
    slices = []
    for Lc, Nc, oc, Nf, of in zip(coarse.L, coarse.N, coarse.offset, fine.N, fine.offset):
        r = Nf // Nc
        start = oc * r - of
        if Nf % Nc or abs(start - round(start)) > 1e-9:
            return None
        slices.append(slice(int(round(start)), None, r))
    return tuple(slices)


# --------------------------------------------------------------------------
# serialization

GF_MAGIC = "gridfield-v1"


def write_gf(path, values, header):
    """Write a JSON header line followed by little-endian complex128 samples."""
    header = dict(header)
    header["format"] = GF_MAGIC
    header["shape"] = list(values.shape)
    header["dtype"] = "<c16"
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(values, dtype="<c16").tobytes())


def read_gf(path):
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != GF_MAGIC:
            raise ConfigInvalid(f"{path}: not a grid field file")
        data = np.frombuffer(fh.read(), dtype="<c16")
    return header, data.reshape(header["shape"]).astype(complex)


def save_field(path, f, extra=None):
    write_gf(path, f.values, {"spec": f.spec.to_json(), "label": f.label, **(extra or {})})


def load_field(path):
    header, values = read_gf(path)
    return GridField(GridSpec.from_json(header["spec"]), values, header.get("label", ""))


def export_csv(path, f, axes=(0,), fixed=None):
    """Write a 1-D or 2-D slice through the grid point nearest the origin."""
    spec = f.spec
    ax = spec.axes()
    idx = [int(np.argmin(np.abs(a))) for a in ax] if fixed is None else list(fixed)
    sl = [slice(None) if j in axes else idx[j] for j in range(spec.d)]
    vals = f.values[tuple(sl)]
    grids = np.meshgrid(*[ax[j] for j in axes], indexing="ij")
    lines = [",".join([f"x{j}" for j in axes] + ["re", "im"])]
    flat = [g.ravel() for g in grids]
    v = np.asarray(vals).reshape(len(flat[0]), -1)[:, 0]
    for i in range(len(v)):
        lines.append(",".join([repr(float(g[i])) for g in flat] + [repr(float(v[i].real)), repr(float(np.imag(v[i])))]))
    Path(path).write_text("\n".join(lines) + "\n")
