"""Saving and loading constructions.

A construction directory holds ``manifest.json`` (all scalar metadata),
``u.gf`` (the envelope), ``V.gf``, ``ref.gf`` and ``mask.bits`` (packed
bits).  Arrays keep their dtype, so a loaded construction verifies to
the same numbers as the in-memory one.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import symbols as sy
from .constructions import Construction, RegularizationParams, dirac_data
from .errors import ConfigInvalid
from .grid import GridField, GridSpec, Taper, read_gf, write_gf
from .weights import ScaleParam, WeightSpec

FORMAT = "construction-v1"


def _write_array(path, values):
    real = not np.iscomplexobj(values)
    write_gf(path, np.asarray(values), {"real": real})


def _read_array(path):
    header, values = read_gf(path)
    return values.real.copy() if header.get("real") else values


def save_construction(c, directory, extra=None):
    """Write ``c`` into ``directory`` (created if missing); returns the
    manifest dictionary.  ``extra`` entries are added to the manifest."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    data = {k: v for k, v in c.data.items() if k != "dirac"}
    manifest = {
        "format": FORMAT,
        "theorem": c.theorem,
        "lambda": c.lam,
        "n": c.scale.n,
        "grid": c.spec.to_json(),
        "symbol": c.symbol.to_json() if c.symbol is not None else None,
        "weight": c.weight.to_json() if c.weight is not None else None,
        "carrier": np.asarray(c.carrier, dtype=float).tolist(),
        "frame": np.asarray(c.frame, dtype=float).tolist(),
        "taper": c.taper.to_json(),
        "provenance": c.provenance,
        "regularization": c.reg.to_json() if c.reg is not None else None,
        "potential_kind": c.potential_kind,
        "data": data,
        "mask_shape": list(c.mask.shape),
        "files": {"envelope": "u.gf", "V": "V.gf", "reference": "ref.gf", "mask": "mask.bits"},
        **(extra or {}),
    }
    _write_array(out / "u.gf", c.envelope.values)
    _write_array(out / "V.gf", c.V.values)
    _write_array(out / "ref.gf", c.reference.values)
    (out / "mask.bits").write_bytes(np.packbits(c.mask.ravel()).tobytes())
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_construction(directory):
    src = Path(directory)
    try:
        manifest = json.loads((src / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"{src}: no manifest.json") from exc
    if manifest.get("format") != FORMAT:
        raise ConfigInvalid(f"{src}: not a construction directory")
    spec = GridSpec.from_json(manifest["grid"])
    shape = tuple(manifest["mask_shape"])
    bits = np.frombuffer((src / "mask.bits").read_bytes(), dtype=np.uint8)
    mask = np.unpackbits(bits, count=int(np.prod(shape))).astype(bool).reshape(shape)
    data = dict(manifest["data"])
    if manifest["theorem"] == "dirac":
        p = manifest["provenance"]["params"]
        data["dirac"] = dirac_data(p["d"], p["lam"])
    reg = manifest["regularization"]
    return Construction(
        theorem=manifest["theorem"],
        envelope=GridField(spec, _read_array(src / "u.gf"), "u envelope"),
        V=GridField(spec, _read_array(src / "V.gf"), "V"),
        lam=float(manifest["lambda"]),
        scale=ScaleParam(manifest["n"]),
        symbol=sy.SymbolSpec.from_json(manifest["symbol"]) if manifest["symbol"] else None,
        weight=WeightSpec.from_json(manifest["weight"]) if manifest["weight"] else None,
        mask=mask,
        carrier=np.array(manifest["carrier"], dtype=float),
        frame=np.array(manifest["frame"], dtype=float),
        reference=GridField(spec, _read_array(src / "ref.gf"), "reference"),
        taper=Taper.from_json(manifest["taper"]),
        provenance=manifest["provenance"],
        reg=RegularizationParams(**reg) if reg else None,
        potential_kind=manifest["potential_kind"],
        data=data,
    )
