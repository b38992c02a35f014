import dataclasses
import gc
import math

import numpy as np
import pytest

from embedded_eigs.constructions import build, preset
from embedded_eigs.errors import ThresholdViolated
from embedded_eigs.grid import GridField, GridSpec
from embedded_eigs.verify import (
    Criterion,
    envelope,
    lq_scan,
    residual,
    scan,
    theoretical_slope,
    verify,
)


@pytest.fixture(scope="module")
def thm1_2d():
    return build(preset("thm1-2d"), 1)


def test_criterion_rejects_missing_values():
    assert Criterion("a", 1.0, "<=", 2.0).passed
    assert not Criterion("a", None, "<=", 2.0).passed
    assert not Criterion("a", math.nan, "<=", 2.0).passed
    assert not Criterion("a", math.inf, "<", math.inf).passed


def test_thm1_policy_realness_reported_only(thm1_2d):
    rep = verify(thm1_2d, checks=("residual", "envelope", "realness"))
    real = [c for c in rep.criteria if c.name == "realness"][0]
    assert not real.passed and not real.required
    assert rep.passed


def test_threshold_override_fails_report(thm1_2d):
    rep = verify(thm1_2d, checks=("residual",), thresholds={"residual_doubled": 1e-12})
    assert not rep.passed


def test_zero_potential_gives_zero_envelope(thm1_2d):
    zero = dataclasses.replace(thm1_2d, V=GridField(thm1_2d.spec, np.zeros(thm1_2d.spec.shape, complex), "V"))
    s = scan(None, [1], builds={1: zero})
    assert s["envelope"]["per_n"][1]["C"] == 0.0


def test_wrong_weight_is_flagged():
    cfg = preset("thm1-2d")
    cfg = dataclasses.replace(cfg, grid=GridSpec.make(2, (16.0, 32.0), (256, 256)),
                              params={**cfg.params, "N": 2, "tail_tol": 1.0})
    c = build(cfg, 1)
    assert envelope(c)["growth"] < 1.5
    # |x'|^4 in place of |x'|^2 overweights the tangential directions
    assert envelope(c, lambda x: 1 + x[0] ** 4 + np.abs(x[1]))["growth"] > 2.0


def test_theoretical_slopes():
    c3 = build(preset("thm1-3d"), 1)
    assert theoretical_slope(c3, 3) == pytest.approx(-1 / 3)
    assert theoretical_slope(c3, 6) == pytest.approx(-2 / 3)
    assert theoretical_slope(c3, math.inf) == -1
    del c3
    cyl = build(preset("thm2-cylinder"), 1)
    # -(1 - 1/q - k/(2q) - (d-k-1)/(3q)) with d=3, k=1, q=6
    assert theoretical_slope(cyl, 6) == pytest.approx(-(1 - 1 / 6 - 1 / 12 - 1 / 18))


def test_q_threshold(thm1_2d):
    with pytest.raises(ThresholdViolated):
        lq_scan(preset("thm1-2d"), 1.5, [1, 2], builds={1: thm1_2d})


def test_report_json_has_no_infinities(thm1_2d):
    rep = verify(thm1_2d)
    assert "Infinity" not in rep.dumps() and "NaN" not in rep.dumps()


@pytest.mark.parametrize("name,n,limit", [
    ("thm1-2d", 1, 1e-6),
    ("thm2-cylinder", 1, 1e-6),
    ("dirac-2d", 1, 1e-6),
    ("radial-3d-small", 1, 1e-6),
    ("chandrasekhar-2d", 4, 1e-6),
    ("real-3d", 1, 1e-6),
])
def test_doubled_residual_invariant(name, n, limit):
    c = build(preset(name), n)
    r = residual(c)
    del c
    gc.collect()
    assert r["doubled"] is not None
    assert r["doubled"] <= limit
