import numpy as np
import pytest

from embedded_eigs.constructions import build, preset
from embedded_eigs.errors import ConfigInvalid
from embedded_eigs.storage import load_construction, save_construction
from embedded_eigs.verify import verify


@pytest.mark.parametrize("name", ["thm1-2d", "dirac-2d"])
def test_round_trip_is_bit_identical(tmp_path, name):
    c = build(preset(name), 2)
    save_construction(c, tmp_path)
    back = load_construction(tmp_path)
    assert np.array_equal(back.V.values, c.V.values)
    assert back.V.values.dtype == c.V.values.dtype
    assert np.array_equal(back.mask, c.mask)
    assert verify(back).dumps() == verify(c).dumps()


def test_extra_manifest_entries(tmp_path):
    c = build(preset("thm1-2d"), 1)
    m = save_construction(c, tmp_path, extra={"run": {"command": "construct"}})
    assert m["run"]["command"] == "construct"


def test_missing_or_foreign_directory(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_construction(tmp_path)
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(ConfigInvalid):
        load_construction(tmp_path)
