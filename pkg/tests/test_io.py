import json

import numpy as np
import pytest

from conftest import grid, homogeneous_geometry
from nlqed.coupling import compute_alpha, decimated_indices
from nlqed.errors import ConfigError
from nlqed.greens import green_1d, green_fields
from nlqed.io import load_config, read_alpha_binary, write_alpha_binary, write_alpha_csv, write_csv, write_green_csv, write_json


def test_csv_format(tmp_path):
    p = tmp_path / "a.csv"
    write_csv(p, ["x", "y"], [(0.1, 1 / 3), (2, "tag")])
    data = p.read_bytes()
    assert b"\r" not in data
    assert data.decode().splitlines() == ["x,y", "0.10000000000000001,0.33333333333333331", "2,tag"]


def test_json_sorted_and_plain(tmp_path):
    p = tmp_path / "a.json"
    write_json(p, {"b": np.float64(1.5), "a": np.arange(2), "c": 1 + 2j})
    doc = json.loads(p.read_text())
    assert list(doc) == ["a", "b", "c"] and doc["c"] == [1.0, 2.0]


def test_alpha_binary_roundtrip(tmp_path):
    geom = homogeneous_geometry()
    g = grid(64)
    gs = green_fields(geom, [0.5, 1.0, 1.5], g)
    idx = decimated_indices(g, 7)
    alpha = compute_alpha(None, geom, gs, 1.0, 0.5, g, idx, idx)
    write_alpha_binary(tmp_path / "a.bin", alpha)
    back = read_alpha_binary(tmp_path / "a.bin")
    assert np.array_equal(back["values"], alpha.values)
    assert back["carriers"] == (1.5, 1.0, 0.5)
    assert np.array_equal(back["index"], idx)
    header = (tmp_path / "a.bin").read_bytes()[:4]
    assert header == b"NLQA"
    write_alpha_csv(tmp_path / "a.csv", alpha)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,x3,re,im" and len(lines) == 1 + alpha.values.size


def test_green_csv(tmp_path):
    g = grid(32)
    green = green_1d(homogeneous_geometry(), 1.0, g)
    write_green_csv(tmp_path / "g.csv", green, g)
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert len(rows) == 1 + g.size**2
    x, xp, re, im = map(float, rows[2].split(","))
    assert (x, xp) == (0.0, g.h) and complex(re, im) == green.values[0, 1]


def write_config(tmp_path, doc):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    return p


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    doc = {"materials": {"m": {"epsilon": [2, 0.1]}},
           "geometry": {"domain": 4, "layers": [{"from": 0, "to": 4, "material": "nope"}]}}
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, doc))
    doc["geometry"]["layers"][0]["material"] = "m"
    doc["grid"] = {"intervals": 10}
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, doc))


def test_config_inline_material_and_tolerances(tmp_path):
    doc = {"seed": 3, "tolerances": {"noise": 0.1},
           "geometry": {"domain": 4, "layers": [{"from": 0, "to": 4, "material": {"epsilon": [2, 0.1]}}]},
           "grid": {"intervals": 64}}
    cfg = load_config(write_config(tmp_path, doc))
    assert cfg.seed == 3 and cfg.tolerances["noise"] == 0.1 and cfg.tolerances["fredholm"] == 5e-2
    assert cfg.grid(1).intervals == 128
    assert cfg.geometry().eps_layers(1.0)[0] == 2 + 0.1j
