"""
Unit tests for artifact_writer.py

Config embedding and byte-for-byte reproducible artifacts.
"""

import json

import numpy as np
import pandas as pd
import pytest

from artifact_writer import ArtifactWriter, dumps, read_config_line, read_csv

CONFIG = {"job": {"command": "eval", "params": {"u": 0.9}, "seed": 0}, "settings": {"numerics": {"grid_size": 65}}}


@pytest.mark.unit
class TestJsonArtifacts:
    """JSON artifacts"""

    def test_config_embedded(self, tmp_path):
        writer = ArtifactWriter(str(tmp_path / "out"), CONFIG)
        path = writer.write_json("eval.json", {"value": np.float64(0.5), "xs": np.arange(3)})
        document = json.loads(path.read_text())
        assert document["config"] == CONFIG
        assert document["value"] == 0.5
        assert document["xs"] == [0, 1, 2]
        assert writer.written == [path]

    def test_canonical_text(self):
        assert dumps({"b": 1, "a": 2}) == '{\n  "a": 2,\n  "b": 1\n}\n'

    def test_unserializable(self):
        with pytest.raises(TypeError):
            dumps({"x": object()})

    def test_no_temp_files_left(self, tmp_path):
        writer = ArtifactWriter(str(tmp_path), CONFIG)
        writer.write_json("a.json", {})
        assert sorted(p.name for p in tmp_path.iterdir()) == ["a.json"]


@pytest.mark.unit
class TestCsvArtifacts:
    """CSV artifacts with the config comment line"""

    def test_round_trip(self, tmp_path):
        frame = pd.DataFrame({"x": [0.1, 0.2], "f": [0.3, 0.4]})
        path = ArtifactWriter(str(tmp_path), CONFIG).write_csv("eval.csv", frame)
        assert path.read_text().startswith("# config: {")
        assert read_config_line(path) == CONFIG
        pd.testing.assert_frame_equal(read_csv(path), frame)

    def test_full_precision(self, tmp_path):
        value = 1.0 / 3.0
        path = ArtifactWriter(str(tmp_path), CONFIG).write_csv("t.csv", pd.DataFrame({"x": [value]}))
        assert read_csv(path)["x"].iloc[0] == value

    def test_missing_config_line(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("x\n1\n")
        with pytest.raises(ValueError):
            read_config_line(path)


@pytest.mark.unit
def test_rewrite_is_byte_identical(tmp_path):
    frame = pd.DataFrame({"x": np.linspace(0.0, 1.0, 7)})
    first = ArtifactWriter(str(tmp_path / "a"), CONFIG)
    second = ArtifactWriter(str(tmp_path / "b"), CONFIG)
    for writer in (first, second):
        writer.write_csv("t.csv", frame)
        writer.write_json("t.json", {"rows": len(frame)})
    for name in ("t.csv", "t.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
