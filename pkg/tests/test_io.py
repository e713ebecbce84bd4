import json

import numpy as np
import pytest

from eccentric.io import (
    MANIFEST_NAME,
    format_value,
    read_embedding_csv,
    sha256_file,
    verify_manifest,
    write_csv,
    write_embedding_csv,
    write_json,
    write_manifest,
)


class TestFormatValue:
    def test_float_round_trips(self):
        for x in (0.1, 1/3, 1e-300, -2.5e17, np.float64(np.pi)):
            assert float(format_value(x)) == float(x)

    def test_int_and_bool(self):
        assert format_value(7) == "7"
        assert format_value(np.int64(-3)) == "-3"
        assert format_value(True) == "true"
        assert format_value(np.bool_(False)) == "false"

    def test_string_passthrough(self):
        assert format_value("abc") == "abc"


class TestCsvJson:
    def test_csv_layout(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b"], [(1, 0.5), (2, 1/3)])
        text = path.read_text()
        lines = text.split("\n")
        assert lines[0] == "a,b"
        assert lines[1] == "1,0.5"
        assert float(lines[2].split(",")[1]) == 1/3
        assert text.endswith("\n") and "\r" not in text

    def test_json_sorted_and_terminated(self, tmp_path):
        path = tmp_path / "t.json"
        write_json(path, {"b": 1, "a": 2})
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")
        assert json.loads(text) == {"a": 2, "b": 1}

    def test_byte_identical_rewrites(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        rows = [(i, np.sin(i)) for i in range(20)]
        write_csv(p1, ["i", "v"], rows)
        write_csv(p2, ["i", "v"], rows)
        assert p1.read_bytes() == p2.read_bytes()


class TestEmbeddingCsv:
    def test_round_trip_without_labels(self, tmp_path):
        rng = np.random.default_rng(0)
        coords = rng.standard_normal((10, 3))
        path = tmp_path / "e.csv"
        write_embedding_csv(path, coords)
        back, labels = read_embedding_csv(path)
        np.testing.assert_array_equal(back, coords)
        assert labels is None

    def test_round_trip_with_labels(self, tmp_path):
        rng = np.random.default_rng(1)
        coords = rng.standard_normal((8, 2))
        labs = np.arange(8) % 3
        path = tmp_path / "e.csv"
        write_embedding_csv(path, coords, labs)
        back, labels = read_embedding_csv(path)
        np.testing.assert_array_equal(back, coords)
        np.testing.assert_array_equal(labels, labs)
        assert path.read_text().split("\n")[0] == "c0,c1,label"


class TestManifest:
    def test_write_and_verify_clean(self, tmp_path):
        out = tmp_path / "f.csv"
        write_csv(out, ["x"], [(1,)])
        manifest = write_manifest(tmp_path, "demo", {"k": 1.5}, [out])
        assert manifest["outputs"]["f.csv"] == sha256_file(out)
        assert manifest["config"] == {"k": "1.5"}
        assert verify_manifest(tmp_path) == []

    def test_verify_detects_tampering(self, tmp_path):
        out = tmp_path / "f.csv"
        write_csv(out, ["x"], [(1,)])
        write_manifest(tmp_path, "demo", {}, [out])
        out.write_text("x\n2\n")
        assert verify_manifest(tmp_path) == ["f.csv"]

    def test_verify_detects_missing_file(self, tmp_path):
        out = tmp_path / "f.csv"
        write_csv(out, ["x"], [(1,)])
        write_manifest(tmp_path, "demo", {}, [out])
        out.unlink()
        assert verify_manifest(tmp_path) == ["f.csv"]

    def test_manifest_is_deterministic(self, tmp_path):
        out = tmp_path / "f.csv"
        write_csv(out, ["x"], [(1,)])
        write_manifest(tmp_path, "demo", {"a": 1, "b": 0.25}, [out])
        first = (tmp_path / MANIFEST_NAME).read_bytes()
        write_manifest(tmp_path, "demo", {"b": 0.25, "a": 1}, [out])
        assert (tmp_path / MANIFEST_NAME).read_bytes() == first
