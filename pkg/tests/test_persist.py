import json
import math

import numpy as np
import pytest

from fedsched.persist import (
    SENTINEL,
    PersistError,
    load_run,
    parse_value,
    persist_run,
    read_table,
    write_table,
)
from fedsched.rng import stream
from fedsched.training import RoundRecord

MANIFEST = {"kind": "test", "seed": 3, "config_hash": "abc", "config": {"x": 1}}


def test_empty_round_trip(tmp_path):
    persist_run([], MANIFEST, tmp_path / "r")
    recs, man = load_run(tmp_path / "r")
    assert recs == []
    assert man["seed"] == 3 and man["format_version"] == 1


def test_large_round_trip_is_bit_exact(tmp_path):
    rng = stream(0, "persist")
    vals = rng.standard_normal(10_000) * 10.0 ** rng.integers(-300, 300, 10_000)
    recs = [RoundRecord(i, [i % 7], [True], float(v), float(-v), math.nan if i % 13 == 0 else float(v) / 3,
                        1.5) for i, v in enumerate(vals)]
    persist_run(recs, MANIFEST, tmp_path / "r")
    back, _ = load_run(tmp_path / "r", {"RoundRecord": RoundRecord})
    assert len(back) == len(recs)
    for a, b in zip(recs, back):
        assert isinstance(b, RoundRecord)
        assert a.dual == b.dual and a.primal == b.primal and a.selected == b.selected
        assert (a.gap == b.gap) or (math.isnan(a.gap) and math.isnan(b.gap))
    untyped, _ = load_run(tmp_path / "r")
    assert untyped[0]["__type__"] == "RoundRecord"


def test_manifest_requires_fields(tmp_path):
    with pytest.raises(PersistError, match="missing"):
        persist_run([], {"kind": "x"}, tmp_path / "r")
    persist_run([], MANIFEST, tmp_path / "r")
    man = json.loads((tmp_path / "r/manifest.json").read_text())
    del man["config_hash"]
    (tmp_path / "r/manifest.json").write_text(json.dumps(man))
    with pytest.raises(PersistError, match="config_hash"):
        load_run(tmp_path / "r")


def test_version_mismatch(tmp_path):
    persist_run([], dict(MANIFEST, format_version=99), tmp_path / "r")
    with pytest.raises(PersistError, match="format_version 99"):
        load_run(tmp_path / "r")


def test_corrupt_and_truncated(tmp_path):
    persist_run([{"a": 1}, {"a": 2}, {"a": 3}], MANIFEST, tmp_path / "r")
    path = tmp_path / "r/records.jsonl"
    lines = path.read_text().splitlines()
    path.write_text(lines[0] + "\n" + '{"a": \n' + lines[2] + "\n")
    with pytest.raises(PersistError, match="records.jsonl:2"):
        load_run(tmp_path / "r")
    path.write_text("\n".join(lines[:2]) + "\n")
    with pytest.raises(PersistError, match="truncated"):
        load_run(tmp_path / "r")
    (tmp_path / "r/manifest.json").write_text("{")
    with pytest.raises(PersistError, match="corrupt"):
        load_run(tmp_path / "r")
    with pytest.raises(PersistError, match="no manifest"):
        load_run(tmp_path / "missing")


def test_table_provenance_and_sentinel(tmp_path):
    p = write_table(tmp_path / "t.csv", ["a", "b", "c"],
                    [[1, 0.1, math.inf], {"a": 2, "b": math.nan, "c": "x"}],
                    {"config_hash": "deadbeef", "seed": 4})
    text = p.read_text().splitlines()
    assert text[:3] == ["# config_hash: deadbeef", "# seed: 4", "a,b,c"]
    assert text[3] == f"1,0.1,{SENTINEL}"
    prov, cols, rows = read_table(p)
    assert prov == {"config_hash": "deadbeef", "seed": "4"}
    assert cols == ["a", "b", "c"] and rows[1]["c"] == "x"
    assert parse_value(rows[0]["c"]) == math.inf
    assert parse_value(rows[0]["b"]) == 0.1 and parse_value("RS") == "RS"


def test_table_floats_round_trip(tmp_path):
    vals = stream(1).standard_normal(50)
    p = write_table(tmp_path / "t.csv", ["v"], [[float(v)] for v in vals])
    _, _, rows = read_table(p)
    assert np.array_equal([parse_value(r["v"]) for r in rows], vals)


def test_table_without_header(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("# a: b\n")
    with pytest.raises(PersistError):
        read_table(f)
