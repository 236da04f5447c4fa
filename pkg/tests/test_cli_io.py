"""Tests for config parsing, report writing and run manifests"""
import json

import pytest

from cli_io import (
    RunManifest,
    config_hash,
    file_digest,
    format_value,
    load_manifest,
    manifest_path_for,
    parse_body_spec,
    parse_config,
    parse_grid,
    parse_number_list,
    save_json,
    validate_config,
    verify_manifest,
    write_manifest,
    write_report,
)
from config import DEFAULT_T_GRID, SCHEMA_VERSION
from errors import ConfigError
from geometry import PolytopeGauge, SupportGauge

MINIMAL = {
    "experiment": "theorem1",
    "model": {"kind": "gaussian", "dim": 2},
    "sizes": [1000],
    "epsilons": [0.4],
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestConfigParsing:
    def test_minimal_config_gets_defaults(self, tmp_path):
        config = parse_config(write_config(tmp_path, MINIMAL))
        assert config.trials == 100
        assert config.mode == "analytic"
        assert config.seed == 0
        assert config.bruteforce_directions == 10_000

    def test_epsilon_out_of_range_names_the_key(self):
        with pytest.raises(ConfigError, match=r"epsilons.*\(0,1/2\)"):
            validate_config({**MINIMAL, "epsilons": [0.6]})

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigError, match="replicate_count"):
            validate_config({**MINIMAL, "replicate_count": 5})

    def test_nested_key_path(self):
        with pytest.raises(ConfigError, match=r"model\.kind"):
            validate_config({**MINIMAL, "model": {"kind": "cauchy", "dim": 2}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\"experiment\": ", encoding="utf-8")
        with pytest.raises(ConfigError, match="malformed"):
            parse_config(path)

    def test_top_level_must_be_object(self):
        with pytest.raises(ConfigError):
            validate_config([MINIMAL])

    def test_hash_ignores_key_order_and_outputs(self):
        reordered = dict(reversed(list(MINIMAL.items())))
        a = validate_config(MINIMAL)
        b = validate_config({**reordered, "out": "elsewhere.csv", "threads": 8})
        assert config_hash(a) == config_hash(b)
        c = validate_config({**MINIMAL, "seed": 1})
        assert config_hash(a) != config_hash(c)


class TestArgumentParsing:
    def test_number_lists(self):
        assert parse_number_list("12,100,1e6", int) == [12, 100, 1_000_000]
        assert parse_number_list("0.1, 0.25") == [0.1, 0.25]
        with pytest.raises(ConfigError):
            parse_number_list("1.5", int)
        with pytest.raises(ConfigError):
            parse_number_list("a,b")

    def test_default_t_grid(self):
        assert parse_grid("0.05:1.0:0.05") == DEFAULT_T_GRID

    def test_grid_rejects_bad_step(self):
        with pytest.raises(ConfigError):
            parse_grid("0:1:0")

    @pytest.mark.parametrize("text, kind, dim", [
        ("interval", PolytopeGauge, 1),
        ("square:2", PolytopeGauge, 2),
        ("triangle", PolytopeGauge, 2),
        ("vertices:1,0;0,1;-1,-1", PolytopeGauge, 2),
        ("expected-hull:gaussian:2@100", SupportGauge, 2),
    ])
    def test_body_specs(self, text, kind, dim):
        body = parse_body_spec(text)
        assert isinstance(body, kind)
        assert body.dim == dim

    def test_unknown_body(self):
        with pytest.raises(ConfigError):
            parse_body_spec("circle")


class TestReports:
    RECORDS = [
        {"n": 12, "eps": 0.1, "ok": True, "note": None, "wall_time": 0.25},
        {"n": 100, "eps": 1.0 / 3.0, "ok": False, "note": "x", "wall_time": 1.5},
    ]

    def test_value_formatting(self):
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(True) == "true"
        assert format_value(None) == ""
        assert format_value(3) == "3"
        assert format_value(float("nan")) == "nan"

    def test_csv_layout(self, tmp_path):
        entry = write_report(self.RECORDS, tmp_path / "out.csv", columns=["n", "eps", "ok", "note",
                                                                           "wall_time"])
        text = (tmp_path / "out.csv").read_text(encoding="utf-8")
        lines = text.split("\n")
        assert lines[0] == "n,eps,ok,note"
        assert lines[1] == "12,0.10000000000000001,true,"
        assert lines[2] == "100,0.33333333333333331,false,x"
        assert entry.rows == 2

    def test_empty_records_write_header_only(self, tmp_path):
        write_report([], tmp_path / "empty.csv", columns=["a", "b"])
        assert (tmp_path / "empty.csv").read_text(encoding="utf-8") == "a,b\n"

    def test_rewrite_is_byte_identical(self, tmp_path):
        a = write_report(self.RECORDS, tmp_path / "a.csv")
        b = write_report(self.RECORDS, tmp_path / "b.csv")
        assert a.sha256 == b.sha256
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_json_report(self, tmp_path):
        write_report(self.RECORDS, tmp_path / "out.json", format="json")
        assert json.loads((tmp_path / "out.json").read_text(encoding="utf-8")) == self.RECORDS

    def test_summary_documents_carry_schema_version(self, tmp_path):
        save_json(tmp_path / "summary.json", {"b": 1, "a": 2})
        payload = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert payload == {"schema_version": SCHEMA_VERSION, "a": 2, "b": 1}


class TestManifest:
    def test_round_trip_and_verification(self, tmp_path):
        config = validate_config(MINIMAL)
        manifest = RunManifest.start("theorem1", config, config.seed)
        manifest.outputs.append(write_report(TestReports.RECORDS, tmp_path / "out.csv"))
        manifest.finish()
        path = write_manifest(manifest, manifest_path_for(tmp_path / "out.csv"))
        assert path.name == "out.manifest.json"

        loaded = load_manifest(path)
        assert loaded.config_hash == config_hash(config)
        assert loaded.run_id.startswith("theorem1-")
        assert all(verify_manifest(loaded).values())

        (tmp_path / "out.csv").write_text("tampered\n", encoding="utf-8")
        assert not any(verify_manifest(loaded).values())
        assert loaded.outputs[0].sha256 != file_digest(tmp_path / "out.csv")

    def test_unreadable_manifest(self, tmp_path):
        path = tmp_path / "broken.manifest.json"
        path.write_text("{}", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_manifest(path)
