"""Tests for the DuckDB run store"""
import pytest

from cli_io import ManifestEntry, RunManifest
from database import RunStore
from errors import ConfigError


def make_manifest(run_id="lemma4-abc-1", experiment="lemma4", started="2026-01-01T00:00:00+00:00"):
    return RunManifest(
        run_id=run_id,
        experiment=experiment,
        config_hash="0" * 64,
        config={"experiment": experiment, "seed": 7},
        master_seed=7,
        started_at=started,
        finished_at=started,
        outputs=[ManifestEntry(path="out.csv", sha256="f" * 64, rows=3, format="csv")],
    )


class TestRuns:
    def test_record_and_get(self, store):
        store.record_run(make_manifest())
        run = store.get_run("lemma4-abc-1")
        assert run["experiment"] == "lemma4"
        assert run["master_seed"] == 7
        assert run["config"] == {"experiment": "lemma4", "seed": 7}
        assert run["outputs"] == [{"path": "out.csv", "sha256": "f" * 64, "rows": 3,
                                   "format": "csv"}]

    def test_missing_run(self, store):
        assert store.get_run("nope") is None

    def test_rerecord_replaces(self, store):
        store.record_run(make_manifest())
        store.record_run(make_manifest())
        assert len(store.get_runs()) == 1
        assert len(store.get_run("lemma4-abc-1")["outputs"]) == 1

    def test_listing_filters_and_orders(self, store):
        store.record_run(make_manifest("lemma4-a", started="2026-01-01T00:00:00+00:00"))
        store.record_run(make_manifest("lemma4-b", started="2026-02-01T00:00:00+00:00"))
        store.record_run(make_manifest("theorem1-c", experiment="theorem1"))
        assert [r["run_id"] for r in store.get_runs(experiment="lemma4")] == ["lemma4-b", "lemma4-a"]
        assert len(store.get_runs(limit=1)) == 1

    def test_same_path_same_instance(self, store):
        assert RunStore(store.path) is store


class TestRecords:
    ROWS = [
        {"law": "normal", "n": 12, "t": 0.5, "holds_right": True},
        {"law": "normal", "n": 100, "t": 0.5, "holds_right": False},
    ]

    def test_store_and_read_back(self, store):
        assert store.store_records("run-1", "lemma4", self.ROWS) == 2
        store.store_records("run-2", "lemma4", self.ROWS[:1])
        rows = store.get_records("run-1", "lemma4")
        assert [r["n"] for r in rows] == [12, 100]
        assert all(r["run_id"] == "run-1" for r in rows)
        assert store.get_table_info("lemma4")["row_count"] == 3

    def test_empty_records(self, store):
        assert store.store_records("run-1", "lemma4", []) == 0
        assert store.get_records("run-1", "lemma4") == []

    @pytest.mark.parametrize("table", ["runs", "run_outputs", "drop table", "1abc", "Lemma4"])
    def test_invalid_table_names(self, store, table):
        with pytest.raises(ConfigError):
            store.store_records("run-1", table, self.ROWS)

    def test_stats(self, store):
        store.record_run(make_manifest())
        store.store_records("lemma4-abc-1", "lemma4", self.ROWS)
        stats = store.get_database_stats()
        assert stats["total_runs"] == 1
        assert stats["total_tables"] == 3
        assert stats["total_rows"] == 1 + 1 + 2
        assert stats["tables"][0] == {"table": "lemma4", "rows": 2}
