"""
Run store for hullconc
Uses DuckDB to keep run manifests, output digests and report records
"""
import json
import logging
import re
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import duckdb
import pandas as pd

from cli_io import RunManifest, to_jsonable
from config import DB_PATH
from errors import ConfigError

logger = logging.getLogger(__name__)

_IDENTIFIER = re.compile(r"^[a-z][a-z0-9_]*$")
_CORE_TABLES = ("runs", "run_outputs")


def _check_table_name(table: str) -> str:
    if not _IDENTIFIER.match(table) or table in _CORE_TABLES:
        raise ConfigError(f"invalid record table name '{table}'")
    return table


class RunStore:
    """Manages the DuckDB file holding past runs; one instance per database path"""

    _instances: Dict[str, "RunStore"] = {}
    _guard = threading.Lock()

    def __new__(cls, path: Optional[Union[str, Path]] = None):
        key = str(Path(path or DB_PATH))
        with cls._guard:
            if key not in cls._instances:
                instance = super().__new__(cls)
                instance._connection = None
                cls._instances[key] = instance
            return cls._instances[key]

    def __init__(self, path: Optional[Union[str, Path]] = None):
        if self._connection is None:
            self.path = Path(path or DB_PATH)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._connection = duckdb.connect(str(self.path))
            self._lock = threading.Lock()
            self._setup_schema()

    def _setup_schema(self):
        self._connection.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                run_id VARCHAR PRIMARY KEY,
                experiment VARCHAR,
                config_hash VARCHAR,
                master_seed UBIGINT,
                tool_version VARCHAR,
                schema_version INTEGER,
                started_at VARCHAR,
                finished_at VARCHAR,
                config VARCHAR
            )
        """)
        self._connection.execute("""
            CREATE TABLE IF NOT EXISTS run_outputs (
                run_id VARCHAR,
                path VARCHAR,
                sha256 VARCHAR,
                rows BIGINT,
                format VARCHAR
            )
        """)

    @property
    def conn(self) -> duckdb.DuckDBPyConnection:
        return self._connection

    def record_run(self, manifest: RunManifest) -> str:
        """Insert or replace a run and its output digests"""
        with self._lock:
            self._connection.execute("DELETE FROM run_outputs WHERE run_id = ?", [manifest.run_id])
            self._connection.execute("DELETE FROM runs WHERE run_id = ?", [manifest.run_id])
            self._connection.execute(
                "INSERT INTO runs VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                [manifest.run_id, manifest.experiment, manifest.config_hash, manifest.master_seed,
                 manifest.tool_version, manifest.schema_version, manifest.started_at,
                 manifest.finished_at, json.dumps(manifest.config, sort_keys=True)],
            )
            for entry in manifest.outputs:
                self._connection.execute(
                    "INSERT INTO run_outputs VALUES (?, ?, ?, ?, ?)",
                    [manifest.run_id, entry.path, entry.sha256, entry.rows, entry.format],
                )
        logger.info(f"Recorded run {manifest.run_id} ({len(manifest.outputs)} outputs)")
        return manifest.run_id

    def store_records(self, run_id: str, table: str, records: Sequence[Dict[str, Any]]) -> int:
        """Append report records to a per-kind table keyed by run_id"""
        table = _check_table_name(table)
        if not records:
            return 0
        frame = pd.DataFrame([{k: to_jsonable(v) for k, v in r.items()} for r in records])
        frame.insert(0, "run_id", run_id)
        with self._lock:
            self._connection.register("incoming_records", frame)
            try:
                if self.table_exists(table):
                    self._connection.execute(
                        f"INSERT INTO {table} BY NAME SELECT * FROM incoming_records")
                else:
                    self._connection.execute(
                        f"CREATE TABLE {table} AS SELECT * FROM incoming_records")
            finally:
                self._connection.unregister("incoming_records")
        logger.info(f"Stored {len(records)} records in {table} for {run_id}")
        return len(records)

    def table_exists(self, table: str) -> bool:
        result = self._connection.execute(
            "SELECT COUNT(*) FROM information_schema.tables WHERE table_name = ?", [table]
        ).fetchone()
        return result[0] > 0

    def get_tables(self) -> List[str]:
        result = self._connection.execute(
            "SELECT table_name FROM information_schema.tables WHERE table_schema = 'main' "
            "ORDER BY table_name"
        ).fetchall()
        return [row[0] for row in result]

    def query(self, sql: str, params: Optional[List] = None) -> List[Dict[str, Any]]:
        """Execute a query and return results as list of dicts"""
        try:
            with self._lock:
                result = self._connection.execute(sql, params) if params else self._connection.execute(sql)
                columns = [desc[0] for desc in result.description]
                rows = result.fetchall()
            return [dict(zip(columns, row)) for row in rows]
        except Exception as e:
            logger.error(f"Query error: {e}")
            raise

    def get_runs(self, limit: int = 100, offset: int = 0,
                 experiment: Optional[str] = None) -> List[Dict[str, Any]]:
        sql = ("SELECT run_id, experiment, config_hash, master_seed, tool_version, started_at, "
               "finished_at FROM runs")
        params: List[Any] = []
        if experiment:
            sql += " WHERE experiment = ?"
            params.append(experiment)
        sql += " ORDER BY started_at DESC, run_id LIMIT ? OFFSET ?"
        params.extend([limit, offset])
        return self.query(sql, params)

    def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        rows = self.query("SELECT * FROM runs WHERE run_id = ?", [run_id])
        if not rows:
            return None
        run = rows[0]
        run["config"] = json.loads(run["config"])
        run["outputs"] = self.query(
            "SELECT path, sha256, rows, format FROM run_outputs WHERE run_id = ? ORDER BY path",
            [run_id])
        return run

    def get_records(self, run_id: str, table: str, limit: int = 1000,
                    offset: int = 0) -> List[Dict[str, Any]]:
        table = _check_table_name(table)
        if not self.table_exists(table):
            return []
        return self.query(f"SELECT * FROM {table} WHERE run_id = ? LIMIT ? OFFSET ?",
                          [run_id, limit, offset])

    def get_table_info(self, table: str) -> Dict[str, Any]:
        """Get information about a table"""
        if not _IDENTIFIER.match(table) or not self.table_exists(table):
            return {}
        try:
            columns = self._connection.execute(f"DESCRIBE {table}").fetchall()
            count = self._connection.execute(f"SELECT COUNT(*) FROM {table}").fetchone()[0]
            return {
                "table_name": table,
                "row_count": count,
                "columns": [{"name": col[0], "type": col[1]} for col in columns],
            }
        except Exception as e:
            logger.error(f"Error getting table info for {table}: {e}")
            return {}

    def get_database_stats(self) -> Dict[str, Any]:
        tables = self.get_tables()
        stats = []
        for table in tables:
            count = self._connection.execute(f"SELECT COUNT(*) FROM {table}").fetchone()[0]
            stats.append({"table": table, "rows": count})
        return {
            "total_tables": len(tables),
            "total_runs": next((s["rows"] for s in stats if s["table"] == "runs"), 0),
            "total_rows": sum(s["rows"] for s in stats),
            "tables": sorted(stats, key=lambda x: (-x["rows"], x["table"])),
            "db_file_size_mb": self.path.stat().st_size / (1024 * 1024) if self.path.exists() else 0,
        }

    def close(self):
        """Close database connection"""
        if self._connection:
            self._connection.close()
            self._connection = None
            with RunStore._guard:
                RunStore._instances.pop(str(self.path), None)


def get_store(path: Optional[Union[str, Path]] = None) -> RunStore:
    return RunStore(path)
