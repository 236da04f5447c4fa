"""
Config parsing, report writers and run manifests for hullconc
"""
import dataclasses
import hashlib
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from bodies import ExpectedHullOracle
from config import REAL_FORMAT, SCHEMA_VERSION, TOOL_VERSION
from distributions import build_model, parse_model_string
from errors import ConfigError, OutputError
from experiments import ExperimentConfig
from geometry import GaugeOracle, Polytope, PolytopeGauge

logger = logging.getLogger(__name__)

# Excluded from CSV output so reruns stay byte-identical
VOLATILE_FIELDS = ("wall_time",)

# Config keys that do not change results
_UNHASHED_KEYS = {"out", "summary_out", "threads"}


# ============== Config ==============

def _error_path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def validate_config(raw: Any, source: str = "config") -> ExperimentConfig:
    """Validate a decoded config document; errors name the offending key path"""
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        details = "; ".join(f"{_error_path(err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"{source}: {details}") from e


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a JSON experiment config"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON at line {e.lineno}: {e.msg}") from e
    config = validate_config(raw, source=str(path))
    logger.info(f"Loaded {config.experiment} config from {path}")
    return config


def canonical_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config: Union[ExperimentConfig, Dict[str, Any]]) -> str:
    """sha256 of the canonical config; independent of key order and output paths"""
    if isinstance(config, BaseModel):
        data = config.model_dump(mode="json", exclude=_UNHASHED_KEYS)
    else:
        data = {k: v for k, v in config.items() if k not in _UNHASHED_KEYS}
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def parse_number_list(text: str, kind=float) -> List:
    """'12,100,1e6' -> [12, 100, 1000000]"""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"bad number list '{text}'") from e
    if kind is int:
        if any(v != int(v) for v in values):
            raise ConfigError(f"expected integers in '{text}'")
        return [int(v) for v in values]
    return values


def parse_grid(text: str) -> List[float]:
    """'start:stop:step' (inclusive) or a comma list"""
    if ":" not in text:
        return parse_number_list(text)
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as e:
        raise ConfigError(f"bad grid '{text}', expected start:stop:step") from e
    if step <= 0 or stop < start:
        raise ConfigError(f"bad grid '{text}'")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def parse_body_spec(text: str) -> GaugeOracle:
    """interval[:a], square[:a], triangle, vertices:x,y;x,y;..., expected-hull:<model>@<n>"""
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "interval":
            a = float(arg or 1.0)
            return PolytopeGauge(Polytope([[-a], [a]]))
        if kind == "square":
            a = float(arg or 1.0)
            return PolytopeGauge(Polytope([[a, a], [a, -a], [-a, a], [-a, -a]]))
        if kind == "triangle":
            return PolytopeGauge(Polytope([[2.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]]))
        if kind == "vertices":
            rows = [parse_number_list(row) for row in arg.split(";") if row.strip()]
            return PolytopeGauge(Polytope(rows))
        if kind == "expected-hull":
            model_text, _, n_text = arg.rpartition("@")
            model = build_model(parse_model_string(model_text))
            return ExpectedHullOracle(model, int(n_text)).gauge()
    except ValueError as e:
        raise ConfigError(f"bad body spec '{text}': {e}") from e
    raise ConfigError(f"unknown body '{kind}'")


# ============== Serialization ==============

def to_jsonable(obj: Any) -> Any:
    """numpy, dataclass and pydantic values to plain JSON types"""
    if isinstance(obj, BaseModel):
        return to_jsonable(obj.model_dump(mode="json"))
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def format_value(value: Any) -> str:
    """CSV cell text; reals with 17 significant digits"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, REAL_FORMAT)
    return str(value)


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class ManifestEntry(BaseModel):
    path: str
    sha256: str
    rows: int
    format: str


def write_report(records: Sequence[Dict[str, Any]], path: Union[str, Path], format: str = "csv",
                 columns: Optional[List[str]] = None) -> ManifestEntry:
    """Write records as CSV (fixed column order, .17g reals) or JSON; returns the manifest entry"""
    path = Path(path)
    if format not in ("csv", "json"):
        raise OutputError(f"unknown report format '{format}'")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if format == "csv":
            if columns is None:
                columns = list(records[0].keys()) if records else []
            columns = [c for c in columns if c not in VOLATILE_FIELDS]
            frame = pd.DataFrame([[format_value(r.get(c)) for c in columns] for r in records],
                                 columns=columns, dtype=object)
            frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
        else:
            text = json.dumps(to_jsonable(list(records)), indent=2, sort_keys=True, ensure_ascii=False)
            path.write_text(text + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    entry = ManifestEntry(path=str(path), sha256=file_digest(path), rows=len(records), format=format)
    logger.info(f"Wrote {entry.rows} rows to {path}")
    return entry


def save_json(path: Union[str, Path], payload: Any) -> ManifestEntry:
    """Summary documents: sorted keys, schema_version stamped in"""
    path = Path(path)
    body = to_jsonable(payload)
    if isinstance(body, dict):
        body = {"schema_version": SCHEMA_VERSION, **body}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(body, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                        encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return ManifestEntry(path=str(path), sha256=file_digest(path), rows=1, format="json")


# ============== Manifest ==============

def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    tool_version: str = TOOL_VERSION
    run_id: str
    experiment: str
    config_hash: str
    config: Dict[str, Any]
    master_seed: int
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[ManifestEntry] = Field(default_factory=list)

    @classmethod
    def start(cls, experiment: str, config: Union[ExperimentConfig, Dict[str, Any]],
              seed: int) -> "RunManifest":
        data = config.model_dump(mode="json") if isinstance(config, BaseModel) else dict(config)
        digest = config_hash(config)
        started = utc_now()
        run_id = f"{experiment}-{digest[:12]}-{started.replace(':', '').replace('-', '')[:15]}"
        return cls(run_id=run_id, experiment=experiment, config_hash=digest, config=data,
                   master_seed=seed, started_at=started)

    def finish(self) -> "RunManifest":
        self.finished_at = utc_now()
        return self


def write_manifest(manifest: RunManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write manifest {path}: {e}") from e
    return path


def load_manifest(path: Union[str, Path]) -> RunManifest:
    try:
        return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        raise ConfigError(f"cannot read manifest {path}: {e}") from e


def verify_manifest(manifest: RunManifest) -> Dict[str, bool]:
    """Recompute each output digest; missing files count as mismatches"""
    results = {}
    for entry in manifest.outputs:
        p = Path(entry.path)
        results[entry.path] = p.exists() and file_digest(p) == entry.sha256
    return results


def manifest_path_for(out: Union[str, Path]) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".manifest.json")
