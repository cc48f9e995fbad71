"""Run reports: JSON summary plus CSV tables.

Everything except ``timing`` is a deterministic function of the config and
seed; ``payload_sha256`` hashes that part so reruns can be compared cheaply.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__


@dataclass
class RunReport:
    command: str
    config: dict
    config_hash: str
    seed: int
    outputs: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    truncated: bool = False
    truncation: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def payload(self) -> dict:
        return {
            "tool": "endlab",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "truncated": self.truncated,
            "truncation": self.truncation or None,
            "outputs": clean(self.outputs),
            "checks": {k: bool(val) for k, val in self.checks.items()},
            "tables": clean(self.tables),
        }

    def payload_text(self) -> str:
        return json.dumps(self.payload(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    def to_json(self) -> dict:
        out = self.payload()
        out["payload_sha256"] = hashlib.sha256(self.payload_text().encode()).hexdigest()
        out["timing"] = {"wall_clock_seconds": round(self.wall_clock, 3)}
        return out


def clean(obj):
    """Convert to JSON-safe builtins; non-finite floats become strings."""
    if hasattr(obj, "to_json"):
        return clean(obj.to_json())
    if isinstance(obj, dict):
        return {str(k): clean(val) for k, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def report_schema() -> dict:
    with resources.files("endlab").joinpath("schema/report.schema.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def emit_report(report: RunReport, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write ``<command>-<hash>-s<seed>.json`` and one CSV per table; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{report.command}-{report.config_hash}-s{report.seed}"
    written = []
    if "json" in formats:
        path = out / f"{stem}.json"
        path.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        for name, rows in sorted(report.tables.items()):
            rows = clean(rows)
            path = out / f"{stem}-{name}.csv"
            cols = []
            for r in rows:
                cols.extend(k for k in r if k not in cols)
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
                w.writeheader()
                for r in rows:
                    w.writerow({k: _cell(val) for k, val in r.items()})
            written.append(path)
    return written


def _cell(val):
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, (list, dict)):
        return json.dumps(val, sort_keys=True)
    return val
