"""Deterministic JSON and CSV artifacts."""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
import os
from pathlib import Path
import tempfile

import numpy as np

from .scenario import SCHEMA_VERSION

TRAJECTORY_PREFIX = ("t", "sigma")
STUDY_HEADER = ("K", "delta", "epsilon", "seconds")
MOMENT_HEADER = ("i", "j", "exponents", "value")
OUTPUT_HEADER = ("t", "i", "j", "y")


def fmt(v) -> str:
    """Shortest round-trip text for a CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v)).strip("()")
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def jsonable(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": jsonable(obj.real), "im": jsonable(obj.imag)}
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


@dataclass
class CsvArtifact:
    header: tuple[str, ...]
    rows: list = field(default_factory=list)

    def text(self) -> str:
        lines = [",".join(self.header)]
        lines += [",".join(fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class Results:
    command: str
    passed: bool
    report: dict
    csv: dict = field(default_factory=dict)  # file name -> CsvArtifact
    verdicts: list = field(default_factory=list)


def trajectory_header(n: int) -> tuple[str, ...]:
    return TRAJECTORY_PREFIX + tuple(f"m{a}{b}" for a in range(n) for b in range(n))


def emit_report(results: Results, out_dir) -> list[Path]:
    """Write report.json and every CSV; files appear only once all are rendered."""
    out = Path(out_dir)
    docs = {}
    for name, art in sorted(results.csv.items()):
        docs[name] = art.text()
    report = dict(results.report)
    report["schema_version"] = SCHEMA_VERSION
    report["command"] = results.command
    report["passed"] = bool(results.passed)
    report["verdicts"] = list(results.verdicts)
    report["artifacts"] = {name: {"header": list(art.header), "rows": len(art.rows), "schema_version": SCHEMA_VERSION}
                           for name, art in sorted(results.csv.items())}
    docs["report.json"] = dumps(report)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in docs.items():
        target = out / name
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
        written.append(target)
    return written
