"""Writing result tables and their metadata sidecar."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

from .. import __version__
from .spec import CSV_FIELDS, ExperimentSpec


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def format_results(records, fmt: str = "csv") -> str:
    if not records:
        raise ValueError("no records to write")
    rows = [r.row() for r in records]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps({k: _json_value(row[k]) for k in CSV_FIELDS}) + "\n" for row in rows)
    raise ValueError(f"unknown result format {fmt!r} (use csv or jsonl)")


def emit_results(records, path, fmt: str = "csv") -> None:
    """Write records to ``path`` (``-`` for stdout)."""
    text = format_results(records, fmt)
    if str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_results(path) -> list:
    """Rows of a CSV or JSON-lines result file as dicts with typed values."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({
            "experiment": r["experiment"], "detector": r["detector"],
            "snr_db": float(r["snr_db"]), "sigma_e2": float(r["sigma_e2"]),
            "gamma": float(r["gamma"]) if r["gamma"] else None,
            "symbols": int(r["symbols"]), "errors": int(r["errors"]), "ser": float(r["ser"]),
            "wall_time_s": float(r["wall_time_s"]), "seed": int(r["seed"]),
        })
    return rows


def write_metadata(path, spec: ExperimentSpec, records) -> None:
    """Sidecar with the spec, software versions and any failed cells."""
    import numpy
    import scipy
    meta = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "symdet": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "spec": spec.to_dict(),
        "rows": len(records),
        "failures": [{"detector": r.detector, "snr_db": r.snr_db, "sigma_e2": r.sigma_e2,
                      "gamma": r.gamma, "error": r.error} for r in records if r.error],
    }
    Path(path).write_text(json.dumps(meta, indent=1) + "\n")
