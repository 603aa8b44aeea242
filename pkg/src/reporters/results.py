"""
Result emission: report.json, metrics.csv and curves.csv

report.json carries no timings or timestamps so reruns of the same config
are byte-identical; per-phase wall-clock seconds go to metrics.csv.
"""
import json
import logging
import os
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from ..models import ResultsReport

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["phase", "name", "accuracy", "mia_rate_pre", "mia_rate_post", "seconds"]
STEP_KEYS = ("round", "epoch", "step")


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def to_json(obj, indent: Optional[int] = None) -> str:
    """Deterministic JSON: sorted keys, numpy scalars and arrays as plain values"""
    return json.dumps(obj, indent=indent, sort_keys=True, default=_default)


def write_atomic(path: Path, text: str) -> Path:
    """Write via a sibling temp file and rename over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)
    return path


def write_jsonl(records: list, path: Path) -> Path:
    """One JSON object per line"""
    lines = [to_json(r) for r in records]
    return write_atomic(path, "\n".join(lines) + ("\n" if lines else ""))


def metrics_frame(report: ResultsReport) -> pd.DataFrame:
    rows = []
    for phase, metrics in report.reports.items():
        rows.append({
            "phase": phase,
            "name": metrics.name,
            "accuracy": metrics.accuracy,
            "mia_rate_pre": metrics.mia_rate_pre,
            "mia_rate_post": metrics.mia_rate_post,
            "seconds": report.timings.get(phase),
        })
    return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def curves_frame(report: ResultsReport) -> pd.DataFrame:
    """Long table: one row per (phase, series, step)"""
    rows = []
    for phase, metrics in report.reports.items():
        for series, records in sorted(metrics.curves.items()):
            for index, record in enumerate(records):
                step = next((record[k] for k in STEP_KEYS if k in record), index)
                values = {k: v for k, v in record.items() if k not in STEP_KEYS}
                rows.append({"phase": phase, "series": series, "step": step, **values})
    fixed = ["phase", "series", "step"]
    extra = sorted({k for row in rows for k in row} - set(fixed))
    return pd.DataFrame(rows, columns=fixed + extra)


def emit_results(report: ResultsReport, out_dir) -> list[Path]:
    """
    Write the three result files.

    Args:
        report: results of one pipeline run
        out_dir: destination directory (created if needed)

    Returns:
        Paths of report.json, metrics.csv and curves.csv
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report_file = write_atomic(out_dir / "report.json",
                               to_json(report.to_dict(), indent=2) + "\n")
    logger.info(f"Generated: {report_file}")

    metrics_file = out_dir / "metrics.csv"
    write_atomic(metrics_file, metrics_frame(report).to_csv(index=False, lineterminator="\n"))
    logger.info(f"Generated: {metrics_file}")

    curves_file = out_dir / "curves.csv"
    write_atomic(curves_file, curves_frame(report).to_csv(index=False, lineterminator="\n"))
    logger.info(f"Generated: {curves_file}")

    return [report_file, metrics_file, curves_file]
