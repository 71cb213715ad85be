import csv
from pathlib import Path
from typing import Optional

import numpy as np

from src.sync.constants import SYNC_TRACE_COLUMNS
from src.sync.schemas import SyncTrace, VerificationReport


def _cell(series: Optional[np.ndarray], index: int) -> str:
    if series is None or not np.isfinite(series[index]):
        return ""
    return format(float(series[index]), ".17g")


def write_sync_trace_csv(trace: SyncTrace, path: Path) -> Path:
    """Columns t, V_v, W, envelope, residual, cs_slack; absent values are empty."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SYNC_TRACE_COLUMNS)
        for index in range(len(trace)):
            writer.writerow(
                [
                    _cell(trace.times, index),
                    _cell(trace.V_v, index),
                    _cell(trace.W, index),
                    _cell(trace.envelope, index),
                    _cell(trace.residual, index),
                    _cell(trace.cs_slack, index),
                ]
            )
    return path


def write_report_json(report: VerificationReport, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2))
    return path
