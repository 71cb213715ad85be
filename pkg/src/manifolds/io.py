import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from src.manifolds.constants import Branch
from src.manifolds.schemas import CanardPoint, FastManifoldChart, FoldPoint, SlowManifoldChart


def _number(value: float) -> str:
    return format(float(value), ".17g")


def write_fast_chart_csv(chart: FastManifoldChart, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "z", "v", "u", "branch", "residual"])
        for i, j, k in zip(*np.nonzero(chart.present)):
            writer.writerow(
                [
                    _number(chart.xs[i]),
                    _number(chart.ys[j]),
                    _number(chart.zs[k]),
                    _number(chart.phi_v[i, j, k]),
                    _number(chart.phi_u[i, j, k]),
                    chart.label(int(i), int(j), int(k)),
                    _number(chart.residual[i, j, k]),
                ]
            )
    return path


def write_slow_chart_csv(chart: SlowManifoldChart, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["y", "z", "v", "u", "x", "branch", "residual"])
        for j, k in zip(*np.nonzero(chart.present)):
            branch = Branch.ATTRACTING if chart.attracting[j, k] else Branch.REPELLING
            writer.writerow(
                [
                    _number(chart.ys[j]),
                    _number(chart.zs[k]),
                    _number(chart.psi_v[j, k]),
                    _number(chart.psi_u[j, k]),
                    _number(chart.psi_x[j, k]),
                    branch,
                    _number(chart.residual[j, k]),
                ]
            )
    return path


def write_points_json(
    path: Path,
    folds: Sequence[FoldPoint],
    canard: CanardPoint,
    jump: FoldPoint,
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "canard": canard.model_dump(mode="json"),
        "jump": jump.model_dump(mode="json"),
        "folds": [point.model_dump(mode="json") for point in folds],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path
