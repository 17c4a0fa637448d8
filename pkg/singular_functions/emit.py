"""
Output module for the singular flux lab.
Handles profile and sweep CSVs, summary.json and gnuplot data files.
"""

import json
import logging
import math
from enum import Enum
from functools import singledispatch
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .bvp import FamilyRecord
from .errors import IoError
from .grid import GridFn
from .ode import IvpSolution
from .verify import ConeReport, WeakSolutionReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


# =====================================================================
# Helpers
# =====================================================================

def _jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as handle:
            handle.write(text)
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise IoError(f"Cannot write {path}: {e}", path=str(path)) from e
    return path


def _csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def save_json(path: Path, obj: Dict[str, Any]) -> Path:
    """Sorted, indented JSON with a trailing newline."""
    return _write_text(Path(path), json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# =====================================================================
# CSV artifacts
# =====================================================================

def write_profile(path: Path, u: GridFn, column: str = "value") -> Path:
    """Profile CSV with header `x,<column>`, one row per node."""
    frame = pd.DataFrame({"x": u.x, column: u.values})
    return _write_text(Path(path), _csv_text(frame))


def write_pair(out_dir: Path, name: str, u: GridFn, g: GridFn) -> Tuple[Path, Path]:
    """Paired profile CSVs `<name>__u.csv` and `<name>__g.csv`."""
    out_dir = Path(out_dir)
    return write_profile(out_dir / f"{name}__u.csv", u), write_profile(out_dir / f"{name}__g.csv", g)


def write_ivp(path: Path, solution: IvpSolution) -> Path:
    """IVP CSV with header `x,v,phi_of_v`."""
    frame = pd.DataFrame({"x": solution.v.x, "v": solution.v.values, "phi_of_v": solution.phi_of_v.values})
    return _write_text(Path(path), _csv_text(frame))


def write_sweep(path: Path, record: FamilyRecord, recovered: Optional[Sequence[float]] = None) -> Path:
    """Sweep CSV with header `c,endpoint_value,sup_norm,recovered_c`."""
    samples = record.samples
    if recovered is None:
        recovered = [math.nan] * len(samples)
    frame = pd.DataFrame(
        {
            "c": [s.c for s in samples],
            "endpoint_value": [s.endpoint for s in samples],
            "sup_norm": [float(np.max(np.abs(s.u.values))) for s in samples],
            "recovered_c": list(recovered),
        },
        columns=["c", "endpoint_value", "sup_norm", "recovered_c"],
    )
    return _write_text(Path(path), _csv_text(frame))


# =====================================================================
# gnuplot data
# =====================================================================

def _write_dat(out_dir: Path, scenario: str, curve: str, columns: Dict[str, Sequence[float]]) -> Path:
    frame = pd.DataFrame(columns)
    header = "# " + " ".join(frame.columns) + "\n"
    body = frame.to_csv(sep=" ", index=False, header=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return _write_text(Path(out_dir) / f"{scenario}__{curve}.dat", header + body)


@singledispatch
def emit_plot_data(record, out_dir: Path, scenario: str, **extra) -> List[Path]:
    """
    Write gnuplot data files for a record, one file per curve.

    Files are named `<scenario>__<curve>.dat` and start with a comment line
    naming the columns.

    Returns:
        Paths written, in a fixed order
    """
    raise TypeError(f"No plot data for {type(record).__name__}")


@emit_plot_data.register
def _(record: FamilyRecord, out_dir: Path, scenario: str, **extra) -> List[Path]:
    if not record.samples:
        logger.info(f"Empty sweep for {scenario}; no curves written")
        return []
    paths = []
    for i, sample in enumerate(record.samples):
        paths.append(_write_dat(out_dir, scenario, f"u_c{i:02d}", {"x": sample.u.x, "u": sample.u.values}))
    c_star = record.c_star
    if c_star is not None and hasattr(c_star, "value"):
        columns = {"c_star": [c_star.value], "lo": [c_star.lo], "hi": [c_star.hi], "bound": [c_star.bound]}
    else:
        columns = {"c_max": [record.samples[-1].c], "tau": [record.tau]}
    paths.append(_write_dat(out_dir, scenario, "cstar", columns))
    return paths


@emit_plot_data.register
def _(record: ConeReport, out_dir: Path, scenario: str, profile: Optional[GridFn] = None, **extra) -> List[Path]:
    if profile is None:
        raise TypeError("Cone overlays need the profile")
    x = profile.x
    reach = record.k * np.abs(x - record.x0)
    return [
        _write_dat(out_dir, scenario, "profile", {"x": x, "w": profile.values}),
        _write_dat(out_dir, scenario, "cone", {"x": x, "upper": reach, "lower": -reach}),
    ]


@emit_plot_data.register
def _(record: WeakSolutionReport, out_dir: Path, scenario: str, profile: Optional[GridFn] = None, **extra) -> List[Path]:
    paths = []
    if profile is not None:
        paths.append(_write_dat(out_dir, scenario, "u", {"x": profile.x, "u": profile.values}))
    scalars = {
        "residual_sup": [record.residual_sup],
        "energy_gap": [record.energy_gap],
        "recovered_c": [record.recovered_c],
        "apriori_ratio_h1": [record.apriori_ratio_h1],
        "apriori_ratio_sup": [record.apriori_ratio_sup],
    }
    paths.append(_write_dat(out_dir, scenario, "report", scalars))
    return paths


@emit_plot_data.register
def _(record: dict, out_dir: Path, scenario: str, **extra) -> List[Path]:
    """Trends: each entry maps a curve name to (x, y) pairs."""
    paths = []
    for name in sorted(record):
        pairs = record[name]
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        paths.append(_write_dat(out_dir, scenario, name, {"x": xs, name: ys}))
    return paths
