"""CSV storage of run records, best-response traces and summary tables."""
import os
import glob
import logging
from io import StringIO
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from dcc_framework.exceptions import OptimizationError, RejectedInputError
from dcc_framework.utils import ensure_directory_exists
from storage.models import RunPoint, RunRecord, SummaryRow

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ["cycle", "evaluations", "best_f", "wall_ms"]
TRACE_COLUMNS = ["cycle", "x", "y", "f"]
SUMMARY_COLUMNS = ["function_id", "algorithm", "runs", "median_final_f",
                   "median_evaluations_to_target", "success_count"]
METADATA_FIELDS = ["fingerprint", "function_id", "algorithm", "seed", "status"]
FLOAT_FORMAT = "%.17g"


def record_frame(record: RunRecord) -> pd.DataFrame:
    """Convergence series of a record as a DataFrame."""
    return pd.DataFrame([point.model_dump() for point in record.series], columns=SERIES_COLUMNS)


def emit_csv(record: RunRecord) -> str:
    """
    Serialize a record.

    Metadata goes into leading ``# key=value`` lines, followed by the
    ``cycle,evaluations,best_f,wall_ms`` table. Floats are written with 17
    significant digits so parsing restores them exactly.

    Args:
        record: Run record

    Returns:
        CSV text
    """
    header = "".join(f"# {name}={getattr(record, name)}\n" for name in METADATA_FIELDS)
    return header + record_frame(record).to_csv(index=False, float_format=FLOAT_FORMAT)


def _parse_metadata(lines: Iterable[str]) -> Dict[str, str]:
    metadata = {}
    for line in lines:
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        metadata[key] = value
    return metadata


def parse_csv(path_or_text: str) -> RunRecord:
    """
    Read a record written by `emit_csv`.

    Args:
        path_or_text: File path, or the CSV text itself

    Returns:
        RunRecord (without best_x)
    """
    if os.path.exists(path_or_text):
        try:
            with open(path_or_text, "r") as f:
                text = f.read()
        except OSError as e:
            logger.error(f"Error reading record {path_or_text}: {e}")
            raise OptimizationError(f"cannot read record {path_or_text}: {e}") from e
    elif "\n" not in path_or_text:
        raise RejectedInputError(f"no record file {path_or_text}")
    else:
        text = path_or_text

    metadata = _parse_metadata(text.splitlines())
    frame = pd.read_csv(StringIO(text), comment="#", float_precision="round_trip")
    missing = [c for c in SERIES_COLUMNS if c not in frame.columns]
    if missing:
        raise RejectedInputError(f"record is missing columns {missing}")

    series = [
        RunPoint(cycle=int(row.cycle), evaluations=int(row.evaluations),
                 best_f=float(row.best_f), wall_ms=float(row.wall_ms))
        for row in frame.itertuples(index=False)
    ]
    return RunRecord(
        fingerprint=metadata.get("fingerprint", ""),
        function_id=metadata.get("function_id", ""),
        algorithm=metadata.get("algorithm", ""),
        seed=int(metadata.get("seed", 0)),
        status=metadata.get("status", "budget_exhausted"),
        series=series,
    )


class RecordStore:
    """Directory of run-record CSV files, one per (function, algorithm, seed)."""

    def __init__(self, output_dir: str = "./results"):
        """
        Initialize the store.

        Args:
            output_dir: Directory the CSV files live in
        """
        self.output_dir = output_dir
        ensure_directory_exists(output_dir)

    def record_path(self, record: RunRecord) -> str:
        return os.path.join(
            self.output_dir, f"{record.function_id}_{record.algorithm}_seed{record.seed}.csv")

    def save_record(self, record: RunRecord, path: Optional[str] = None) -> str:
        """
        Write one record.

        Args:
            record: Run record
            path: Explicit file path; derived from the record otherwise

        Returns:
            Path written
        """
        path = path or self.record_path(record)
        ensure_directory_exists(os.path.dirname(path))
        try:
            with open(path, "w") as f:
                f.write(emit_csv(record))
        except OSError as e:
            logger.error(f"Error saving record {path}: {e}")
            raise OptimizationError(f"cannot write record {path}: {e}") from e
        logger.info(f"saved record to {path}")
        return path

    def load_record(self, path: str) -> RunRecord:
        return parse_csv(path)

    def load_all(self, pattern: str = "*.csv") -> List[RunRecord]:
        """All records in the directory matching a glob pattern, sorted by file name."""
        paths = sorted(glob.glob(os.path.join(self.output_dir, pattern)))
        return [parse_csv(path) for path in paths]


def summarize(records: List[RunRecord], target: float = 1e-10) -> List[SummaryRow]:
    """
    Aggregate records per (function, algorithm).

    Args:
        records: Run records (at least one)
        target: Fitness target for evaluations-to-target and success counting

    Returns:
        Summary rows in first-seen order
    """
    if not records:
        raise OptimizationError("nothing to summarize")
    frame = pd.DataFrame({
        "function_id": [r.function_id for r in records],
        "algorithm": [r.algorithm for r in records],
        "final_f": [r.final_best_f for r in records],
        "evaluations_to_target": [r.evaluations_to_target(target) for r in records],
        "success": [r.final_best_f <= target for r in records],
    })
    grouped = frame.groupby(["function_id", "algorithm"], sort=False)
    rows = []
    for (function_id, algorithm), group in grouped:
        rows.append(SummaryRow(
            function_id=function_id,
            algorithm=algorithm,
            runs=len(group),
            median_final_f=float(np.median(group["final_f"])),
            median_evaluations_to_target=float(np.median(group["evaluations_to_target"])),
            success_count=int(group["success"].sum()),
        ))
    return rows


def summary_frame(rows: List[SummaryRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows], columns=SUMMARY_COLUMNS)


def trace_frame(trace, obj) -> pd.DataFrame:
    """Best-response trace as ``cycle,x,y,f`` rows (f evaluated per row)."""
    points = np.asarray(trace.points, dtype=float)
    return pd.DataFrame({
        "cycle": trace.cycles,
        "x": points[:, 0],
        "y": points[:, 1],
        "f": [obj.evaluate(p) for p in points],
    }, columns=TRACE_COLUMNS)
