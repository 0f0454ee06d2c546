"""
Shared CSV/JSON plumbing for every DriveContext artifact.

Artifacts start with one provenance line, `# drivecontext {config-json}`.
Readers skip leading `#` lines and report file line numbers as they appear on disk.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError

logger = logging.getLogger(__name__)

PROVENANCE_PREFIX = "# drivecontext "
LINE_COLUMN = "_line"
_EPOCH = pd.Timestamp(0, tz="UTC")


def warn_row(line: int, reason: str) -> None:
    """Emit the standard row warning (`line=<n> reason=<text>`)."""
    logger.warning(f"line={line} reason={reason}")


def read_table(
    path: str,
    required: Sequence[str],
    optional: Sequence[str] = (),
    rename: Optional[Dict[str, str]] = None,
) -> pd.DataFrame:
    """
    Read a CSV into a string-typed DataFrame.

    Args:
        path: CSV file with a header row
        required: Columns that must be present (canonical names)
        optional: Columns kept when present
        rename: Canonical name -> name used in the file

    Returns:
        DataFrame of canonical columns plus `_line`, the file line of each row
    """
    file_path = Path(path)
    if not file_path.exists():
        raise DataError(f"file not found: {path}")

    skip = _leading_comment_lines(file_path)
    try:
        frame = pd.read_csv(
            file_path,
            skiprows=skip,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        raise SchemaError(path, required)
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: unreadable CSV: {e}") from e

    if rename:
        frame = frame.rename(columns={v: k for k, v in rename.items()})
    frame.columns = [str(c).strip() for c in frame.columns]

    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(path, missing)

    keep = list(required) + [c for c in optional if c in frame.columns]
    frame = frame[keep].copy()
    # header sits on line skip + 1
    frame[LINE_COLUMN] = np.arange(len(frame), dtype=np.int64) + skip + 2
    return frame


def numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    """Column as float64; unparseable or empty cells become NaN."""
    return pd.to_numeric(frame[column].str.strip(), errors="coerce").to_numpy(dtype=np.float64)


def parse_timestamps(values: pd.Series) -> np.ndarray:
    """
    Parse a timestamp column into UTC epoch seconds.

    The format is detected per file: if every non-empty cell is numeric the column
    is epoch seconds, otherwise ISO-8601 (naive values are taken as UTC).
    Empty or unparseable cells become NaN.
    """
    text = values.astype(str).str.strip()
    present = text != ""
    as_number = pd.to_numeric(text.where(present), errors="coerce")
    if present.any() and as_number[present].notna().all():
        return as_number.to_numpy(dtype=np.float64)

    parsed = pd.to_datetime(text.where(present), utc=True, errors="coerce", format="ISO8601")
    out = np.full(len(text), np.nan)
    ok = parsed.notna().to_numpy()
    if ok.any():
        out[ok] = (parsed[ok] - _EPOCH).dt.total_seconds().to_numpy()
    return out


def write_table(
    path: str,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    echo: Optional[Dict[str, Any]] = None,
) -> int:
    """
    Write rows as CSV with a leading provenance line.

    Returns:
        Number of data rows written
    """
    frame = pd.DataFrame(list(rows), columns=list(columns))
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", newline="") as f:
        if echo is not None:
            f.write(provenance_line(echo))
        frame.to_csv(f, index=False, lineterminator="\n")
    return len(frame)


def write_json(path: str, payload: Dict[str, Any]) -> None:
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def provenance_line(echo: Dict[str, Any]) -> str:
    return PROVENANCE_PREFIX + json.dumps(echo, sort_keys=True, separators=(",", ":")) + "\n"


def read_provenance(path: str) -> Optional[Dict[str, Any]]:
    """Return the embedded config of an artifact, or None if it has none."""
    with open(path) as f:
        first = f.readline()
    if first.startswith(PROVENANCE_PREFIX):
        return json.loads(first[len(PROVENANCE_PREFIX):])
    return None


def _leading_comment_lines(path: Path) -> int:
    count = 0
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            count += 1
    return count
