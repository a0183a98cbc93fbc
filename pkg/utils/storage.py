"""
Model JSON and dataset/series CSV storage utilities.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from core.exceptions import DataFormatError
from modules.system import Dataset, WienerModel

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DATASET_HEADER = ["t", "u", "y"]


def format_number(value: float, digits: int = 17) -> str:
    """Format a float with the given number of significant digits."""
    return f"{float(value):.{digits}g}"


def load_model(path: PathLike) -> WienerModel:
    """
    Load a Wiener model from JSON.

    Raises:
        DataFormatError: If the file is missing, not JSON, or not a valid model
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        return WienerModel.model_validate(payload)
    except FileNotFoundError:
        raise DataFormatError(f"Model file not found: {path}", "system")
    except json.JSONDecodeError as e:
        raise DataFormatError(f"Model file {path} is not valid JSON: {e}", "system")
    except ValidationError as e:
        raise DataFormatError(f"Invalid model in {path}: {e.errors()[0]['msg']}", "system")


def model_to_json(model: WienerModel) -> Dict[str, Any]:
    """Model JSON with the sensor in canonical poly form."""
    return {
        "theta": list(model.theta),
        "sensor": model.sensor.to_spec(),
        "var_v": model.var_v,
        "var_e": model.var_e,
    }


def save_model(model: WienerModel, path: PathLike) -> None:
    """Write a model as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_json(model), f, indent=2)
    logger.info(f"Saved model: {path}")


def _read_rows(path: PathLike) -> List[List[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return [row for row in csv.reader(f) if row]
    except FileNotFoundError:
        raise DataFormatError(f"Data file not found: {path}", "system")


def _parse_floats(rows: Iterable[List[str]], path: PathLike, line_offset: int) -> np.ndarray:
    try:
        return np.array([[float(cell) for cell in row] for row in rows], dtype=float)
    except ValueError as e:
        raise DataFormatError(f"Non-numeric entry in {path} after line {line_offset}: {e}", "system")


def load_dataset(path: PathLike) -> Dataset:
    """
    Load a dataset CSV with header ``t,u,y``.

    Raises:
        DataFormatError: On a wrong header, ragged rows or non-numeric cells
    """
    rows = _read_rows(path)
    if not rows:
        raise DataFormatError(f"Dataset file {path} is empty", "system")

    header = [cell.strip() for cell in rows[0]]
    if header != DATASET_HEADER:
        raise DataFormatError(
            f"Dataset {path} must have header {','.join(DATASET_HEADER)}, got {','.join(header)}",
            "system",
        )

    body = rows[1:]
    for line, row in enumerate(body, start=2):
        if len(row) != len(DATASET_HEADER):
            raise DataFormatError(
                f"Dataset {path} line {line} has {len(row)} columns, expected {len(DATASET_HEADER)}",
                "system",
            )
    if not body:
        raise DataFormatError(f"Dataset {path} has no samples", "system")

    values = _parse_floats(body, path, 1)
    return Dataset.from_arrays(values[:, 1], values[:, 2])


def save_dataset(dataset: Dataset, path: PathLike, digits: int = 17) -> None:
    """Write a dataset CSV (header ``t,u,y``, one-based t)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dataset_to_csv(dataset, digits))
    logger.info(f"Saved dataset with {dataset.n_samples} samples: {path}")


def dataset_to_csv(dataset: Dataset, digits: int = 17) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(DATASET_HEADER)
    for t, (u, y) in enumerate(zip(dataset.u, dataset.y), start=1):
        writer.writerow([t, format_number(u, digits), format_number(y, digits)])
    return buffer.getvalue()


def load_series(path: PathLike, column: str = "u") -> np.ndarray:
    """
    Load one numeric column (by header name) from a CSV, e.g. an input record.

    Raises:
        DataFormatError: If the column is absent or malformed
    """
    rows = _read_rows(path)
    if len(rows) < 2:
        raise DataFormatError(f"Series file {path} has no samples", "system")

    header = [cell.strip() for cell in rows[0]]
    if column not in header:
        raise DataFormatError(f"Column '{column}' not found in {path}", "system")

    index = header.index(column)
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataFormatError(f"Series {path} line {line} is ragged", "system")
    return _parse_floats([[row[index]] for row in rows[1:]], path, 1)[:, 0]


def table_to_csv(
    header: Sequence[str], rows: Sequence[Sequence[Any]], digits: int = 17
) -> str:
    """Render a table; floats are formatted, other cells written as-is."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format_number(cell, digits) if isinstance(cell, float) else cell for cell in row]
        )
    return buffer.getvalue()


def write_text(text: str, path: Optional[PathLike]) -> None:
    """Write output to a file, or to stdout when no path is given."""
    if path is None:
        print(text, end="" if text.endswith("\n") else "\n")
        return

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"Saved output: {path}")
