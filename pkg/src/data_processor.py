"""
Artifact I/O: datasets, model documents and experiment reports

CSV files are written with 17 significant digits and JSON floats with their
shortest round-trip repr, so everything read back is bit-identical.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import pandas as pd

from src.exceptions import ArtifactIOError, SchemaError

logger = logging.getLogger(__name__)

DATASET_COLUMNS = ["wind1", "wind2", "solar1", "solar2", "load", "v_target_kv"]
FEATURE_COLUMNS = DATASET_COLUMNS[:-1]
TARGET_COLUMN = DATASET_COLUMNS[-1]
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def _to_builtin(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise ArtifactIOError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_to_builtin(payload), f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    logger.info(f"Wrote {path}")
    return path


class DataProcessor:
    """
    Reads and writes the CSV/JSON artifacts of the toolkit
    """

    def __init__(self, output_dir: PathLike = "./outputs"):
        """
        Args:
            output_dir: Directory that relative output names resolve against
        """
        self.output_dir = Path(output_dir)

    def resolve(self, name: PathLike) -> Path:
        path = Path(name)
        return path if path.is_absolute() or path.parent != Path(".") else self.output_dir / path

    def write_table(self, name: PathLike, frame: pd.DataFrame) -> Path:
        """Write a DataFrame as CSV at 17 significant digits"""
        path = self.resolve(name)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        except OSError as exc:
            raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
        logger.info(f"Wrote {len(frame)} rows to {path}")
        return path

    def read_table(self, name: PathLike) -> pd.DataFrame:
        path = Path(name)
        try:
            return pd.read_csv(path, float_precision="round_trip")
        except FileNotFoundError as exc:
            raise ArtifactIOError(f"file not found: {path}") from exc
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise ArtifactIOError(f"cannot read {path}: {exc}") from exc

    def write_dataset(self, name: PathLike, X: np.ndarray, y: np.ndarray) -> Path:
        frame = pd.DataFrame(np.asarray(X, dtype=float), columns=FEATURE_COLUMNS)
        frame[TARGET_COLUMN] = np.asarray(y, dtype=float)
        return self.write_table(name, frame)

    def read_dataset(self, name: PathLike) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            (X, y): feature matrix (N, 5) and target voltages in kV (N,)
        """
        frame = self.read_table(name)
        missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"dataset {name} lacks columns {missing}")
        return frame[FEATURE_COLUMNS].to_numpy(dtype=float), frame[TARGET_COLUMN].to_numpy(dtype=float)

    def write_report(self, name: PathLike, payload: Dict[str, Any]) -> Path:
        return write_json(self.resolve(name), payload)

    def read_report(self, name: PathLike) -> Dict[str, Any]:
        return read_json(name)
