from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np
import pandas as pd

PathLike = Union[str, Path]


def sanitize_for_json(obj):
    """Recursively clean objects before JSON serialization.

    * NaN becomes ``None``; +/-inf become the strings ``"inf"``/``"-inf"``
    * numpy scalars and arrays become Python numbers and lists
    * tuples and sets become lists
    """

    if obj is None or isinstance(obj, (bool, str)):
        return obj

    if isinstance(obj, Mapping):
        return {str(k): sanitize_for_json(v) for k, v in obj.items()}

    if isinstance(obj, np.ndarray):
        return sanitize_for_json(obj.tolist())

    if isinstance(obj, (list, tuple, set)):
        return [sanitize_for_json(v) for v in obj]

    if isinstance(obj, np.generic):
        obj = obj.item()

    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj

    return obj


def ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: PathLike, data: Mapping) -> Path:
    path_obj = ensure_parent(path)
    path_obj.write_text(json.dumps(sanitize_for_json(data), indent=2, sort_keys=True))
    return path_obj


def read_json(path: PathLike) -> Mapping:
    return json.loads(Path(path).read_text())


def write_table(
    path: PathLike, rows: Sequence[Mapping], columns: Sequence[str], float_format: str | None = None
) -> Path:
    """Write rows as CSV with a fixed column order; missing values stay blank.

    Without ``float_format`` floats keep full round-trip precision.
    """

    path_obj = ensure_parent(path)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path_obj, index=False, float_format=float_format, lineterminator="\n")
    return path_obj
