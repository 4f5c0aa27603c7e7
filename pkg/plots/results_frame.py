"""Shared loader for the fixed results.csv schema the fitting harness emits."""

from __future__ import annotations

import pandas as pd

REQUIRED_COLUMNS = [
    "model", "algorithm", "order", "d", "n", "M", "N", "trial",
    "err", "err_a", "err_e", "err_t", "wall_ms",
]

NUMERIC_COLUMNS = ["d", "N", "trial", "err", "err_a", "err_e", "err_t", "wall_ms"]


class SchemaError(ValueError):
    """results.csv does not match the harness column contract."""


def load_results(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except Exception as exc:
        raise SchemaError(f"{path}: cannot parse CSV ({exc})") from exc
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    if len(frame) == 0:
        raise SchemaError(f"{path}: no data rows")
    for col in NUMERIC_COLUMNS:
        converted = pd.to_numeric(frame[col].replace("", None), errors="coerce")
        bad = converted.isna() & (frame[col] != "")
        if bad.any():
            row = int(bad.idxmax()) + 2  # 1-based plus header
            raise SchemaError(f"{path}:{row}: column {col!r} is not numeric")
        frame[col] = converted
    return frame
