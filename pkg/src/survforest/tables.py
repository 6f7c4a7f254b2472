"""Emit data tables as CSV or JSON with stable bytes."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

FORMATS = ("csv", "json")


def _clean(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def records(df: pd.DataFrame) -> list[dict]:
    cols = list(df.columns)
    return [{c: _clean(v) for c, v in zip(cols, row)}
            for row in df.itertuples(index=False, name=None)]


def dumps(df: pd.DataFrame, fmt: str) -> str:
    if fmt == "csv":
        return df.to_csv(index=False, lineterminator="\n", na_rep="NA")
    if fmt == "json":
        return json.dumps(records(df), indent=1) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def write_table(df: pd.DataFrame, out_dir, name: str, fmt: str = "csv") -> Path:
    """Write ``df`` to ``out_dir/name.<fmt>``, overwriting, and return the path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.{fmt}"
    path.write_text(dumps(df, fmt))
    return path


def write_record(record: dict, out_dir, name: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps({k: _clean(v) for k, v in record.items()}, indent=1,
                               sort_keys=True) + "\n")
    return path
