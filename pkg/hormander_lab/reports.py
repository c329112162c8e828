"""
reports.py

JSON reports and side tables. JSON is written with sorted keys so reruns with one seed
are byte-identical; tables go next to it as <out>.<table>.csv, or into one workbook
<out>.tables.xlsx with --tables xlsx.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .errors import InputError

log = logging.getLogger(__name__)

TABLE_FORMATS = ("csv", "xlsx")


def to_jsonable(obj):
    """numpy scalars and arrays to Python; non-finite floats to the strings inf, -inf, nan."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return obj


def dumps(report: dict) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, out: Optional[Path], tables: Optional[Dict[str, List[dict]]] = None,
                 table_format: str = "csv") -> List[Path]:
    """Write the JSON report (stdout when out is None) and its side tables; returns the written paths."""
    if table_format not in TABLE_FORMATS:
        raise InputError(f"Table format must be one of {TABLE_FORMATS}, got {table_format!r}")
    text = dumps(report)
    if out is None:
        print(text, end="")
        return []
    out = Path(out).expanduser().resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    written = [out]
    tables = {k: v for k, v in (tables or {}).items() if v}
    if not tables:
        return written
    frames = {name: pd.DataFrame(to_jsonable(rows)) for name, rows in tables.items()}
    if table_format == "xlsx":
        path = out.with_suffix(".tables.xlsx")
        with pd.ExcelWriter(path, engine="openpyxl") as writer:
            for name, df in sorted(frames.items()):
                df.to_excel(writer, sheet_name=name[:31], index=False)
        written.append(path)
    else:
        for name, df in sorted(frames.items()):
            path = out.with_suffix(f".{name}.csv")
            df.to_csv(path, index=False)
            written.append(path)
    log.debug("Wrote %s", ", ".join(str(p) for p in written))
    return written


def read_table(path) -> pd.DataFrame:
    """CSV or Excel by suffix; Excel sheets are concatenated."""
    path = Path(path).expanduser()
    if not path.exists():
        raise InputError(f"Table not found: {path}")
    if path.suffix.lower() == ".csv":
        return pd.read_csv(path)
    xls = pd.ExcelFile(path)
    frames = [pd.read_excel(path, sheet_name=s) for s in xls.sheet_names]
    frames = [f for f in frames if not f.dropna(how="all").empty]
    if not frames:
        raise InputError(f"No data in {path}")
    return pd.concat(frames, ignore_index=True)


def summary_lines(report: dict, keys) -> List[str]:
    """Aligned 'key  value' lines for the scalar entries a human wants to see."""
    width = max((len(k) for k in keys), default=0)
    out = []
    for key in keys:
        value = report.get(key)
        if isinstance(value, float):
            value = f"{value:.6g}"
        out.append(f"{key.ljust(width)}  {value}")
    return out
