import csv
import logging
import os
import re
from typing import IO, Optional, Union

import numpy as np

from services.exceptions import ParseError

logger = logging.getLogger(__name__)

FEATURE_COLUMN = re.compile(r"^x([1-9][0-9]*)$")


def _parse_header(header) -> tuple:
    seen = set()
    features = {}
    response = None
    for pos, raw in enumerate(header):
        name = raw.strip()
        if name in seen:
            raise ParseError(f"duplicate column '{name}'", line=1, column=name)
        seen.add(name)
        match = FEATURE_COLUMN.match(name)
        if match:
            features[int(match.group(1))] = pos
        elif name == "y":
            response = pos
        else:
            raise ParseError(f"unexpected column '{name}'; expected x1..xd and optional y", line=1, column=name)
    if not features:
        raise ParseError("no feature columns (x1..xd) in header", line=1)
    d = max(features)
    missing = [f"x{k}" for k in range(1, d + 1) if k not in features]
    if missing:
        raise ParseError(f"missing feature columns: {', '.join(missing)}", line=1, column=missing[0])
    return [features[k] for k in range(1, d + 1)], response


def read_csv(source: Union[str, os.PathLike, IO[str]]) -> tuple:
    """(features, response or None) from a header-first, comma-separated UTF-8 table."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as f:
            return read_csv(f)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty CSV input", line=1)
    feature_pos, response_pos = _parse_header(header)
    names = [h.strip() for h in header]

    rows, ys = [], []
    for line_no, record in enumerate(reader, start=2):
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(record)}", line=line_no)
        try:
            rows.append([float(record[p]) for p in feature_pos])
        except ValueError:
            bad = next(p for p in feature_pos if not _is_float(record[p]))
            raise ParseError(f"non-numeric value {record[bad]!r}", line=line_no, column=names[bad])
        if response_pos is not None:
            if not _is_float(record[response_pos]):
                raise ParseError(f"non-numeric value {record[response_pos]!r}", line=line_no, column="y")
            ys.append(float(record[response_pos]))

    if len(rows) < 2:
        raise ParseError(f"need at least 2 data rows, got {len(rows)}")
    features = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(features)) or (ys and not np.all(np.isfinite(ys))):
        raise ParseError("non-finite values in data")
    logger.info(f"Loaded CSV with {features.shape[0]} rows and {features.shape[1]} features")
    return features, (np.asarray(ys, dtype=float) if response_pos is not None else None)


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def write_output(text: str, out: Optional[str] = None) -> None:
    if out is None:
        print(text, end="")
        return
    with open(out, "w", encoding="utf-8") as f:
        f.write(text)
    logger.info(f"Wrote {out}")


def read_table_hash(path: str) -> Optional[str]:
    """config_hash embedded in an emitted table (CSV or Markdown header)."""
    pattern = re.compile(r"config_hash=([0-9a-f]+)")
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            match = pattern.search(line)
            if match:
                return match.group(1)
    return None
