"""CSV ingestion and deterministic document emission.

One fixed CSV dialect: comma separator, one header row, ``.`` decimal
point, no quoting of numerics.  Parse errors name the offending line
(1-based, header is line 1) and column.  Emission is byte-deterministic:
floats are written in shortest round-trip form and JSON documents re-emit
unchanged after parsing.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Any, Mapping, Sequence

from .data import CATEGORICAL, CONTINUOUS, Dataset
from .errors import DataFormatError


def _parse_float(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_csv(
    path: str,
    target: str | None = None,
    kinds: Mapping[str, str] | None = None,
) -> Dataset:
    """Read a CSV file into a dataset.

    Columns whose every entry parses as a finite number become continuous,
    everything else categorical; ``kinds`` overrides win.  ``target`` names
    the column split out as the target vector.  Missing cells, ragged rows,
    duplicate headers, and unparseable overridden columns are errors.
    """
    kinds = dict(kinds or {})
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            table = list(reader)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path!r}: {exc}") from exc

    if not table:
        raise DataFormatError(f"{path!r} is empty")
    header = [h.strip() for h in table[0]]
    if any(not h for h in header):
        raise DataFormatError("header row contains an empty column name (line 1)")
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataFormatError(f"duplicate header names {dupes} (line 1)")
    body = table[1:]
    if not body:
        raise DataFormatError(f"{path!r} has a header but no data rows")

    for offset, row in enumerate(body):
        line = offset + 2
        if len(row) != len(header):
            raise DataFormatError(
                f"ragged row: line {line} has {len(row)} cells, expected {len(header)}"
            )
        for name, cell in zip(header, row):
            if cell.strip() == "":
                raise DataFormatError(
                    f"missing value at line {line}, column {name!r}"
                )

    if target is not None and target not in header:
        raise DataFormatError(
            f"unknown target column {target!r}; file has {header}"
        )
    for name, kind in kinds.items():
        if name not in header:
            raise DataFormatError(f"kind override for unknown column {name!r}")
        if name == target:
            raise DataFormatError("kind override names the target column")
        if kind not in (CONTINUOUS, CATEGORICAL):
            raise DataFormatError(f"unknown kind {kind!r} for column {name!r}")

    columns: dict[str, list[Any]] = {}
    explicit_kinds: dict[str, str] = {}
    target_values: list[Any] | None = None
    for col_idx, name in enumerate(header):
        raw = [row[col_idx].strip() for row in body]
        parsed = [_parse_float(cell) for cell in raw]
        wants = kinds.get(name)
        if wants == CONTINUOUS or (wants is None and all(v is not None for v in parsed)):
            if any(v is None for v in parsed):
                bad = next(i for i, v in enumerate(parsed) if v is None)
                raise DataFormatError(
                    f"column {name!r} is declared continuous but line {bad + 2} "
                    f"holds {raw[bad]!r}"
                )
            values: list[Any] = parsed
            kind = CONTINUOUS
        else:
            values = raw
            kind = CATEGORICAL
        if name == target:
            target_values = values
        else:
            columns[name] = values
            explicit_kinds[name] = kind

    if not columns:
        raise DataFormatError("no feature columns remain after splitting the target")
    return Dataset.from_columns(columns, target=target_values, kinds=explicit_kinds)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def emit_json(document: Mapping[str, Any]) -> str:
    """Serialize an output document; parsing and re-emitting is byte-identical."""
    return json.dumps(document, indent=2, ensure_ascii=True) + "\n"


def format_value(value: Any) -> str:
    """One CSV cell: shortest round-trip form for floats, raw text for levels."""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return repr(float(value))
    return str(value)


def emit_points_csv(
    xs: Sequence[Any], ys: Sequence[float], x_names: Sequence[str]
) -> str:
    lines = [",".join(list(x_names) + ["y"])]
    for x, y in zip(xs, ys):
        cells = list(x) if isinstance(x, (tuple, list)) else [x]
        lines.append(",".join(format_value(c) for c in cells) + "," + format_value(float(y)))
    return "\n".join(lines) + "\n"


def emit_score_csv(method: str, feature: str, score: float) -> str:
    return "method,feature,score\n" + f"{method},{feature},{format_value(float(score))}\n"
