"""Immutable tabular data with per-feature metadata.

A :class:`Dataset` holds an n x p feature matrix (continuous columns as
float64, categorical columns as level strings), optional targets, and the
provenance records of the operations that produced it.  Datasets are never
mutated; sampling and interventions return new instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidLevelError, UnsupportedKindError
from .trace import StageRecord

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureMeta:
    """Schema for one feature column.

    ``levels`` is the ordered list of admissible values for a categorical
    feature; ``observed_range`` is the (min, max) seen at construction time
    for a continuous one.  Interventions may move continuous values outside
    the observed range (deliberately: finite-difference methods extrapolate),
    so the range describes the original observations, not a constraint.
    """

    name: str
    kind: str
    levels: tuple[str, ...] | None = None
    observed_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise InvalidArgumentError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise InvalidArgumentError(
                    f"categorical feature {self.name!r} needs a non-empty level list"
                )
            levels = tuple(str(v) for v in self.levels)
            if len(set(levels)) != len(levels):
                raise InvalidArgumentError(f"duplicate levels for feature {self.name!r}")
            object.__setattr__(self, "levels", levels)
            if self.observed_range is not None:
                raise InvalidArgumentError(
                    f"categorical feature {self.name!r} cannot carry an observed range"
                )
        else:
            if self.levels is not None:
                raise InvalidArgumentError(
                    f"continuous feature {self.name!r} cannot carry levels"
                )
            if self.observed_range is not None:
                lo, hi = (float(self.observed_range[0]), float(self.observed_range[1]))
                if not (np.isfinite(lo) and np.isfinite(hi)):
                    raise InvalidArgumentError(
                        f"observed range of {self.name!r} must be finite"
                    )
                if lo > hi:
                    raise InvalidArgumentError(
                        f"observed range of {self.name!r} has min > max"
                    )
                object.__setattr__(self, "observed_range", (lo, hi))

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS


def _is_number(value: Any) -> bool:
    return isinstance(value, (Real, np.floating, np.integer)) and not isinstance(
        value, (bool, np.bool_)
    )


def _as_float_column(values: Sequence[Any], name: str) -> np.ndarray:
    col = np.asarray(values, dtype=float)
    if col.ndim != 1:
        raise InvalidArgumentError(f"column {name!r} is not one-dimensional")
    if not np.all(np.isfinite(col)):
        raise InvalidArgumentError(
            f"column {name!r} contains missing or non-finite values; "
            "missing data is rejected at construction"
        )
    return col


def _as_level_column(values: Sequence[Any], meta: FeatureMeta) -> np.ndarray:
    col = np.array([str(v) for v in values], dtype=object)
    allowed = set(meta.levels or ())
    for v in col:
        if v not in allowed:
            raise InvalidLevelError(
                f"value {v!r} is not a registered level of feature {meta.name!r} "
                f"(levels: {list(meta.levels or ())})"
            )
    return col


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class Dataset:
    """Immutable sample of n observations over p features, plus optional target.

    Parameters
    ----------
    features : sequence of rows (each of length p) or 2-D array
        Continuous entries must be real numbers; categorical entries are
        level identifiers (anything string-convertible).
    meta : sequence of FeatureMeta, optional
        Column schemas.  Inferred when omitted: a column whose entries are
        all numeric becomes continuous, anything else categorical with
        sorted unique levels.  Missing observed ranges are filled in from
        the data.
    target : sequence of length n, optional
    provenance : tuple of StageRecord
        How this dataset was derived; carried into result traces.
    """

    __slots__ = ("_columns", "_meta", "_target", "_provenance", "_matrix", "_name_index")

    def __init__(
        self,
        features: Sequence[Sequence[Any]] | np.ndarray,
        meta: Sequence[FeatureMeta] | None = None,
        target: Sequence[Any] | None = None,
        provenance: tuple[StageRecord, ...] = (),
    ) -> None:
        rows = [list(r) for r in features]
        if len(rows) == 0:
            raise InvalidArgumentError("a dataset needs at least one observation")
        p = len(rows[0])
        if p == 0:
            raise InvalidArgumentError("a dataset needs at least one feature")
        for i, r in enumerate(rows):
            if len(r) != p:
                raise InvalidArgumentError(
                    f"row {i} has {len(r)} entries, expected {p}"
                )
        raw_columns = [[r[j] for r in rows] for j in range(p)]

        if meta is None:
            meta = tuple(_infer_meta(f"x{j + 1}", raw_columns[j]) for j in range(p))
        else:
            meta = tuple(meta)
            if len(meta) != p:
                raise InvalidArgumentError(
                    f"got {len(meta)} feature metadata entries for {p} columns"
                )
        names = [m.name for m in meta]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("feature names must be unique")

        columns: list[np.ndarray] = []
        fixed_meta: list[FeatureMeta] = []
        for j, m in enumerate(meta):
            if m.kind == CONTINUOUS:
                col = _as_float_column(raw_columns[j], m.name)
                if m.observed_range is None:
                    m = FeatureMeta(
                        m.name, CONTINUOUS, observed_range=(col.min(), col.max())
                    )
            else:
                col = _as_level_column(raw_columns[j], m)
            columns.append(_freeze(col))
            fixed_meta.append(m)

        object.__setattr__(self, "_columns", tuple(columns))
        object.__setattr__(self, "_meta", tuple(fixed_meta))
        object.__setattr__(self, "_target", _build_target(target, len(rows)))
        object.__setattr__(self, "_provenance", tuple(provenance))
        object.__setattr__(self, "_matrix", None)
        object.__setattr__(
            self, "_name_index", {m.name: j for j, m in enumerate(fixed_meta)}
        )

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("Dataset is immutable")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_columns(
        cls,
        columns: Mapping[str, Sequence[Any]],
        target: Sequence[Any] | None = None,
        kinds: Mapping[str, str] | None = None,
    ) -> "Dataset":
        """Build a dataset from named columns, inferring kinds unless given."""
        kinds = dict(kinds or {})
        meta = []
        cols = []
        for name, values in columns.items():
            values = list(values)
            kind = kinds.pop(name, None)
            if kind is None:
                meta.append(_infer_meta(name, values))
            elif kind == CONTINUOUS:
                meta.append(FeatureMeta(name, CONTINUOUS))
            elif kind == CATEGORICAL:
                levels = tuple(sorted({str(v) for v in values}))
                meta.append(FeatureMeta(name, CATEGORICAL, levels=levels))
            else:
                raise InvalidArgumentError(f"unknown feature kind {kind!r}")
            cols.append(values)
        if kinds:
            raise InvalidArgumentError(f"kind overrides for unknown columns: {sorted(kinds)}")
        if not cols:
            raise InvalidArgumentError("a dataset needs at least one feature")
        rows = list(zip(*cols))
        return cls(rows, meta=meta, target=target)

    # -- basic accessors -------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self._columns[0])

    @property
    def n_features(self) -> int:
        return len(self._columns)

    @property
    def meta(self) -> tuple[FeatureMeta, ...]:
        return self._meta

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self._meta)

    @property
    def target(self) -> np.ndarray | None:
        return self._target

    @property
    def provenance(self) -> tuple[StageRecord, ...]:
        return self._provenance

    def feature_index(self, feature: int | str) -> int:
        """Resolve a feature given by index or name to a column index."""
        if isinstance(feature, str):
            try:
                return self._name_index[feature]
            except KeyError:
                raise InvalidArgumentError(
                    f"unknown feature {feature!r}; have {list(self.feature_names)}"
                ) from None
        j = int(feature)
        if not 0 <= j < self.n_features:
            raise InvalidArgumentError(
                f"feature index {j} out of range for {self.n_features} features"
            )
        return j

    def column(self, feature: int | str) -> np.ndarray:
        return self._columns[self.feature_index(feature)]

    def row(self, i: int) -> tuple[Any, ...]:
        """Feature values of observation ``i`` as plain Python scalars."""
        if not 0 <= i < self.n_rows:
            raise InvalidArgumentError(
                f"observation index {i} out of range for {self.n_rows} rows"
            )
        out = []
        for col, m in zip(self._columns, self._meta):
            out.append(float(col[i]) if m.kind == CONTINUOUS else str(col[i]))
        return tuple(out)

    def matrix(self) -> np.ndarray:
        """The n x p feature matrix (float64 if all columns are continuous)."""
        if self._matrix is None:
            if all(m.kind == CONTINUOUS for m in self._meta):
                mat = np.column_stack(self._columns).astype(float)
            else:
                mat = np.empty((self.n_rows, self.n_features), dtype=object)
                for j, col in enumerate(self._columns):
                    mat[:, j] = col
            object.__setattr__(self, "_matrix", _freeze(mat))
        return self._matrix

    # -- derivation ------------------------------------------------------------

    def replace_columns(
        self,
        new_columns: Mapping[int, np.ndarray],
        record: StageRecord | None = None,
        row_subset: np.ndarray | None = None,
    ) -> "Dataset":
        """Internal constructor for derived datasets (interventions, sampling).

        Column replacements are validated against the existing metadata; the
        metadata itself (including observed ranges) is carried over unchanged.
        """
        cols = []
        for j, (col, m) in enumerate(zip(self._columns, self._meta)):
            if j in new_columns:
                raw = new_columns[j]
                if m.kind == CONTINUOUS:
                    col = _as_float_column(np.asarray(raw, dtype=float), m.name)
                else:
                    col = _as_level_column(list(raw), m)
            if row_subset is not None:
                col = col[row_subset]
            cols.append(_freeze(np.array(col)))
        target = self._target
        if target is not None and row_subset is not None:
            target = _freeze(target[row_subset].copy())
        provenance = self._provenance + ((record,) if record is not None else ())
        out = object.__new__(Dataset)
        object.__setattr__(out, "_columns", tuple(cols))
        object.__setattr__(out, "_meta", self._meta)
        object.__setattr__(out, "_target", target)
        object.__setattr__(out, "_provenance", provenance)
        object.__setattr__(out, "_matrix", None)
        object.__setattr__(out, "_name_index", self._name_index)
        return out

    def check_value(self, j: int, value: Any) -> Any:
        """Validate one prospective value for column ``j``; returns it normalized."""
        m = self._meta[j]
        if m.kind == CONTINUOUS:
            if not _is_number(value):
                raise UnsupportedKindError(
                    f"feature {m.name!r} is continuous; got non-numeric {value!r}"
                )
            v = float(value)
            if not np.isfinite(v):
                raise InvalidArgumentError(f"non-finite value for feature {m.name!r}")
            return v
        v = str(value)
        if v not in (m.levels or ()):
            raise InvalidLevelError(
                f"value {v!r} is not a registered level of feature {m.name!r} "
                f"(levels: {list(m.levels or ())})"
            )
        return v

    def check_vector(self, x: Sequence[Any]) -> tuple[Any, ...]:
        """Validate a full feature vector against this dataset's schema."""
        x = list(x)
        if len(x) != self.n_features:
            raise InvalidArgumentError(
                f"feature vector has {len(x)} entries, expected {self.n_features}"
            )
        return tuple(self.check_value(j, v) for j, v in enumerate(x))


def _infer_meta(name: str, values: Sequence[Any]) -> FeatureMeta:
    if all(_is_number(v) for v in values):
        return FeatureMeta(name, CONTINUOUS)
    levels = tuple(sorted({str(v) for v in values}))
    return FeatureMeta(name, CATEGORICAL, levels=levels)


def _build_target(target: Sequence[Any] | None, n: int) -> np.ndarray | None:
    if target is None:
        return None
    values = list(target)
    if len(values) != n:
        raise InvalidArgumentError(
            f"target has {len(values)} entries for {n} observations"
        )
    if all(_is_number(v) for v in values):
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("target contains missing or non-finite values")
    else:
        arr = np.array([str(v) for v in values], dtype=object)
    return _freeze(arr)
