"""Tabular pipeline for the UGRansome netflow schema.

Raw CSV rows pass through a fixed sequence: parse -> label-encode -> drop
duplicate rows -> drop non-positive timestamps -> min-max scale -> stratified
split. Each stage is a standalone function so the CLI can reorder the split
for leakage experiments, and every stage is deterministic given its inputs.

Categorical codes are assigned by sorting the distinct strings of a column in
lexicographic byte order, so the mapping depends only on the value set, never
on row order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .errors import (
    ConfigError,
    DegenerateSplit,
    EmptyData,
    LengthMismatch,
    MissingColumn,
    NonNumericCell,
    RaggedRow,
    SchemaMismatch,
    UnknownCategory,
)
from .serialize import SCHEMA_VERSION, float_list, require_version

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# Published copies of the dataset circulate with slightly different headers.
HEADER_ALIASES = {
    "Ransomware": "Family",
    "Malware": "Threats",
    "Netflow_Bytes": "NetflowBytes",
}

_DEFAULT_COLUMNS = (
    ("Time", NUMERIC),
    ("Protocol", CATEGORICAL),
    ("Flag", CATEGORICAL),
    ("Family", CATEGORICAL),
    ("Clusters", NUMERIC),
    ("SeedAddress", CATEGORICAL),
    ("ExpAddress", CATEGORICAL),
    ("BTC", NUMERIC),
    ("USD", NUMERIC),
    ("NetflowBytes", NUMERIC),
    ("IPAddress", CATEGORICAL),
    ("Threats", CATEGORICAL),
    ("Port", NUMERIC),
    ("Prediction", CATEGORICAL),
)


@dataclass(frozen=True)
class RecordSchema:
    """Column layout: 13 feature columns plus one categorical target."""

    columns: tuple = _DEFAULT_COLUMNS
    target_column: str = "Prediction"

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(names) != len(set(names)):
            raise ConfigError("duplicate column names in schema")
        if len(names) != 14:
            raise ConfigError(f"schema must have exactly 14 columns, got {len(names)}")
        for _, kind in self.columns:
            if kind not in (NUMERIC, CATEGORICAL):
                raise ConfigError(f"unknown column kind {kind!r}")
        if self.target_column not in names:
            raise ConfigError(f"target column {self.target_column!r} not in schema")
        kind = dict(self.columns)[self.target_column]
        if kind != CATEGORICAL:
            raise ConfigError("target column must be categorical")

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.columns)

    @property
    def feature_names(self) -> tuple:
        return tuple(n for n in self.names if n != self.target_column)

    @property
    def numeric_names(self) -> tuple:
        return tuple(n for n, k in self.columns if k == NUMERIC)

    @property
    def categorical_names(self) -> tuple:
        return tuple(n for n, k in self.columns if k == CATEGORICAL)

    @property
    def target_index(self) -> int:
        return self.names.index(self.target_column)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise MissingColumn(name) from None

    def kind(self, name: str) -> str:
        return dict(self.columns)[name]

    def to_dict(self) -> dict:
        return {
            "columns": [[n, k] for n, k in self.columns],
            "target_column": self.target_column,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RecordSchema":
        return cls(
            tuple((n, k) for n, k in doc["columns"]),
            doc["target_column"],
        )


def default_schema() -> RecordSchema:
    return RecordSchema()


@dataclass
class RawTable:
    """Parsed string cells in schema column order."""

    header: tuple
    rows: list

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def column(self, schema: RecordSchema, name: str) -> list:
        j = schema.index(name)
        return [row[j] for row in self.rows]


def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8")), True
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return io.StringIO(data), True
    raise ConfigError(f"cannot read CSV from {type(source).__name__}")


def parse_csv(source, schema: RecordSchema | None = None) -> RawTable:
    """Read a CSV into schema order, validating shape and numeric cells.

    The header may list columns in any order and may use the known aliases;
    extra columns are rejected only when a required one is missing. Rows whose
    field count differs from the header raise :class:`RaggedRow` with the
    1-based line number, and numeric columns must parse as floats.
    """
    schema = schema or default_schema()
    stream, owned = _open_text(source)
    try:
        reader = csv.reader(stream)
        header_raw = next(reader, None)
        if header_raw is None:
            raise MissingColumn(schema.names[0])
        canonical = [HEADER_ALIASES.get(h.strip(), h.strip()) for h in header_raw]
        positions = []
        for name in schema.names:
            try:
                positions.append(canonical.index(name))
            except ValueError:
                raise MissingColumn(name) from None
        width = len(header_raw)
        numeric_cols = [
            (i, name)
            for i, name in enumerate(schema.names)
            if schema.kind(name) == NUMERIC
        ]
        rows = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != width:
                raise RaggedRow(line_no, width, len(record))
            cells = tuple(record[p].strip() for p in positions)
            for i, name in numeric_cols:
                try:
                    float(cells[i])
                except ValueError:
                    raise NonNumericCell(line_no, name, cells[i]) from None
            rows.append(cells)
        return RawTable(header=schema.names, rows=rows)
    finally:
        if owned:
            stream.close()


@dataclass
class EncodingMap:
    """Category-to-code tables, one per categorical column.

    Codes follow lexicographic byte order of the category strings, so they
    are a pure function of the value set.
    """

    categories: dict
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.categories = {
            col: tuple(values) for col, values in self.categories.items()
        }
        self._index = {
            col: {value: code for code, value in enumerate(values)}
            for col, values in self.categories.items()
        }

    def code(self, column: str, value: str) -> int:
        table = self._index.get(column)
        if table is None:
            raise MissingColumn(column)
        code = table.get(value)
        if code is None:
            raise UnknownCategory(column, value)
        return code

    def value(self, column: str, code: int) -> str:
        values = self.categories.get(column)
        if values is None:
            raise MissingColumn(column)
        if not 0 <= code < len(values):
            raise UnknownCategory(column, str(code))
        return values[code]

    def size(self, column: str) -> int:
        values = self.categories.get(column)
        if values is None:
            raise MissingColumn(column)
        return len(values)

    def to_dict(self) -> dict:
        return {col: list(values) for col, values in self.categories.items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "EncodingMap":
        return cls({col: tuple(values) for col, values in doc.items()})


@dataclass
class EncodedTable:
    """All-numeric table; categorical cells hold integer codes as floats."""

    values: np.ndarray
    schema: RecordSchema
    maps: EncodingMap
    provenance: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.schema.names):
            raise SchemaMismatch(
                f"encoded values shape {self.values.shape} does not match "
                f"{len(self.schema.names)} schema columns"
            )

    @property
    def row_count(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def codes(self, name: str) -> np.ndarray:
        return self.column(name).astype(np.int64)

    def decoded(self, name: str) -> list:
        return [self.maps.value(name, int(c)) for c in self.codes(name)]

    def target_codes(self) -> np.ndarray:
        return self.codes(self.schema.target_column)

    def with_values(self, values: np.ndarray, stage: str) -> "EncodedTable":
        return EncodedTable(
            values=values,
            schema=self.schema,
            maps=self.maps,
            provenance=self.provenance + (stage,),
        )


def build_encoding(table: RawTable, schema: RecordSchema) -> EncodingMap:
    """Derive codes from the distinct values of each categorical column."""
    categories = {}
    for name in schema.categorical_names:
        values = set(table.column(schema, name))
        categories[name] = tuple(sorted(values, key=lambda s: s.encode("utf-8")))
    return EncodingMap(categories)


def label_encode(table: RawTable, schema: RecordSchema | None = None,
                 maps: EncodingMap | None = None):
    """Turn string cells into a float matrix. Returns (EncodedTable, EncodingMap).

    When ``maps`` is given (scoring new rows with a frozen vocabulary), values
    absent from it raise :class:`UnknownCategory`; otherwise codes are built
    from this table's own value set.
    """
    schema = schema or default_schema()
    if maps is None:
        maps = build_encoding(table, schema)
    n = table.row_count
    values = np.empty((n, len(schema.names)), dtype=np.float64)
    for j, (name, kind) in enumerate(schema.columns):
        cells = [row[j] for row in table.rows]
        if kind == NUMERIC:
            try:
                values[:, j] = np.asarray(cells, dtype=np.float64)
            except ValueError:
                for i, cell in enumerate(cells):
                    try:
                        float(cell)
                    except ValueError:
                        raise NonNumericCell(i + 2, name, cell) from None
                raise
        else:
            table_for_col = maps._index.get(name)
            if table_for_col is None:
                raise MissingColumn(name)
            column_codes = np.empty(n, dtype=np.float64)
            for i, cell in enumerate(cells):
                code = table_for_col.get(cell)
                if code is None:
                    raise UnknownCategory(name, cell)
                column_codes[i] = code
            values[:, j] = column_codes
    encoded = EncodedTable(values=values, schema=schema, maps=maps,
                           provenance=("parsed", "encoded"))
    return encoded, maps


def deduplicate(table: EncodedTable):
    """Drop exact duplicate rows, keeping the first occurrence.

    Returns (table, removed_count). Row order of survivors is preserved.
    """
    seen = set()
    keep = []
    for i in range(table.row_count):
        key = table.values[i].tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    removed = table.row_count - len(keep)
    return table.with_values(table.values[keep], "deduplicated"), removed


def clean_timestamps(table: EncodedTable, column: str = "Time"):
    """Drop rows whose timestamp is not positive. Returns (table, removed)."""
    times = table.column(column)
    mask = times > 0.0
    removed = int((~mask).sum())
    return table.with_values(table.values[mask], "timestamp-cleaned"), removed


@dataclass
class NormStats:
    """Per-feature min/max captured from training rows only."""

    columns: dict  # name -> (min, max)

    def __post_init__(self):
        for name, (lo, hi) in self.columns.items():
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise SchemaMismatch(f"non-finite normalization bound for {name!r}")
            if hi < lo:
                raise SchemaMismatch(f"max < min for column {name!r}")

    @property
    def names(self) -> tuple:
        return tuple(self.columns)

    def to_dict(self) -> list:
        # a list survives key-sorting JSON writers with column order intact
        return [[name, lo, hi] for name, (lo, hi) in self.columns.items()]

    @classmethod
    def from_dict(cls, doc) -> "NormStats":
        return cls({str(name): (float(lo), float(hi)) for name, lo, hi in doc})


@dataclass
class FeatureMatrix:
    """Model-ready slice: scaled features x, integer labels y."""

    x: np.ndarray
    y: np.ndarray
    k_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2:
            raise SchemaMismatch(f"features must be 2-d, got {self.x.shape}")
        if self.y.shape != (self.x.shape[0],):
            raise LengthMismatch(
                f"{self.x.shape[0]} feature rows vs {self.y.shape[0]} labels"
            )
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.k_classes):
            raise SchemaMismatch(
                f"labels outside [0, {self.k_classes}) present"
            )

    @property
    def row_count(self) -> int:
        return self.x.shape[0]

    def take(self, idx: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.x[idx], self.y[idx], self.k_classes)


def normalize(table: EncodedTable, stats: NormStats | None = None):
    """Min-max scale the 13 feature columns into [0, 1].

    With ``stats=None`` the bounds come from this table (training use); pass
    the training stats to scale validation or test rows, which are clamped
    into [0, 1] so unseen extremes cannot escape the training range.
    Constant columns map to 0. Returns (FeatureMatrix, NormStats).
    """
    schema = table.schema
    feature_names = schema.feature_names
    idx = [schema.index(n) for n in feature_names]
    raw = table.values[:, idx]
    if stats is None:
        if table.row_count == 0:
            raise EmptyData("cannot derive normalization bounds from zero rows")
        mins = raw.min(axis=0)
        maxs = raw.max(axis=0)
        stats = NormStats({n: (float(lo), float(hi))
                           for n, lo, hi in zip(feature_names, mins, maxs)})
    else:
        if stats.names != feature_names:
            raise SchemaMismatch(
                "normalization stats cover different columns than the schema"
            )
        mins = np.array([stats.columns[n][0] for n in feature_names])
        maxs = np.array([stats.columns[n][1] for n in feature_names])
    span = maxs - mins
    scaled = np.zeros_like(raw)
    nonzero = span > 0.0
    scaled[:, nonzero] = (raw[:, nonzero] - mins[nonzero]) / span[nonzero]
    scaled = np.clip(scaled, 0.0, 1.0)
    k = table.maps.size(schema.target_column)
    fm = FeatureMatrix(scaled, table.target_codes(), k)
    return fm, stats


def stratified_indices(y: np.ndarray, test_ratio: float, seed: int):
    """Per-class random partition. Returns (train_idx, test_idx), each sorted.

    Each class contributes floor(count * ratio + 0.5) rows to the test side
    (round half up), drawn by a seeded shuffle of that class's row positions.
    Classes with fewer than 2 rows cannot appear on both sides and raise
    :class:`DegenerateSplit`.
    """
    y = np.asarray(y)
    if not 0.0 < test_ratio < 1.0:
        raise ConfigError(f"test ratio must lie in (0, 1), got {test_ratio}")
    if y.size == 0:
        raise EmptyData("cannot split zero rows")
    test_parts = []
    train_parts = []
    for c in np.unique(y):
        rows = np.flatnonzero(y == c)
        if rows.size < 2:
            raise DegenerateSplit(f"class {int(c)} has only {rows.size} row(s)")
        take = int(math.floor(rows.size * test_ratio + 0.5))
        order = rng.permutation(rng.derive(seed, "split", int(c)), rows.size)
        shuffled = rows[order]
        test_parts.append(shuffled[:take])
        train_parts.append(shuffled[take:])
    train_idx = np.sort(np.concatenate(train_parts)).astype(np.int64)
    test_idx = np.sort(np.concatenate(test_parts)).astype(np.int64)
    return train_idx, test_idx


def split(fm: FeatureMatrix, test_ratio: float, seed: int):
    """Stratified train/test split of a feature matrix."""
    train_idx, test_idx = stratified_indices(fm.y, test_ratio, seed)
    return fm.take(train_idx), fm.take(test_idx)


@dataclass
class ColumnStats:
    count: int
    mean: float
    std: float
    minimum: float
    q25: float
    median: float
    q75: float
    maximum: float

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "min": self.minimum,
            "25%": self.q25,
            "50%": self.median,
            "75%": self.q75,
            "max": self.maximum,
        }


@dataclass
class SummaryStats:
    """Describe-style numbers for each numeric column."""

    columns: dict  # name -> ColumnStats

    def to_dict(self) -> dict:
        return {name: cs.to_dict() for name, cs in self.columns.items()}

    def table_text(self) -> str:
        names = list(self.columns)
        rows = ["count", "mean", "std", "min", "25%", "50%", "75%", "max"]
        widths = {n: max(len(n), 14) for n in names}
        header = "stat".ljust(8) + "".join(n.rjust(widths[n] + 2) for n in names)
        lines = [header]
        for row in rows:
            cells = []
            for n in names:
                value = self.columns[n].to_dict()[row]
                text = f"{value}" if row == "count" else f"{value:.6f}"
                cells.append(text.rjust(widths[n] + 2))
            lines.append(row.ljust(8) + "".join(cells))
        return "\n".join(lines) + "\n"


def dataset_stats(table: EncodedTable) -> SummaryStats:
    """Count, mean, sample std, min, quartiles, and max per numeric column.

    Std uses the n-1 denominator; quartiles use linear interpolation. Columns
    with fewer than 2 rows report std 0.
    """
    out = {}
    for name in table.schema.numeric_names:
        col = table.column(name)
        n = col.size
        if n == 0:
            out[name] = ColumnStats(0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
            continue
        std = float(col.std(ddof=1)) if n > 1 else 0.0
        q25, q50, q75 = (float(v) for v in np.percentile(col, [25, 50, 75]))
        out[name] = ColumnStats(
            count=int(n),
            mean=float(col.mean()),
            std=std,
            minimum=float(col.min()),
            q25=q25,
            median=q50,
            q75=q75,
            maximum=float(col.max()),
        )
    return SummaryStats(out)


# ---------------------------------------------------------------------------
# Serialization of the fitted preprocessing state


def preprocess_to_dict(schema: RecordSchema, maps: EncodingMap,
                       stats: NormStats) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "schema": schema.to_dict(),
        "encoding": maps.to_dict(),
        "normalization": stats.to_dict(),
    }


def preprocess_from_dict(doc: dict):
    require_version(doc, "preprocessing state")
    schema = RecordSchema.from_dict(doc["schema"])
    maps = EncodingMap.from_dict(doc["encoding"])
    stats = NormStats.from_dict(doc["normalization"])
    if stats.names != schema.feature_names:
        raise SchemaMismatch("normalization stats do not cover the feature columns")
    return schema, maps, stats


def encoded_table_to_rows(table: EncodedTable):
    """Header plus repr-formatted rows for exact float round-trips."""
    header = list(table.schema.names)
    rows = [[repr(float(v)) for v in row] for row in table.values]
    return header, rows


def encoded_table_from_rows(header, rows, schema: RecordSchema,
                            maps: EncodingMap) -> EncodedTable:
    if tuple(header) != schema.names:
        raise SchemaMismatch(
            f"stored table header {tuple(header)} does not match schema"
        )
    values = (np.asarray(rows, dtype=np.float64)
              if rows else np.empty((0, len(schema.names))))
    return EncodedTable(values=values, schema=schema, maps=maps,
                        provenance=("loaded",))
