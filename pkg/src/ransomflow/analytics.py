"""Financial-impact and distribution analytics over an encoded table.

All group-by work decodes categorical codes back to their string values, so
reports read naturally regardless of how the vocabulary was numbered. Money
columns are taken as-is from the cleaned table (pre-normalization values).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import EncodedTable
from .errors import ConfigError, InsufficientRows, ShapeMismatch, UnknownCategory
from .serialize import SCHEMA_VERSION


@dataclass
class FamilyFinance:
    attack_count: int
    total_usd: float
    mean_usd: float
    total_btc: float
    mean_btc: float


@dataclass
class FinancialReport:
    families: dict  # name -> FamilyFinance, keyed in vocabulary (byte) order
    global_mean_usd: float
    global_mean_btc: float
    total_usd: float
    total_btc: float
    row_count: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "families": {
                name: {
                    "attack_count": ff.attack_count,
                    "total_usd": ff.total_usd,
                    "mean_usd": ff.mean_usd,
                    "total_btc": ff.total_btc,
                    "mean_btc": ff.mean_btc,
                }
                for name, ff in self.families.items()
            },
            "global_mean_usd": self.global_mean_usd,
            "global_mean_btc": self.global_mean_btc,
            "total_usd": self.total_usd,
            "total_btc": self.total_btc,
            "row_count": self.row_count,
        }

    def to_csv(self) -> str:
        lines = ["family,attack_count,total_usd,mean_usd,total_btc,mean_btc"]
        for name, ff in self.families.items():
            lines.append(
                f"{name},{ff.attack_count},{ff.total_usd!r},{ff.mean_usd!r},"
                f"{ff.total_btc!r},{ff.mean_btc!r}"
            )
        lines.append(
            f"(all),{self.row_count},{self.total_usd!r},{self.global_mean_usd!r},"
            f"{self.total_btc!r},{self.global_mean_btc!r}"
        )
        return "\n".join(lines) + "\n"


def financial_report(table: EncodedTable, family_column: str = "Family",
                     usd_column: str = "USD",
                     btc_column: str = "BTC") -> FinancialReport:
    """Attack counts and money totals per ransomware family.

    Families absent from the table are omitted; an empty table produces an
    empty report with zero global means.
    """
    codes = table.codes(family_column)
    usd = table.column(usd_column)
    btc = table.column(btc_column)
    vocab_size = table.maps.size(family_column)
    counts = np.bincount(codes, minlength=vocab_size)
    usd_totals = np.bincount(codes, weights=usd, minlength=vocab_size)
    btc_totals = np.bincount(codes, weights=btc, minlength=vocab_size)
    families = {}
    for code in range(vocab_size):
        if counts[code] == 0:
            continue
        name = table.maps.value(family_column, code)
        families[name] = FamilyFinance(
            attack_count=int(counts[code]),
            total_usd=float(usd_totals[code]),
            mean_usd=float(usd_totals[code] / counts[code]),
            total_btc=float(btc_totals[code]),
            mean_btc=float(btc_totals[code] / counts[code]),
        )
    n = table.row_count
    return FinancialReport(
        families=families,
        global_mean_usd=float(usd.mean()) if n else 0.0,
        global_mean_btc=float(btc.mean()) if n else 0.0,
        total_usd=float(usd.sum()),
        total_btc=float(btc.sum()),
        row_count=n,
    )


_RANK_KEYS = ("attack_count", "total_usd", "mean_usd", "total_btc", "mean_btc")


def rank_families(report: FinancialReport, key: str = "total_usd",
                  top_n: int | None = None):
    """Families ordered by the chosen quantity, largest first.

    Ties break on the family name ascending, keeping rankings reproducible.
    Returns (name, value) pairs, truncated to ``top_n`` when given.
    """
    if key not in _RANK_KEYS:
        raise ConfigError(f"rank key must be one of {_RANK_KEYS}, got {key!r}")
    pairs = [(name, getattr(ff, key)) for name, ff in report.families.items()]
    pairs.sort(key=lambda kv: (-kv[1], kv[0]))
    if top_n is not None:
        pairs = pairs[:top_n]
    return pairs


@dataclass
class DistributionReport:
    column: str
    entries: list  # (name, count, percent), count descending
    total: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "column": self.column,
            "total": self.total,
            "entries": [
                {"value": name, "count": count, "percent": pct}
                for name, count, pct in self.entries
            ],
        }

    def to_csv(self) -> str:
        lines = ["value,count,percent"]
        for name, count, pct in self.entries:
            lines.append(f"{name},{count},{pct!r}")
        return "\n".join(lines) + "\n"

    def percent_of(self, name: str) -> float:
        for value, _, pct in self.entries:
            if value == name:
                return pct
        return 0.0


def malware_distribution(table: EncodedTable,
                         column: str = "Threats") -> DistributionReport:
    """Share of rows per category, sorted by count descending then name."""
    codes = table.codes(column)
    vocab_size = table.maps.size(column)
    counts = np.bincount(codes, minlength=vocab_size)
    total = table.row_count
    entries = []
    for code in range(vocab_size):
        if counts[code] == 0:
            continue
        name = table.maps.value(column, code)
        pct = 100.0 * counts[code] / total
        entries.append((name, int(counts[code]), float(pct)))
    entries.sort(key=lambda e: (-e[1], e[0]))
    return DistributionReport(column=column, entries=entries, total=total)


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    feature_names: tuple
    zero_variance: tuple  # bool per feature

    def pair(self, a: str, b: str) -> float:
        i = self.feature_names.index(a)
        j = self.feature_names.index(b)
        return float(self.values[i, j])

    def to_csv(self) -> str:
        lines = ["feature," + ",".join(self.feature_names)]
        for i, name in enumerate(self.feature_names):
            lines.append(name + "," + ",".join(repr(float(v))
                                               for v in self.values[i]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "features": list(self.feature_names),
            "zero_variance": [n for n, flag in zip(self.feature_names,
                                                   self.zero_variance) if flag],
            "matrix": [[float(v) for v in row] for row in self.values],
        }


def correlation_matrix(data, feature_names=None) -> CorrelationMatrix:
    """Pearson correlations between feature columns.

    Accepts a FeatureMatrix or a plain (n, d) array. Needs at least 2 rows.
    Constant columns cannot be correlated; they are flagged and their rows and
    columns (diagonal included) are set to 0 rather than NaN.
    """
    x = np.asarray(data.x if hasattr(data, "x") else data, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected (rows, features), got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise InsufficientRows(2, n, "correlation")
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(d))
    feature_names = tuple(feature_names)
    if len(feature_names) != d:
        raise ShapeMismatch(f"{len(feature_names)} names for {d} columns")
    constant = np.array([bool((x[:, j] == x[0, j]).all()) for j in range(d)])
    centered = x - x.mean(axis=0)
    centered[:, constant] = 0.0
    cross = centered.T @ centered
    scale = np.sqrt(np.diag(cross))
    safe = np.where(constant, 1.0, scale)
    corr = cross / np.outer(safe, safe)
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    valid = ~constant
    corr[valid, valid] = 1.0
    return CorrelationMatrix(values=corr, feature_names=feature_names,
                             zero_variance=tuple(bool(b) for b in constant))


def anomaly_by_family(table: EncodedTable, anomaly_value: str = "A",
                      family_column: str = "Family"):
    """Rows labeled with the anomaly class, counted per family.

    Every family in the vocabulary appears, zero counts included, sorted by
    count descending then name ascending. A vocabulary without the anomaly
    value yields all-zero counts rather than an error.
    """
    target = table.schema.target_column
    try:
        anomaly_code = table.maps.code(target, anomaly_value)
    except UnknownCategory:
        anomaly_code = -1
    vocab_size = table.maps.size(family_column)
    if anomaly_code >= 0:
        mask = table.target_codes() == anomaly_code
        counts = np.bincount(table.codes(family_column)[mask],
                             minlength=vocab_size)
    else:
        counts = np.zeros(vocab_size, dtype=np.int64)
    pairs = [(table.maps.value(family_column, code), int(counts[code]))
             for code in range(vocab_size)]
    pairs.sort(key=lambda kv: (-kv[1], kv[0]))
    return pairs


def anomaly_csv(pairs) -> str:
    lines = ["family,anomaly_rows"]
    for name, count in pairs:
        lines.append(f"{name},{count}")
    return "\n".join(lines) + "\n"
