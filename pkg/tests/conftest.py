"""Shared fixtures: a synthetic CSV in the expected schema and the locator
for the real dataset (optional; those tests skip with a warning without it)."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from ransomflow import rng

REAL_DATA_ENV = "UGRANSOME_CSV"

_FAMILIES = ("WannaCry", "Locky", "SamSam", "CryptoLocker", "NoobCrypt",
             "EDA2", "TowerWeb", "JigSaw")
_PROTOCOLS = ("TCP", "UDP", "ICMP")
_FLAGS = ("A", "AP", "AF", "AR", "S")
_SEED_ADDR = ("1DA11mPS", "1BonuSr7", "1sYSTEMQ", "1Gnome11")
_EXP_ADDR = ("1MMSaaXn", "1KZaaKuwi", "princexx", "1DiceYdW")
_IPS = ("A", "B", "C")
_THREATS = ("SSH", "Spam", "Scan", "Bonet", "Blacklist")
_CLASSES = ("A", "S", "SS")

HEADER = ("Time,Protocol,Flag,Ransomware,Clusters,SeedAddress,ExpAddress,"
          "BTC,USD,Netflow_Bytes,IPAddress,Malware,Port,Prediction")

# class-conditioned numeric ranges keep the labels learnable
_RANGES = {
    0: {"btc": (20.0, 90.0), "usd": (8000, 20000), "netflow": (4000, 6000),
        "clusters": (9, 12), "time": (40, 96)},
    1: {"btc": (0.0, 5.0), "usd": (100, 2000), "netflow": (500, 1500),
        "clusters": (1, 4), "time": (1, 40)},
    2: {"btc": (5.0, 20.0), "usd": (3000, 7000), "netflow": (2000, 3500),
        "clusters": (5, 8), "time": (20, 70)},
}


def _pick(options, u):
    return options[int(u * len(options)) % len(options)]


def synthetic_rows(n_per_class: int, seed: int):
    """Deterministic class-separable rows; every row unique via NetflowBytes."""
    rows = []
    counter = 0
    for cls_idx, cls in enumerate(_CLASSES):
        band = _RANGES[cls_idx]
        u = rng.uniform(rng.derive(seed, "rows", cls), (n_per_class, 10))
        for i in range(n_per_class):
            time_lo, time_hi = band["time"]
            time_val = time_lo + int(u[i, 0] * (time_hi - time_lo))
            btc_lo, btc_hi = band["btc"]
            btc = round(btc_lo + u[i, 1] * (btc_hi - btc_lo), 2)
            usd_lo, usd_hi = band["usd"]
            usd = usd_lo + int(u[i, 2] * (usd_hi - usd_lo))
            net_lo, net_hi = band["netflow"]
            netflow = net_lo + int(u[i, 3] * (net_hi - net_lo)) * 3 + counter % 3
            clu_lo, clu_hi = band["clusters"]
            clusters = clu_lo + int(u[i, 4] * (clu_hi - clu_lo + 1))
            rows.append((
                str(time_val),
                _pick(_PROTOCOLS, u[i, 5]),
                _pick(_FLAGS, u[i, 6]),
                _FAMILIES[(cls_idx * 3 + int(u[i, 7] * 3)) % len(_FAMILIES)],
                str(clusters),
                _pick(_SEED_ADDR, u[i, 8]),
                _pick(_EXP_ADDR, u[i, 9]),
                str(btc),
                str(usd),
                str(netflow + 10 * counter),  # uniqueness
                _pick(_IPS, u[i, 5]),
                _THREATS[(cls_idx * 2 + int(u[i, 6] * 2)) % len(_THREATS)],
                str(5061 + counter % 8),
                cls,
            ))
            counter += 1
    return rows


def synthetic_csv_text(n_per_class: int = 40, seed: int = 97,
                       duplicates: int = 12, bad_times: int = 6):
    """CSV text plus the counts each cleaning stage should report.

    ``duplicates`` exact copies of existing rows are appended, then
    ``bad_times`` otherwise-unique rows with non-positive timestamps.
    """
    base = synthetic_rows(n_per_class, seed)
    rows = list(base)
    u = rng.uniform(rng.derive(seed, "dups"), duplicates)
    for i in range(duplicates):
        rows.append(base[int(u[i] * len(base))])
    for i in range(bad_times):
        donor = list(base[i])
        donor[0] = str(-i)  # Time <= 0
        donor[9] = str(900000 + i)  # stays unique
        rows.append(tuple(donor))
    lines = [HEADER] + [",".join(r) for r in rows]
    meta = {
        "total_rows": len(rows),
        "unique_rows": len(base) + bad_times,
        "duplicates": duplicates,
        "bad_times": bad_times,
        "clean_rows": len(base),
        "per_class": {cls: n_per_class for cls in _CLASSES},
        "classes": _CLASSES,
    }
    return "\n".join(lines) + "\n", meta


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    text, meta = synthetic_csv_text()
    path = tmp_path_factory.mktemp("data") / "synthetic.csv"
    path.write_text(text, encoding="utf-8")
    return path, meta


def real_csv_path():
    env = os.environ.get(REAL_DATA_ENV)
    if env and Path(env).is_file():
        return Path(env)
    root = Path(__file__).resolve().parent.parent
    for name in ("UGRansome.csv", "ugransome.csv", "final(2).csv"):
        candidate = root / "data" / name
        if candidate.is_file():
            return candidate
    return None


def require_real_csv() -> Path:
    path = real_csv_path()
    if path is None:
        pytest.skip(
            "WARNING: full-dataset check skipped; place the UGRansome CSV at "
            "data/UGRansome.csv or point UGRANSOME_CSV at it"
        )
    return path


def blob_data(n_per_class: int, k: int, seed: int, width: int = 13,
              spread: float = 0.1):
    """Well-separated class blobs in the unit cube, shuffled."""
    centers = np.linspace(0.2, 0.8, k)
    xs, ys = [], []
    for c in range(k):
        u = rng.uniform(rng.derive(seed, "blob", c), (n_per_class, width))
        xs.append(centers[c] + spread * (u - 0.5))
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(rng.derive(seed, "shuffle"), len(y))
    return x[order], y[order]
