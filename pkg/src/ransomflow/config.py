"""Pipeline configuration: JSON file plus command-line overrides.

One master seed feeds every stochastic stage through labeled substreams, so
changing it reseeds the whole pipeline coherently while two stages never
share a stream. Unknown keys anywhere in the file are rejected rather than
ignored; a typo should fail loudly, not silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import rng
from .errors import ConfigError
from .gbt import GbtParams
from .lstm import LstmConfig
from .sae import SAEConfig

DEFAULT_SEED = 1819


@dataclass
class PipelineConfig:
    csv_path: str | None = None
    test_ratio: float = 0.2
    split_before_dedup: bool = False
    subsample: float | None = None
    seed: int = DEFAULT_SEED
    fine_tune: bool = False
    output_dir: str = "out"
    sae: SAEConfig = field(default_factory=SAEConfig)
    lstm: LstmConfig = field(default_factory=LstmConfig)
    gbt: GbtParams = field(default_factory=GbtParams)

    def __post_init__(self):
        if not 0.0 < self.test_ratio < 1.0:
            raise ConfigError(
                f"test ratio must lie in (0, 1), got {self.test_ratio}"
            )
        if self.subsample is not None and not 0.0 < self.subsample < 1.0:
            raise ConfigError(
                f"subsample fraction must lie in (0, 1), got {self.subsample}"
            )

    # Stage-specific seeds are derived lazily so a --seed override on the
    # command line re-derives every substream.
    def split_seed(self) -> int:
        return rng.derive(self.seed, "split")

    def subsample_seed(self) -> int:
        return rng.derive(self.seed, "subsample")

    def sae_effective(self) -> SAEConfig:
        return replace(self.sae, seed=rng.derive(self.seed, "sae"))

    def lstm_effective(self) -> LstmConfig:
        return replace(self.lstm, seed=rng.derive(self.seed, "lstm"))

    def echo(self) -> dict:
        """Fully expanded settings, defaults included, for artifact headers."""
        return {
            "dataset": {
                "csv": self.csv_path,
                "test_ratio": self.test_ratio,
                "split_before_dedup": self.split_before_dedup,
                "subsample": self.subsample,
            },
            "seed": self.seed,
            "fine_tune": self.fine_tune,
            "output_dir": self.output_dir,
            "sae": self.sae_effective().to_dict(),
            "lstm": self.lstm_effective().to_dict(),
            "gbt": self.gbt.to_dict(),
        }


_DATASET_KEYS = {"csv", "test_ratio", "split_before_dedup", "subsample"}
_TOP_KEYS = {"dataset", "seed", "fine_tune", "output_dir", "sae", "lstm", "gbt"}
_SAE_KEYS = {"encoder_dims", "activation", "epochs", "batch_size",
             "learning_rate", "convergence_threshold"}
_LSTM_KEYS = {"hidden_size", "num_layers", "epochs", "batch_size",
              "learning_rate", "sequence_layout", "clip_threshold"}
_GBT_KEYS = {"gamma", "lambda", "shrinkage", "max_depth", "rounds",
             "min_child_hessian"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return value


def from_dict(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be an object")
    _check_keys(doc, _TOP_KEYS, "configuration")
    ds = _section(doc, "dataset")
    _check_keys(ds, _DATASET_KEYS, "dataset")
    sae_doc = _section(doc, "sae")
    _check_keys(sae_doc, _SAE_KEYS, "sae")
    lstm_doc = _section(doc, "lstm")
    _check_keys(lstm_doc, _LSTM_KEYS, "lstm")
    gbt_doc = _section(doc, "gbt")
    _check_keys(gbt_doc, _GBT_KEYS, "gbt")
    try:
        sae_cfg = SAEConfig(**{k: tuple(v) if k == "encoder_dims" else v
                               for k, v in sae_doc.items()})
        lstm_cfg = LstmConfig(**lstm_doc)
        gbt_cfg = GbtParams(**{("lambda_" if k == "lambda" else k): v
                               for k, v in gbt_doc.items()})
        return PipelineConfig(
            csv_path=ds.get("csv"),
            test_ratio=ds.get("test_ratio", 0.2),
            split_before_dedup=bool(ds.get("split_before_dedup", False)),
            subsample=ds.get("subsample"),
            seed=int(doc.get("seed", DEFAULT_SEED)),
            fine_tune=bool(doc.get("fine_tune", False)),
            output_dir=doc.get("output_dir", "out"),
            sae=sae_cfg,
            lstm=lstm_cfg,
            gbt=gbt_cfg,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from None


def load_config(path) -> PipelineConfig:
    """Parse a JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return from_dict(doc)
