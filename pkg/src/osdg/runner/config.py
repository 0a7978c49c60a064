"""Experiment configuration loaded from JSON. Unknown keys are errors."""

from __future__ import annotations

import json
import os
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from ..datasets import ConfigError, DomainSpec, SplitSpec
from ..generator import BlendLaw
from ..objective import LossWeights

DETECTOR_NAMES = ("energy", "msp", "ddu", "ocsvm")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic" renders digits, "idx" reads MNIST files
    root: str | None = None  # falls back to $OSDG_DATA_DIR, then "data"
    images: str = "train-images-idx3-ubyte"
    labels: str = "train-labels-idx1-ubyte"
    synthetic_count: int = 12000
    synthetic_seed: int = 0

    def __post_init__(self):
        if self.source not in ("synthetic", "idx"):
            raise ConfigError(f"data.source must be 'synthetic' or 'idx', got {self.source!r}")
        if self.synthetic_count < 1:
            raise ConfigError("data.synthetic_count must be positive")

    def resolved_root(self) -> Path:
        return Path(self.root or os.environ.get("OSDG_DATA_DIR") or "data")


@dataclass(frozen=True)
class SplitConfig:
    # red, yellow, green for training; pure blue shares no channel with red or green
    train_palettes: tuple[tuple[float, float, float], ...] = (
        (1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 0.0))
    test_palette: tuple[float, float, float] = (0.0, 0.0, 1.0)
    id_classes: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6)
    ood_classes: tuple[int, ...] = (7, 8, 9)
    n_train: int = 5000
    n_test: int = 2000
    n_val: int = 500

    def __post_init__(self):
        if not self.train_palettes:
            raise ConfigError("split.train_palettes is empty")
        if min(self.n_train, self.n_test) < 1 or self.n_val < 0:
            raise ConfigError("split sizes must be positive")
        self.to_spec(0)  # surfaces palette / class errors at load time

    def to_spec(self, seed: int, ood_classes=None) -> SplitSpec:
        """Overriding ``ood_classes`` makes every other digit an ID class."""
        if ood_classes is None:
            ids, ood = self.id_classes, self.ood_classes
        else:
            ood = tuple(ood_classes)
            ids = tuple(c for c in range(10) if c not in ood)
        domains = tuple(DomainSpec(i, tuple(p)) for i, p in enumerate(self.train_palettes))
        test = DomainSpec(len(domains), tuple(self.test_palette))
        return SplitSpec(domains, test, ids, ood, self.n_train, self.n_test, self.n_val, seed)


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple[int, ...] = (256,)
    feature_dim: int = 64
    ink: float = 100.0  # per-sample total intensity after normalization; 0 disables

    def __post_init__(self):
        if self.feature_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError("network sizes must be positive")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 15
    batch_size: int = 64
    seed: int = 0
    float32: bool = False

    def __post_init__(self):
        if not self.lr > 0 or self.epochs < 1 or self.batch_size < 2:
            raise ConfigError("train.lr > 0, train.epochs >= 1 and train.batch_size >= 2 required")


@dataclass(frozen=True)
class GeneratorConfig:
    mode: str = "oracle"
    checkpoint: str | None = None
    semantic_dim: int = 32
    variation_dim: int = 8
    hidden: int = 256
    epochs: int = 5
    lr: float = 1e-4
    swap_weight: float = 1.0
    pca_init: bool = True

    def __post_init__(self):
        if self.mode not in ("oracle", "learned"):
            raise ConfigError(f"generator.mode must be 'oracle' or 'learned', got {self.mode!r}")


@dataclass(frozen=True)
class BlendConfig:
    kind: str = "signed_log_uniform"
    magnitude: tuple[float, float] = (0.25, 4.0)
    alpha_range: tuple[float, float] = (-100.0, 100.0)
    beta_range: tuple[float, float] = (-100.0, 100.0)

    def __post_init__(self):
        try:
            self.law()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("alpha_range", "beta_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"blend.{name} bounds out of order")

    def law(self) -> BlendLaw:
        return BlendLaw(self.kind, self.magnitude, self.alpha_range, self.beta_range)


@dataclass(frozen=True)
class LossConfig:
    zeta1: float = 0.1
    zeta2: float = 0.1
    gamma: float = -5.0
    temperature: float = 1.0

    def __post_init__(self):
        try:
            self.weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def weights(self) -> LossWeights:
        return LossWeights(self.zeta1, self.zeta2, self.gamma, self.temperature)


@dataclass(frozen=True)
class EvalConfig:
    detectors: tuple[str, ...] = ("energy", "msp", "ddu")
    ddu_ridge: float = 1e-3
    validation_seed: int = 12345

    def __post_init__(self):
        bad = [d for d in self.detectors if d not in DETECTOR_NAMES]
        if bad:
            raise ConfigError(f"unknown detector(s) {bad}; choose from {DETECTOR_NAMES}")
        if not self.ddu_ridge > 0:
            raise ConfigError("evaluation.ddu_ridge must be positive")


@dataclass(frozen=True)
class SearchSpace:
    lr: tuple[float, float] = (1e-4, 1e-1)
    zeta1: tuple[float, float] = (1e-3, 10.0)
    zeta2: tuple[float, float] = (1e-3, 10.0)
    gamma: tuple[float, float] = (-15.0, -1.0)
    runs_per_trial: int = 30
    trials: int = 3
    min_fraction: float = 0.5
    selection_metric: str = "val_auroc"

    def __post_init__(self):
        if self.runs_per_trial < 1 or self.trials < 1:
            raise ConfigError("search.runs_per_trial and search.trials must be >= 1")
        for name in ("lr", "zeta1", "zeta2", "gamma"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"search.{name} bounds out of order")
        if not (self.lr[0] > 0 and self.zeta1[0] > 0 and self.zeta2[0] > 0):
            raise ConfigError("log-uniform search bounds must be positive")
        if self.gamma[1] >= 0:
            raise ConfigError("search.gamma must stay negative")
        if self.selection_metric != "val_auroc":
            raise ConfigError("only selection_metric 'val_auroc' is supported")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    blend: BlendConfig = field(default_factory=BlendConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    search: SearchSpace = field(default_factory=SearchSpace)
    arm: str = "fsi"
    output_dir: str = "runs"

    def __post_init__(self):
        if self.arm not in ("fsi", "erm"):
            raise ConfigError(f"arm must be 'fsi' or 'erm', got {self.arm!r}")

    @property
    def weights(self) -> LossWeights:
        if self.arm == "erm":
            return replace(self.loss, zeta1=0.0, zeta2=0.0).weights()
        return self.loss.weights()

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data, "")

    def with_updates(self, **sections) -> "ExperimentConfig":
        """Shallow per-section override, e.g. ``with_updates(train={"seed": 3})``."""
        changes = {}
        for name, value in sections.items():
            current = getattr(self, name)
            if is_dataclass(current) and isinstance(value, dict):
                merged = {**asdict(current), **value}
                changes[name] = _build(type(current), merged, name)
            else:
                changes[name] = value
        return replace(self, **changes)


def _coerce(value):
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown config key(s): {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _build(hint, value, sub) if is_dataclass(hint) else _coerce(value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)
