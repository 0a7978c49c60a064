"""Single training runs and their evaluation."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import numerics as nx
from ..datasets import ColoredSet, ConfigError, RawDigitSet, load_idx, make_split
from ..detectors import make_detector
from ..generator import GenerativeModel, LearnedGenerator, OracleGenerator
from ..glyphs import synth_digits
from ..metrics import MetricsRow, ScoredTestSet, auroc, metrics_row, row_dict
from ..network import Network
from ..numerics import ContractError, TrainingError
from ..objective import total_loss
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DataConfig, ExperimentConfig

log = logging.getLogger(__name__)

INPUT_DIM = 3 * 28 * 28


@dataclass
class RunManifest:
    run_id: str
    arm: str
    seed: int
    ood_classes: tuple[int, ...]
    config: dict
    input_hash: str
    started: str
    wall_seconds: float
    loss_trace: list[dict]
    metrics: list[dict] = field(default_factory=list)
    checkpoint: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> dict:
        return self.loss_trace[-1] if self.loss_trace else {}

    def rows(self) -> list[MetricsRow]:
        return [MetricsRow(**m) for m in self.metrics]

    def to_json(self) -> str:
        d = asdict(self)
        d["final_loss"] = self.final_loss
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        d.pop("final_loss", None)
        d["ood_classes"] = tuple(d["ood_classes"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json())


@dataclass
class TrainResult:
    network: Network
    manifest: RunManifest


# ---------------------------------------------------------------------- data

@lru_cache(maxsize=4)
def _synthetic_raw(count: int, seed: int) -> RawDigitSet:
    return synth_digits(count, seed)


def load_raw(cfg: DataConfig) -> RawDigitSet:
    if cfg.source == "synthetic":
        return _synthetic_raw(cfg.synthetic_count, cfg.synthetic_seed)
    root = cfg.resolved_root()
    images, labels = root / cfg.images, root / cfg.labels
    for p in (images, labels):
        if not p.exists():
            raise ConfigError(f"data file {p} not found (set data.root or OSDG_DATA_DIR)")
    return load_idx(images, labels)


def build_splits(config: ExperimentConfig, seed: int | None = None,
                 ood_classes=None) -> dict[str, ColoredSet]:
    seed = config.train.seed if seed is None else seed
    spec = config.split.to_spec(seed, ood_classes)
    return make_split(load_raw(config.data), spec)


def build_generator(config: ExperimentConfig) -> GenerativeModel:
    gcfg = config.generator
    if gcfg.mode == "oracle":
        return OracleGenerator()
    if not gcfg.checkpoint or not Path(gcfg.checkpoint).exists():
        raise ConfigError("generator.mode is 'learned' but generator.checkpoint is missing; "
                          "run train-g first")
    return LearnedGenerator.from_state(load_checkpoint(gcfg.checkpoint))


def input_hash(config: ExperimentConfig, splits: dict[str, ColoredSet]) -> str:
    h = hashlib.sha256(config.to_json().encode())
    for name in sorted(splits):
        s = splits[name]
        h.update(name.encode())
        h.update(np.ascontiguousarray(s.images).tobytes())
        h.update(np.ascontiguousarray(s.labels).tobytes())
    return h.hexdigest()


def num_classes(splits: dict[str, ColoredSet]) -> int:
    labels = splits["train"].labels
    return int(labels.max()) + 1


# ------------------------------------------------------------------ training

def train(config: ExperimentConfig, splits: dict[str, ColoredSet] | None = None,
          generator: GenerativeModel | None = None, out_dir=None, run_id: str = "run",
          evaluate_after: bool = True, ood_classes=None) -> TrainResult:
    """Minimize the objective with mini-batch SGD; returns the network and its manifest.

    The ERM arm runs with zero regularizer weights and never touches the
    generator, so it consumes exactly the same data-order random stream as
    the FSI arm under the same seed.
    """
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    seed = config.train.seed
    if splits is None:
        splits = build_splits(config, seed, ood_classes)
    weights = config.weights
    regularized = weights.zeta1 > 0 or weights.zeta2 > 0
    G = None
    if regularized:
        G = generator if generator is not None else build_generator(config)
    law = config.blend.law()
    dtype = np.float32 if config.train.float32 else np.float64

    train_set = splits["train"]
    net = Network(INPUT_DIM, config.network.hidden, config.network.feature_dim,
                  num_classes(splits), seed=nx.derive_seed(seed, 1), dtype=dtype,
                  ink=config.network.ink)
    params = net.parameters()
    order_rng = nx.rng_stream(nx.derive_seed(seed, 2))
    aug_rng = nx.rng_stream(nx.derive_seed(seed, 3))
    images = train_set.images.astype(dtype, copy=False)
    n, bs = len(train_set), config.train.batch_size
    out_dir = Path(out_dir) if out_dir is not None else None

    trace = []
    for epoch in range(config.train.epochs):
        order = order_rng.permutation(n)
        sums = {"ce": 0.0, "r_f": 0.0, "r_e": 0.0, "total": 0.0}
        steps = 0
        for start in range(0, n, bs):
            idx = np.sort(order[start:start + bs])
            x, y = images[idx], train_set.labels[idx]
            ood = None
            if regularized and weights.zeta2 > 0 and len(np.unique(y)) > 1:
                ood = G.synth_ood_batch(x, y, aug_rng, law).astype(dtype, copy=False)
            # sgd_step rebinds .data, so this snapshot stays valid without copying
            last_good = net.state()
            try:
                b = total_loss(x, y, ood, net, G if weights.zeta1 > 0 else None, weights, aug_rng)
                if not math.isfinite(b.total):
                    raise TrainingError(f"{run_id}: loss became {b.total} at epoch {epoch}")
                b.objective.backward()
                nx.sgd_step(params, config.train.lr)
            except TrainingError:
                if out_dir is not None:
                    save_checkpoint(out_dir / f"{run_id}.last_good.ckpt", last_good)
                raise
            nx.zero_grad(params)
            for k in sums:
                sums[k] += getattr(b, k)
            steps += 1
        trace.append({k: v / steps for k, v in sums.items()})
        log.info("%s epoch %d: %s", run_id, epoch,
                 " ".join(f"{k}={v:.4f}" for k, v in trace[-1].items()))

    manifest = RunManifest(
        run_id=run_id, arm=config.arm, seed=seed,
        ood_classes=tuple(ood_classes if ood_classes is not None else config.split.ood_classes),
        config=config.to_dict(), input_hash=input_hash(config, splits), started=started,
        wall_seconds=0.0, loss_trace=trace)
    if evaluate_after:
        rows = evaluate(net, splits, config.evaluation.detectors, config.evaluation.ddu_ridge)
        manifest.metrics = [row_dict(r) for r in rows]
    if out_dir is not None:
        ckpt = out_dir / f"{run_id}.ckpt"
        save_checkpoint(ckpt, net.state())
        manifest.checkpoint = str(ckpt)
    manifest.wall_seconds = time.perf_counter() - t0
    if out_dir is not None:
        manifest.save(out_dir / f"{run_id}.manifest.json")
    return TrainResult(net, manifest)


# ---------------------------------------------------------------- evaluation

def evaluate(network: Network, splits: dict[str, ColoredSet], detectors,
             ddu_ridge: float = 1e-3, train_features=None) -> list[MetricsRow]:
    """One pass of g and h over the test split, scored by every detector.

    Detectors that need fitting use the features of ``splits['train']`` (or
    explicitly supplied ``(features, labels)``).
    """
    test = splits["test"]
    feats, logits = network.predict(test.images)
    predicted = logits.argmax(axis=1)
    rows = []
    for name in detectors:
        det = make_detector(name, ridge=ddu_ridge) if name == "ddu" else make_detector(name)
        if det.requires_fit:
            if train_features is None:
                if "train" not in splits or len(splits["train"]) == 0:
                    raise ContractError(f"detector {name!r} needs training features to fit")
                train_features = (network.predict(splits["train"].images)[0],
                                  splits["train"].labels)
            det.fit(*train_features)
        scores = det.score(feats, logits)
        scored = ScoredTestSet(scores, test.is_ood, test.labels, predicted)
        rows.append(metrics_row(name, scored))
    return rows


def evaluate_checkpoint(path, splits, detectors, ddu_ridge: float = 1e-3) -> list[MetricsRow]:
    return evaluate(Network.from_state(load_checkpoint(path)), splits, detectors, ddu_ridge)


def validation_auroc(network: Network, val: ColoredSet, G: GenerativeModel, law,
                     seed: int) -> float:
    """Energy AUROC of held-out ID (training domains) vs. synthetic OOD made from it."""
    if len(val) == 0:
        raise ContractError("validation split is empty; set split.n_val > 0")
    rng = nx.rng_stream(seed)
    ood = G.synth_ood_batch(val.images, val.labels, rng, law)
    _, id_logits = network.predict(val.images)
    _, ood_logits = network.predict(ood)
    det = make_detector("energy")
    return auroc(ScoredTestSet.from_scores(det.score(None, id_logits),
                                           det.score(None, ood_logits)))
