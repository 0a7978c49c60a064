"""Random hyperparameter search over OOD selections and trials.

For every OOD selection and trial, ``runs_per_trial`` configurations are
drawn, trained, and ranked by validation AUROC (held-out ID images from the
training domains vs. synthetic OOD built from them). Only the winner is
scored on the test domain.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import numerics as nx
from ..datasets import enumerate_ood_selections
from ..metrics import format_classes, metrics_csv, row_dict
from ..numerics import TrainingError
from .checkpoint import save_checkpoint
from .config import ExperimentConfig, SearchSpace
from .experiment import RunManifest, build_generator, build_splits, evaluate, train, \
    validation_auroc

log = logging.getLogger(__name__)


def _log_uniform(rng, lo, hi) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def draw_hyperparameters(space: SearchSpace, rng: np.random.Generator, arm: str) -> dict:
    hp = {"lr": _log_uniform(rng, *space.lr),
          "zeta1": _log_uniform(rng, *space.zeta1),
          "zeta2": _log_uniform(rng, *space.zeta2),
          "gamma": float(rng.uniform(*space.gamma))}
    if arm == "erm":
        hp["zeta1"] = hp["zeta2"] = 0.0
    return hp


def apply_hyperparameters(config: ExperimentConfig, hp: dict, seed: int) -> ExperimentConfig:
    return config.with_updates(
        train={"lr": hp["lr"], "seed": seed},
        loss={"zeta1": hp["zeta1"], "zeta2": hp["zeta2"], "gamma": hp["gamma"]})


@dataclass
class TrialResult:
    ood_classes: tuple[int, ...]
    trial: int
    runs: list[RunManifest] = field(default_factory=list)
    best: RunManifest | None = None
    failed: bool = False


@dataclass
class SearchResult:
    arm: str
    master_seed: int
    trials: list[TrialResult]

    def best_manifests(self) -> list[RunManifest]:
        return [t.best for t in self.trials if t.best is not None]

    def runs_per_selection(self) -> dict[tuple[int, ...], int]:
        counts: dict[tuple[int, ...], int] = {}
        for t in self.trials:
            counts[t.ood_classes] = counts.get(t.ood_classes, 0) + len(t.runs)
        return counts

    def metrics_csv(self) -> str:
        records = [(m.run_id, m.seed, m.ood_classes, r) for m in self.best_manifests()
                   for r in m.rows()]
        return metrics_csv(records)


def random_search(space: SearchSpace, base: ExperimentConfig, master_seed: int | None = None,
                  out_dir=None) -> SearchResult:
    master = base.train.seed if master_seed is None else master_seed
    schedule = enumerate_ood_selections(10, space.min_fraction, space.trials)
    selections = list(dict.fromkeys(sel for sel, _ in schedule))
    G = build_generator(base)
    law = base.blend.law()
    out = Path(out_dir) if out_dir is not None else None
    result = SearchResult(base.arm, master, [])

    for sel_index, sel in enumerate(selections):
        for trial in range(space.trials):
            trial_seed = nx.derive_seed(master, sel_index, trial)
            splits = build_splits(base, trial_seed, sel)
            tr = TrialResult(sel, trial)
            best_val = -np.inf
            best_net = None
            for run in range(space.runs_per_trial):
                hp_rng = nx.rng_stream(nx.derive_seed(master, sel_index, trial, run))
                hp = draw_hyperparameters(space, hp_rng, base.arm)
                cfg = apply_hyperparameters(base, hp, trial_seed)
                run_id = f"{base.arm}-ood{format_classes(sel)}-t{trial}-r{run:02d}"
                try:
                    res = train(cfg, splits, G, None, run_id, evaluate_after=False,
                                ood_classes=sel)
                    val = validation_auroc(res.network, splits["val"], G, law,
                                           base.evaluation.validation_seed)
                except (TrainingError, FloatingPointError) as exc:
                    log.warning("%s failed: %s", run_id, exc)
                    tr.runs.append(RunManifest(run_id, base.arm, trial_seed, sel, cfg.to_dict(),
                                               "", "", 0.0, [], extra={"hyperparameters": hp,
                                                                        "status": "failed",
                                                                        "error": str(exc)}))
                    continue
                res.manifest.extra = {"hyperparameters": hp, "val_auroc": val, "status": "ok"}
                tr.runs.append(res.manifest)
                log.info("%s val_auroc=%.4f", run_id, val)
                if val > best_val:
                    best_val, best_net = val, res.network
                    tr.best = res.manifest
            if tr.best is None:
                tr.failed = True
                log.error("trial %s/%d: every run failed", sel, trial)
            else:
                rows = evaluate(best_net, splits, base.evaluation.detectors,
                                base.evaluation.ddu_ridge)
                tr.best.metrics = [row_dict(r) for r in rows]
                tr.best.extra["selected"] = True
                if out is not None:
                    ckpt = out / f"{tr.best.run_id}.ckpt"
                    save_checkpoint(ckpt, best_net.state())
                    tr.best.checkpoint = str(ckpt)
            result.trials.append(tr)

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for tr in result.trials:
            for m in tr.runs:
                m.save(out / "manifests" / f"{m.run_id}.manifest.json")
        (out / "metrics.csv").write_text(result.metrics_csv())
        summary = {"arm": result.arm, "master_seed": master,
                   "runs_per_selection": {format_classes(k): v
                                          for k, v in result.runs_per_selection().items()},
                   "trials": [{"ood_classes": list(t.ood_classes), "trial": t.trial,
                               "failed": t.failed, "runs": len(t.runs),
                               "best": t.best.run_id if t.best else None}
                              for t in result.trials]}
        (out / "search.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return result
