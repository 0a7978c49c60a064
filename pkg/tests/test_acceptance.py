"""Acceptance suite: one PASS/FAIL line per criterion, at the pinned tolerances.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary. Criteria 5, 6 and 9 train the desk benchmark twice
(3 seeds x 2 arms each) and take several minutes.
"""

import math
import time

import numpy as np
import pytest

from osdg import detectors as det
from osdg import numerics as nx
from osdg.datasets import SplitSpec, make_split
from osdg.generator import IdentityGenerator, LearnedGenerator, OracleGenerator
from osdg.metrics import ScoredTestSet, aupr, auroc, metrics_csv
from osdg.network import Network
from osdg.objective import LossWeights, energy, r_energy, r_feature, total_loss
from osdg.runner.config import ExperimentConfig
from osdg.runner.experiment import build_splits, evaluate, train
from osdg.runner.search import random_search

from oracles import aupr_steps, auroc_pairs

DIM = 3 * 28 * 28
RESULTS: list[str] = []


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} ({detail})"
    print(line)
    RESULTS.append(line)
    assert ok, line


def test_c1_gradient_fidelity(raw_digits):
    start = time.perf_counter()
    spec = SplitSpec(id_classes=(0, 1, 2, 3), ood_classes=(7, 8, 9), n_train=64, n_test=8, seed=1)
    tr = make_split(raw_digits, spec)["train"]
    x, y = tr.images[:8], tr.labels[:8]
    G = OracleGenerator()
    ood = G.synth_ood_batch(x, y, nx.rng_stream(1))
    net = Network(DIM, (32,), 16, 4, seed=0)
    # zero biases leave dead units exactly on the ReLU kink, where finite differences read 1/2
    r = np.random.default_rng(0)
    for p in net.parameters():
        if p.name.endswith(".b"):
            p.data[:] = r.uniform(0.05, 0.2, p.shape)
    w = LossWeights(0.5, 0.5, gamma=-1.0)

    def loss():
        return total_loss(x, y, ood, net, G, w, nx.rng_stream(2)).objective

    assert len(ood) == 8 and len(net.g_layers) == 2
    err = nx.grad_check(loss, net.parameters(), max_coords=40, rng=nx.rng_stream(0))
    took = time.perf_counter() - start
    record(1, "gradient fidelity", err <= 1e-4 and took < 10,
           f"max rel err {err:.2e} <= 1e-4, {took:.1f}s < 10s")


def test_c2_metric_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 201))
        n_ood = int(rng.integers(1, n))
        # a coarse grid half the time so ties are common
        s = rng.integers(0, 12, n) / 4 if rng.random() < 0.5 else rng.normal(size=n)
        id_s, ood_s = s[n_ood:], s[:n_ood]
        scored = ScoredTestSet.from_scores(id_s, ood_s)
        worst = max(worst, abs(auroc(scored) - auroc_pairs(id_s, ood_s)),
                    abs(aupr(scored) - aupr_steps(id_s, ood_s)))
    took = time.perf_counter() - start
    record(2, "metric oracle equivalence", worst <= 1e-12 and took < 10,
           f"max abs diff {worst:.1e} <= 1e-12 over 100 sets, {took:.1f}s < 10s")


def test_c3_closed_forms():
    w = LossWeights(gamma=-5.0)
    gaps = [
        abs(energy([0.0, 0.0], 1.0).item() + math.log(2)),
        # single-logit rows have energy -z: ID energy -3, OOD energy -8
        abs(r_energy([[3.0]], None, w).item() - 4.0),
        abs(r_energy([[9.0]], [[8.0]], w).item() - 9.0),
        abs(det.energy_score([[0.0, 0.0]])[0] + math.log(2)),
    ]
    mode = det.GaussianClassDensity(np.zeros((1, 2)), np.eye(2), np.array([1.0]), np.eye(2),
                                    np.array([0]), 0.0)
    gaps.append(abs(det.gaussian_density_score(mode, [0.0, 0.0]) - math.log(2 * math.pi)))
    worst = max(gaps)
    record(3, "closed-form spot checks", worst <= 1e-9, f"max gap {worst:.1e} <= 1e-9")


def test_c4_invariances(raw_digits):
    tr = make_split(raw_digits, SplitSpec(n_train=64, n_test=8, seed=4))["train"]
    x, y = tr.images[:16], tr.labels[:16]
    G = OracleGenerator()
    checks = {}
    checks["round trip"] = np.abs(G.decode(G.encode_semantic(x), G.encode_variation(x)) - x).max()
    moved = G.domain_transfer(x, nx.rng_stream(3))
    checks["E_sem under transfer"] = np.abs(G.encode_semantic(moved) - G.encode_semantic(x)).max()
    net = Network(DIM, (32,), 16, 7, seed=1)
    checks["r_f identity G"] = r_feature(x, net, IdentityGenerator(), nx.rng_stream(0)).item()
    z = np.random.default_rng(5).normal(size=(50, 7)) * 5
    shifts = (-37.5, 0.3, 250.0)
    checks["energy shift"] = max(np.abs(energy(z + c).data - (energy(z).data - c)).max()
                                 for c in shifts)
    checks["msp shift"] = max(np.abs(det.msp_score(z + c) - det.msp_score(z)).max()
                              for c in shifts)
    limits = {"round trip": 1e-12, "E_sem under transfer": 1e-12, "r_f identity G": 0.0,
              "energy shift": 1e-10, "msp shift": 1e-12}

    learned = LearnedGenerator(semantic_dim=4, variation_dim=2, hidden=16, seed=0)
    before = [p.data.copy() for p in learned.parameters()]
    rng = nx.rng_stream(0)
    ood = learned.synth_ood_batch(x, y, rng)
    total_loss(x, y, ood, net, learned, LossWeights(1.0, 1.0), rng).objective.backward()
    nx.sgd_step(net.parameters(), 0.1)
    no_grad = all(not p.grad.any() and p.data.tobytes() == b.tobytes()
                  for p, b in zip(learned.parameters(), before))
    ok = all(checks[k] <= limits[k] for k in limits) and no_grad
    detail = ", ".join(f"{k} {v:.1e}" for k, v in checks.items())
    record(4, "invariance suite", ok, f"{detail}, G untouched {no_grad}")


def run_trend_experiment():
    """Three seeds, both arms, default config; returns manifests, metrics CSV and seconds."""
    start = time.perf_counter()
    manifests = []
    for seed in (0, 1, 2):
        cfg = ExperimentConfig().with_updates(train={"seed": seed})
        splits = build_splits(cfg)
        for arm in ("erm", "fsi"):
            res = train(cfg.with_updates(arm=arm), splits, run_id=f"{arm}-seed{seed}")
            manifests.append(res.manifest)
    csv = metrics_csv([(m.run_id, m.seed, m.ood_classes, r) for m in manifests for r in m.rows()])
    return manifests, csv, time.perf_counter() - start


@pytest.fixture(scope="module")
def trend():
    return run_trend_experiment()


def arm_mean(manifests, arm, detector, key):
    return float(np.mean([r[key] for m in manifests if m.arm == arm
                          for r in m.metrics if r["detector"] == detector]))


def test_c5_auroc_trend(trend):
    manifests, _, took = trend
    cfg = ExperimentConfig()
    assert cfg.split.n_train == 5000 and cfg.split.n_test == 2000
    assert len(cfg.split.train_palettes) == 3 and cfg.split.ood_classes == (7, 8, 9)
    ours = arm_mean(manifests, "fsi", "energy", "auroc")
    erm = {d: arm_mean(manifests, "erm", d, "auroc") for d in cfg.evaluation.detectors}
    best = max(erm, key=erm.get)
    gap = ours - erm[best]
    record(5, "AUROC trend", gap >= 0.10 and took <= 1800,
           f"FSI energy {ours:.4f} vs ERM best ({best}) {erm[best]:.4f}, "
           f"gap {gap:+.4f} >= 0.10, {took / 60:.1f} min <= 30")


def test_c6_accuracy_trend(trend):
    manifests = trend[0]
    ours = arm_mean(manifests, "fsi", "energy", "id_accuracy")
    erm = arm_mean(manifests, "erm", "energy", "id_accuracy")
    record(6, "ID-accuracy trend", ours - erm >= 0.10,
           f"FSI {ours:.4f} vs ERM {erm:.4f}, gap {ours - erm:+.4f} >= 0.10")


def test_c7_shared_head(trend):
    manifests = trend[0]
    per_run = [{r["detector"]: r["id_accuracy"] for r in m.metrics} for m in manifests]
    ok = all(set(accs) == {"energy", "msp", "ddu"} and len(set(accs.values())) == 1
             for accs in per_run)
    record(7, "shared-head consistency", ok,
           f"{len(per_run)} checkpoints, one ID accuracy each across energy/msp/ddu")


def test_c8_protocol():
    start = time.perf_counter()
    cfg = ExperimentConfig().with_updates(
        split={"n_train": 500, "n_test": 500, "n_val": 200},
        search={"trials": 3, "runs_per_trial": 2, "min_fraction": 0.5})
    res = random_search(cfg.search, cfg)
    took = time.perf_counter() - start
    counts = res.runs_per_selection()
    covered = {c for sel in counts for c in sel}
    defaults = ExperimentConfig().search
    ok = (all(n == 3 * 2 for n in counts.values()) and len(covered) >= 5 and took < 300
          and all(len(t.runs) == 2 and t.best is not None for t in res.trials)
          and (defaults.trials, defaults.runs_per_trial) == (3, 30))
    record(8, "protocol fidelity", ok,
           f"runs per selection {dict((('-'.join(map(str, k))), v) for k, v in counts.items())}, "
           f"{len(covered)}/10 classes covered, {took:.0f}s < 300s")


def test_c9_determinism(trend):
    _, first, _ = trend
    _, second, _ = run_trend_experiment()
    record(9, "determinism", first == second,
           f"metrics CSV of {first.count(chr(10)) - 1} rows bit-identical on repeat")


def test_loss_trace_moving_average_decreases(trend):
    for m in trend[0]:
        totals = np.array([e["total"] for e in m.loss_trace])
        window = np.convolve(totals, np.ones(10) / 10, mode="valid")
        assert np.all(np.diff(window) <= 0), (m.run_id, totals)
