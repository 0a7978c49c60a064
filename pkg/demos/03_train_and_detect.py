"""ERM against feature-invariant training on a held-out hue, scored by three detectors.

A reduced version of the desk benchmark; takes about a minute.
Run: python demos/03_train_and_detect.py
"""

from osdg.runner import ExperimentConfig, build_splits, report, train

cfg = ExperimentConfig().with_updates(
    split={"n_train": 2000, "n_test": 1000, "n_val": 0},
    train={"epochs": 8},
)
print("train hues", cfg.split.train_palettes, " test hue", cfg.split.test_palette)

manifests = []
for seed in (0, 1):
    run_cfg = cfg.with_updates(train={"seed": seed})
    splits = build_splits(run_cfg)
    for arm in ("erm", "fsi"):
        res = train(run_cfg.with_updates(arm=arm), splits, run_id=f"{arm}-{seed}")
        manifests.append(res.manifest)
        rows = {r.detector: round(r.auroc, 3) for r in res.manifest.rows()}
        print(f"seed {seed} {arm}: id acc {res.manifest.rows()[0].id_accuracy:.3f}  auroc {rows}")

# mean ± std over seeds, best entry per column starred
csv_text, table = report(manifests)
print(table)
