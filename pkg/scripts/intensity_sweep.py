"""Train the toy encoder on procedural images and sweep all 24 distortion kinds.

Writes a CSV of mean quality per (kind, level) and prints per-kind SRCC.

    python scripts/intensity_sweep.py --out sweep.csv
"""
import argparse
import csv
import json

from qalign.alignment.losses import LossConfig
from qalign.experiments import SweepExperiment, run_sweep_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", type=int, default=200)
    ap.add_argument("--test", type=int, default=50)
    ap.add_argument("--image-size", type=int, default=128)
    ap.add_argument("--patch-size", type=int, default=96)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variant", choices=["similarity", "quality"], default="similarity")
    ap.add_argument("--out", default="sweep.csv")
    a = ap.parse_args()

    exp = SweepExperiment(a.train, a.test, a.image_size, a.patch_size, a.epochs, a.lr, a.seed, LossConfig(variant=a.variant))
    res = run_sweep_experiment(exp)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "level", "mean_q"])
        w.writerows(res.sweep.rows)
    with open(a.out + ".srcc.json", "w") as fh:
        json.dump({"srcc": res.sweep.srcc, "mean": res.sweep.mean_srcc()}, fh, indent=2)
    for kind, v in res.sweep.srcc.items():
        print(f"{kind:26s} {v:+.2f}")
    print(f"mean {res.sweep.mean_srcc():+.3f}  min {min(res.sweep.srcc.values()):+.2f}")
    print(f"train {res.train_seconds:.0f}s  sweep {res.sweep_seconds:.0f}s")


if __name__ == "__main__":
    main()
