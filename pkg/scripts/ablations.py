"""Train the ablation variants (two distortions, three levels, quality ranking).

Prints per-epoch mean loss for each and, with --sweep, the intensity-sweep
mean SRCC of each trained model.

    python scripts/ablations.py --epochs 10 --sweep
"""
import argparse
from dataclasses import replace

from qalign.experiments import ABLATIONS, SweepExperiment, epoch_means, run_sweep_experiment, train_procedural


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sweep", action="store_true", help="also run the 24-kind sweep per variant")
    a = ap.parse_args()

    base = SweepExperiment(n_train=a.train, epochs=a.epochs, seed=a.seed)
    for name, change in ABLATIONS.items():
        exp = replace(base, **change)
        if a.sweep:
            res = run_sweep_experiment(exp)
            hist, extra = res.history, f"  sweep mean SRCC {res.sweep.mean_srcc():+.3f}"
        else:
            hist, extra = train_procedural(exp)[0].history, ""
        print(f"{name:16s}", " ".join(f"{v:.4f}" for v in epoch_means(hist)) + extra)


if __name__ == "__main__":
    main()
