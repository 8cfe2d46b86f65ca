"""Multi-seed check: is the stack within a tolerance of its best base learner?

For each synthetic dataset (sine_noise, ar1_trend) and each seed, runs the
lstm/ann/stack experiment in memory and compares held-out R². Prints one line
per run and a per-dataset tally.

Usage:
    python scripts/stacking_sweep.py
    python scripts/stacking_sweep.py --seeds 0 1 2 3 4 --epochs 50 --tolerance 0.05
"""

import argparse
import time
from pathlib import Path

from stackcast.analysis.experiment import ExperimentConfig, run_experiment
from stackcast.data.synthetic import SyntheticKind, SyntheticSpec
from stackcast.forecast.base import TrainConfig
from stackcast.main import configure_logging

DATASETS = {
    "sine_noise": SyntheticSpec(kind=SyntheticKind.SINE_NOISE, length=1000, sigma=0.05, seed=7),
    "ar1_trend": SyntheticSpec(kind=SyntheticKind.AR1_TREND, length=1000, sigma=0.05, seed=7),
}


def run_one(spec, seed, epochs, hidden):
    cfg = ExperimentConfig(
        synthetic=spec,
        models=["lstm", "ann", "stack"],
        train=TrainConfig(epochs=epochs, hidden_size=hidden),
        seed=seed,
        output_dir=Path("unused"),
    )
    started = time.perf_counter()
    result = run_experiment(cfg, write=False)
    r2 = {row.model: row.metrics.r2 for row in result.table.rows}
    return r2, time.perf_counter() - started


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--hidden", type=int, default=100)
    parser.add_argument("--tolerance", type=float, default=0.05)
    args = parser.parse_args()
    configure_logging("error")

    for name, spec in DATASETS.items():
        passed = 0
        print(f"\n{name}")
        print(f"  {'seed':>4}  {'lstm':>9}  {'ann':>9}  {'stack':>9}  {'ok':>3}  {'secs':>6}")
        for seed in args.seeds:
            r2, secs = run_one(spec, seed, args.epochs, args.hidden)
            ok = r2["stack"] >= max(r2["lstm"], r2["ann"]) - args.tolerance
            passed += ok
            print(
                f"  {seed:>4}  {r2['lstm']:9.4f}  {r2['ann']:9.4f}  {r2['stack']:9.4f}"
                f"  {'yes' if ok else 'NO':>3}  {secs:6.1f}"
            )
        print(f"  stack within {args.tolerance} of best base: {passed}/{len(args.seeds)}")


if __name__ == "__main__":
    main()
