#!/usr/bin/env python3
"""Training-size scaling experiment on hard synthetic data: sweep the
training-set size under k-fold cross-validation, fit the error power law,
and extrapolate the size needed for a target error.

Example:
    python3 scripts/run_scaling_experiment.py --per-class 400 --sizes 250 500 1000 2000 \
        --target-error 0.10 --out scaling_run
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from spectrees import features as ft  # noqa: E402
from spectrees import ingest, plots, scaling, synth  # noqa: E402
from spectrees.forest import ForestConfig  # noqa: E402


def hard_archetypes():
    """One crown shape, overlapping heights, noisy reflectance: keeps the
    task hard enough that error stays well above zero at every size."""
    return [replace(a, shape="ellipsoid", height_range=(10.0, 24.0),
                    crown_ratio=0.15, refl_std=(5.0, 5.0, 5.0),
                    density_multiplier=1.0)
            for a in synth.default_archetypes()]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-class", type=int, default=400)
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[250, 500, 1000, 2000])
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--trees", type=int, default=30)
    ap.add_argument("--seeds", type=int, default=3, help="number of CV seeds")
    ap.add_argument("--density", type=float, default=0.3,
                    help="points/m^2 after thinning")
    ap.add_argument("--target-error", type=float, default=None)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="scaling_run")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    segs, codes = synth.generate_labeled_segments(
        per_class=args.per_class, seed=args.seed, archetypes=hard_archetypes())
    segs = [ingest.subsample_to_density(s, args.density, seed=11, min_points=3)
            for s in segs]
    y = np.asarray(codes, dtype=np.int64)
    X = ft.featurize_segments(segs, ft.build_schema(segs))
    print(f"featurized {len(segs)} segments -> {X.shape}")

    config = ForestConfig(n_trees=args.trees, seed=0)
    all_rows = []
    for seed in range(args.seeds):
        rows = scaling.sweep_training_size(X, y, args.sizes, k=args.folds,
                                           seed=seed, config=config)
        all_rows.extend(rows)
        xs, oe, _ = scaling.aggregate_sweep(rows)
        print(f"seed {seed}: " + "  ".join(
            f"m={int(x)}: {e:.3f}" for x, e in zip(xs, oe)))

    scaling.write_sweep_rows(out / "sweep_size.csv", all_rows,
                             stamp=f"scaling experiment seed={args.seed}")
    xs, oe, me = scaling.aggregate_sweep(all_rows)
    fit = scaling.fit_power_law(xs, oe)
    doc = {"amplitude": fit.amplitude, "exponent": fit.exponent,
           "r_squared": fit.r_squared, "n_points": fit.n_points}
    print(f"power law: err = {fit.amplitude:.3g} * m^-{fit.exponent:.4f} "
          f"(R^2 = {fit.r_squared:.3f})")
    if args.target_error is not None:
        m_star = scaling.extrapolate_m(fit, args.target_error)
        doc["target_error"] = args.target_error
        doc["extrapolated_m"] = m_star
        print(f"projected size for error {args.target_error:.2%}: "
              f"{m_star:,.0f} training segments")
    with open(out / "scaling.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
    plots.plot_error_curve(all_rows, fit, out / "error_curve.svg")
    print(f"artifacts in {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
