#!/usr/bin/env python3
"""Build a self-contained demo project for the annotation service: synthetic
stand -> segmentation -> features -> model -> predictions, then print the
serve command that opens it.

Example:
    python3 scripts/make_label_demo.py --out demo_project
    spectrees serve --geojson demo_project/segments.geojson \
        --chm demo_project/chm.grid --predictions demo_project/predictions.csv \
        --journal demo_project/labels.jsonl
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from spectrees import cli  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trees", type=int, default=40)
    ap.add_argument("--extent", type=float, default=80.0)
    ap.add_argument("--density", type=float, default=15.0)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out", default="demo_project")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stand = out / "stand"

    steps = [
        ["synth", "--out", str(stand), "--trees", str(args.trees),
         "--extent", str(args.extent), str(args.extent),
         "--density", str(args.density), "--seed", str(args.seed)],
        ["segment", "--points", str(stand / "points.csv"), "--out", str(out),
         "--truth", str(stand / "truth_segments.grid"),
         "--truth-labels", str(stand / "labels.csv")],
        ["featurize", "--points", str(out / "points_segmented.csv"),
         "--out", str(out)],
        ["train", "--features", str(out / "features.csv"),
         "--labels", str(out / "labels_mapped.csv"),
         "--trees", "40", "--out", str(out / "model.json")],
        ["predict", "--model", str(out / "model.json"),
         "--features", str(out / "features.csv"),
         "--out", str(out / "predictions.csv")],
    ]
    for step in steps:
        print("+ spectrees " + " ".join(step))
        rc = cli.main(step)
        if rc != 0:
            return rc

    print(f"\ndemo project ready in {out}/ -- start the service with:\n"
          f"  spectrees serve --geojson {out}/segments.geojson "
          f"--chm {out}/chm.grid --predictions {out}/predictions.csv "
          f"--journal {out}/labels.jsonl")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
