"""Command-line interface.

    spectrees <subcommand> [options]

Subcommands: convert, segment, featurize, train, predict, evaluate,
sweep-size, sweep-density, fit-scaling, synth, report, serve, bench.
Every subcommand accepts --seed (default 0) and --jobs (reserved; runs are
currently single-process so results never depend on it).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import features as ft
from . import ingest, manifest, scaling, segmentation, synth
from .core import SPECIES_CODES, SPECIES_NAMES, Split, species_from_code
from .forest import BOOTSTRAP_MODES, ForestConfig, RandomForest


def _common(sub):
    sub.add_argument("--seed", type=int, default=0, help="base RNG seed")
    sub.add_argument("--jobs", type=int, default=1,
                     help="reserved for parallel execution; accepted, unused")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------


def cmd_convert(args) -> int:
    if len(args.las) != len(args.channels):
        print("error: need one --channels entry per LAS file", file=sys.stderr)
        return 2
    tables = [ingest.read_las_points(p, c) for p, c in zip(args.las, args.channels)]
    merged = tables[0]
    for t in tables[1:]:
        merged = ingest.PointTable(**{
            name: np.concatenate([getattr(merged, name), getattr(t, name)])
            for name in ("segment_id", "x", "y", "z", "channel", "reflectance",
                         "amplitude", "echo_deviation", "return_number", "num_returns")
        })
    ingest.write_points(args.out, merged)
    print(f"wrote {len(merged)} points to {args.out}")
    return 0


def cmd_segment(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = ingest.parse_points(args.points)
    part = ingest.classify_ground_and_noise(raw)
    dtm = ingest.build_dtm(raw.x[part.ground], raw.y[part.ground],
                           raw.z[part.ground], cellsize=1.0)
    keep = np.flatnonzero(~part.noise)
    table = ingest.normalize_heights(raw.select(keep), dtm)
    if args.thin:
        table = ingest.voxel_thin(table, side=0.05)
    fused = ingest.fuse_channels(table)
    params = segmentation.SegmentationParams(cellsize=args.cellsize)
    result = segmentation.segment_tile(fused, params)
    row, col = result.segments.cell_of(fused.x, fused.y)
    inside = result.segments.in_bounds(row, col)
    sid = np.zeros(len(fused), dtype=np.int64)
    sid[inside] = result.segments.values.astype(np.int64)[row[inside], col[inside]]
    fused.segment_id = sid
    ingest.write_grid(out / "dtm.grid", dtm)
    ingest.write_grid(out / "chm.grid", result.chm)
    ingest.write_grid(out / "chm_smoothed.grid", result.smoothed)
    ingest.write_grid(out / "segments.grid", result.segments)
    _write_json(out / "segments.geojson", segmentation.trace_boundaries(result.segments))
    ingest.write_points(out / "points_segmented.csv", fused)
    crowns = segmentation.assign_crown_classes(result.treetops)
    with open(out / "treetops.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("tree_id,x,y,height,crown_class\n")
        for t in result.treetops:
            f.write(f"{t.tree_id},{repr(t.x)},{repr(t.y)},{repr(t.height)},"
                    f"{crowns[t.tree_id].value}\n")
    if args.truth and args.truth_labels:
        truth = ingest.read_grid(args.truth)
        truth_rows = {r.segment_id: r for r in ingest.parse_labels(args.truth_labels)}
        match = synth.overlap_matching(result.segments, truth)
        mapped = [ingest.LabelRow(pid, truth_rows[tid].species_code)
                  for pid, tid in sorted(match.items()) if tid in truth_rows]
        ingest.write_labels(out / "labels_mapped.csv", mapped)
        print(f"matched {len(mapped)} of {len(result.treetops)} segments to truth")
    n_seg = int((result.segments.values > 0).sum() > 0) and len(result.treetops)
    print(f"ground {int(part.ground.sum())}  vegetation {int(part.vegetation.sum())}  "
          f"noise {int(part.noise.sum())}")
    print(f"detected {n_seg} treetops; outputs in {out}")
    return 0


def _load_labeled_clouds(points_path, segments_path=None):
    table = ingest.parse_points(points_path)
    fused = ingest.fuse_channels(table)
    grid = ingest.read_grid(segments_path) if segments_path else None
    return segmentation.clouds_from_table(fused, grid)


def cmd_featurize(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clouds = _load_labeled_clouds(args.points, args.segments)
    if not clouds:
        print("error: no segments found in the input", file=sys.stderr)
        return 2
    train_ids = None
    if args.labels:
        rows = ingest.parse_labels(args.labels)
        train_ids = {r.segment_id for r in rows if r.split == Split.TRAIN}
    schema_source = [c for c in clouds if not train_ids or c.segment_id in train_ids]
    if not schema_source:
        schema_source = clouds
    schema = ft.build_schema(schema_source)
    X = ft.featurize_segments(clouds, schema)
    sids = [c.segment_id for c in clouds]
    ft.write_features(out / "features.csv", sids, X)
    _write_json(out / "schema.json", ft.schema_to_dict(schema))
    print(f"featurized {len(clouds)} segments "
          f"(schema from {len(schema_source)}) into {out}")
    return 0


def _join_features_labels(features_path, labels_path):
    sids, X = ft.read_features(features_path)
    rows = {r.segment_id: r for r in ingest.parse_labels(labels_path)}
    mask = np.array([int(s) in rows for s in sids])
    joined = [rows[int(s)] for s in sids[mask]]
    return sids[mask], X[mask], joined


def cmd_train(args) -> int:
    sids, X, rows = _join_features_labels(args.features, args.labels)
    splits = [r.split for r in rows]
    if any(s == Split.TRAIN for s in splits):
        keep = [i for i, s in enumerate(splits) if s == Split.TRAIN]
    else:
        keep = list(range(len(rows)))
    y = np.array([rows[i].species_code for i in keep], dtype=np.int64)
    config = ForestConfig(n_trees=args.trees, bootstrap=args.bootstrap,
                          min_samples_leaf=args.min_leaf, seed=args.seed)
    forest = RandomForest(config).fit(X[keep], y)
    _write_json(args.out, forest.to_dict())
    oob = forest.oob_error()
    msg = f"trained on {len(keep)} segments, {len(forest.classes_)} classes"
    if oob is not None:
        msg += f", OOB error {oob:.4f}"
    print(msg + f"; model at {args.out}")
    return 0


def cmd_predict(args) -> int:
    with open(args.model, "r", encoding="utf-8") as f:
        forest = RandomForest.from_dict(json.load(f))
    sids, X = ft.read_features(args.features)
    proba = forest.predict_proba(X)
    pred = forest.classes_[np.argmax(proba, axis=1)]
    ev.write_predictions(args.out, sids, pred, proba, forest.classes_.tolist())
    print(f"predicted {len(sids)} segments to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    sids, pred, _ = ev.read_predictions(args.predictions)
    rows = {r.segment_id: r for r in ingest.parse_labels(args.labels)}
    have = [i for i, s in enumerate(sids) if int(s) in rows]
    labeled = [rows[int(sids[i])] for i in have]
    if any(r.split == Split.TEST for r in labeled):
        have = [i for i, r in zip(have, labeled) if r.split == Split.TEST]
        labeled = [rows[int(sids[i])] for i in have]
    if not have:
        print("error: no labeled segments among the predictions", file=sys.stderr)
        return 2
    ref = np.array([r.species_code for r in labeled], dtype=np.int64)
    hyp = pred[have]
    report = ev.compute_metrics(ref, hyp)
    ci = ev.bootstrap_ci(ref, hyp, seed=args.seed)
    doc = report.as_dict()
    doc["overall_accuracy_ci95"] = list(ci)
    if args.by:
        attr = {"crown_class": "crown_class", "profile_category": "profile_category"}[args.by]
        groups = [getattr(r, attr).value for r in labeled]
        doc[f"by_{args.by}"] = {g: m.as_dict()
                                for g, m in ev.group_metrics(ref, hyp, groups).items()}
    _write_json(args.out, doc)
    names = dict(zip(SPECIES_CODES, SPECIES_NAMES))
    print(ev.format_report(report, names))
    print(f"\n95% CI (overall accuracy): [{ci[0]:.4f}, {ci[1]:.4f}]")
    print(f"metrics written to {args.out}")
    return 0


def cmd_sweep_size(args) -> int:
    sids, X, rows = _join_features_labels(args.features, args.labels)
    y = np.array([r.species_code for r in rows], dtype=np.int64)
    config = ForestConfig(n_trees=args.trees, seed=args.seed)
    rows_out = scaling.sweep_training_size(X, y, args.sizes, args.k, args.seed, config)
    scaling.write_sweep_rows(args.out, rows_out)
    print(f"swept {len(args.sizes)} sizes x {args.k} folds into {args.out}")
    return 0


def cmd_sweep_density(args) -> int:
    clouds = _load_labeled_clouds(args.points, args.segments)
    rows = {r.segment_id: r for r in ingest.parse_labels(args.labels)}
    clouds = [c for c in clouds if c.segment_id in rows]
    y = np.array([rows[c.segment_id].species_code for c in clouds], dtype=np.int64)
    config = ForestConfig(n_trees=args.trees, seed=args.seed)
    rows_out = scaling.sweep_density(clouds, y, args.densities, args.k,
                                     args.seed, config)
    scaling.write_sweep_rows(args.out, rows_out)
    print(f"swept {len(args.densities)} densities x {args.k} folds into {args.out}")
    return 0


def cmd_fit_scaling(args) -> int:
    rows = scaling.read_sweep_rows(args.sweep)
    xs, oe, me = scaling.aggregate_sweep(rows)
    fit = scaling.fit_power_law(xs, oe)
    doc = {"amplitude": fit.amplitude, "exponent": fit.exponent,
           "r_squared": fit.r_squared, "n_points": fit.n_points}
    print(f"error ~ {fit.amplitude:.4g} * x^-{fit.exponent:.4f}   "
          f"(R^2 {fit.r_squared:.4f}, {fit.n_points} points)")
    if args.target_error is not None:
        m = scaling.extrapolate_m(fit, args.target_error)
        doc["target_error"] = args.target_error
        doc["extrapolated_m"] = m
        print(f"projected training size for error {args.target_error}: {m:.0f}")
    _write_json(args.out, doc)
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.segments_per_class:
        clouds, codes = synth.generate_labeled_segments(
            args.segments_per_class, args.seed, density=args.density)
        offset = 0.0
        tables = []
        for c in clouds:
            t = ingest.PointTable(
                segment_id=np.full(len(c), c.segment_id, dtype=np.int64),
                x=c.x + offset, y=c.y, z=c.z, channel=c.channel,
                reflectance=_own_refl(c),
                amplitude=np.full(len(c), np.nan),
                echo_deviation=np.full(len(c), np.nan),
                return_number=c.return_number, num_returns=c.num_returns)
            tables.append(t)
            offset += 50.0
        merged = ingest.PointTable(**{
            name: np.concatenate([getattr(t, name) for t in tables])
            for name in ("segment_id", "x", "y", "z", "channel", "reflectance",
                         "amplitude", "echo_deviation", "return_number", "num_returns")
        })
        ingest.write_points(out / "points_segmented.csv", merged)
        labels = []
        per_class_count: dict[int, int] = {}
        for c, code in zip(clouds, codes.tolist()):
            i = per_class_count.get(code, 0)
            per_class_count[code] = i + 1
            split = Split.TRAIN if i % 10 < 7 else Split.TEST
            labels.append(ingest.LabelRow(c.segment_id, code, split=split))
        ingest.write_labels(out / "labels.csv", labels)
        print(f"generated {len(clouds)} isolated segments into {out}")
        return 0
    cfg = synth.SynthConfig(n_trees=args.trees, extent=tuple(args.extent),
                            min_spacing=args.spacing, density=args.density,
                            seed=args.seed)
    forest = synth.generate_forest(cfg)
    ingest.write_points(out / "points.csv", forest.table)
    ingest.write_labels(out / "labels.csv", forest.labels)
    ingest.write_grid(out / "truth_segments.grid", forest.truth_segments)
    with open(out / "truth_trees.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("tree_id,species_code,x,y,height,crown_radius\n")
        for t in forest.trees:
            f.write(f"{t.tree_id},{t.code},{repr(t.x)},{repr(t.y)},"
                    f"{repr(t.height)},{repr(t.crown_radius)}\n")
    print(f"generated a {cfg.n_trees}-tree stand "
          f"({len(forest.table)} points) into {out}")
    return 0


def _own_refl(cloud) -> np.ndarray:
    """Reconstruct the per-point own-channel reflectance column."""
    by = {1: cloud.refl_c1, 2: cloud.refl_c2, 3: cloud.refl_c3}
    out = np.full(len(cloud), np.nan)
    for c in (1, 2, 3):
        m = cloud.channel == c
        out[m] = by[c][m]
    return out


def cmd_report(args) -> int:
    from . import plots

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.metrics, "r", encoding="utf-8") as f:
        doc = json.load(f)
    report = ev.report_from_dict(doc)
    names = dict(zip(SPECIES_CODES, SPECIES_NAMES))
    text = ev.format_report(report, names)
    if "overall_accuracy_ci95" in doc:
        lo, hi = doc["overall_accuracy_ci95"]
        text += f"\n95% CI (overall accuracy): [{lo:.4f}, {hi:.4f}]"
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    plots.plot_confusion(report, out / "confusion.svg", names)
    made = ["report.txt", "confusion.svg"]
    if args.sweep:
        rows = scaling.read_sweep_rows(args.sweep)
        xs, oe, _ = scaling.aggregate_sweep(rows)
        fit = None
        try:
            fit = scaling.fit_power_law(xs, oe)
        except (scaling.NonPositiveInput, ValueError):
            pass
        plots.plot_error_curve(rows, fit, out / "error_curve.svg")
        made.append("error_curve.svg")
    print(f"wrote {', '.join(made)} to {out}")
    return 0


def cmd_serve(args) -> int:
    from .labelservice import LabelStore, ServeProject, make_server

    with open(args.geojson, "r", encoding="utf-8") as f:
        geojson = json.load(f)
    chm = ingest.read_grid(args.chm) if args.chm else None
    predictions = None
    if args.predictions:
        sids, codes, proba = ev.read_predictions(args.predictions)
        predictions = {int(s): (int(c), proba[i])
                       for i, (s, c) in enumerate(zip(sids, codes))}
    static_dir = Path(args.ui).resolve() if args.ui else None
    store = LabelStore(args.journal)
    project = ServeProject(geojson=geojson, chm=chm, predictions=predictions,
                           store=store, static_dir=static_dir)
    server = make_server(project, args.host, args.port, verbose=True)
    print(f"label service on http://{args.host}:{server.server_address[1]}/ "
          f"(journal: {args.journal})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("\nshutting down")
    finally:
        server.server_close()
    return 0


def cmd_bench(args) -> int:
    m = manifest.read_manifest(args.manifest)
    out = Path(args.out)
    timer = manifest.StageTimer()
    if not args.skip_warmup:
        manifest.warm_up()
    doc = manifest.run_manifest(m, out, timer=timer)
    print(f"manifest {manifest.manifest_hash(m)} ({m.name})")
    print(f"overall accuracy {doc['overall_accuracy']:.4f}, "
          f"macro-average {doc['macro_average_accuracy']:.4f}")
    for name, seconds in timer.stages:
        print(f"  {name:<16} {seconds:8.3f}s")
    print(f"artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectrees",
                                description="multispectral ALS tree species toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("convert", help="LAS to canonical points.csv")
    s.add_argument("--las", nargs="+", required=True)
    s.add_argument("--channels", nargs="+", type=int, required=True)
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("segment", help="ground/noise, normalize, fuse, segment")
    s.add_argument("--points", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cellsize", type=float, default=0.5)
    s.add_argument("--thin", action="store_true", help="5 cm voxel thinning")
    s.add_argument("--truth", help="truth segment raster for id matching")
    s.add_argument("--truth-labels", help="labels keyed by truth ids")
    _common(s)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("featurize", help="per-segment feature vectors")
    s.add_argument("--points", required=True, help="points with segment ids")
    s.add_argument("--segments", help="segment raster (for footprint areas)")
    s.add_argument("--labels", help="labels.csv; Train rows define the schema")
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("train", help="fit the random forest")
    s.add_argument("--features", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True, help="model JSON path")
    s.add_argument("--trees", type=int, default=150)
    s.add_argument("--bootstrap", choices=BOOTSTRAP_MODES,
                   default="balanced_bootstrap")
    s.add_argument("--min-leaf", type=int, default=1)
    _common(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="apply a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="score predictions against labels")
    s.add_argument("--predictions", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True, help="metrics JSON path")
    s.add_argument("--by", choices=["crown_class", "profile_category"])
    _common(s)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep-size", help="error vs training-set size")
    s.add_argument("--features", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--sizes", nargs="+", type=int, required=True,
                   help="training samples per class")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--trees", type=int, default=150)
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_sweep_size)

    s = sub.add_parser("sweep-density", help="error vs point density")
    s.add_argument("--points", required=True)
    s.add_argument("--segments")
    s.add_argument("--labels", required=True)
    s.add_argument("--densities", nargs="+", type=float, required=True)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--trees", type=int, default=150)
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_sweep_density)

    s = sub.add_parser("fit-scaling", help="power-law fit of an error sweep")
    s.add_argument("--sweep", required=True)
    s.add_argument("--target-error", type=float)
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_fit_scaling)

    s = sub.add_parser("synth", help="synthetic stand or segment library")
    s.add_argument("--out", required=True)
    s.add_argument("--trees", type=int, default=60)
    s.add_argument("--extent", nargs=2, type=float, default=[80.0, 80.0])
    s.add_argument("--spacing", type=float, default=6.0)
    s.add_argument("--density", type=float, default=12.0)
    s.add_argument("--segments-per-class", type=int,
                   help="emit isolated labeled segments instead of a stand")
    _common(s)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", help="figures and text report from metrics")
    s.add_argument("--metrics", required=True)
    s.add_argument("--sweep")
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("serve", help="label service HTTP API")
    s.add_argument("--geojson", required=True)
    s.add_argument("--chm")
    s.add_argument("--predictions")
    s.add_argument("--journal", default="labels.jsonl")
    s.add_argument("--ui", help="static UI directory (e.g. frontend/dist)")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    _common(s)
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("bench", help="run a manifest and record timings")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--skip-warmup", action="store_true")
    _common(s)
    s.set_defaults(func=cmd_bench)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ingest.MalformedRow, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
