"""Experiment manifests: a single JSON document that pins every knob of a
classifier experiment, hashed so outputs can be traced to the exact settings
that produced them.

Rerunning the same manifest must reproduce every CSV/JSON output byte for
byte. Wall-clock timings are therefore written to a separate timings.txt,
never into the data artifacts.
"""
from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import evaluate, scaling
from .core import SPECIES_NAMES
from .features import build_schema, featurize_segments
from .forest import ForestConfig, RandomForest
from .ingest import LabelRow, write_labels
from .synth import generate_labeled_segments

STAMP_HEX = 12


class ManifestError(ValueError):
    pass


class StageFailure(RuntimeError):
    """A pipeline stage failed; the message names the stage and the cause."""


class ManifestMismatch(UserWarning):
    """Output directory already holds artifacts from a different manifest."""


@dataclass(frozen=True)
class ExperimentManifest:
    name: str
    seed: int = 0
    per_class: int = 50
    density: float = 10.0
    k_folds: int = 5
    n_trees: int = 150
    bootstrap: str = "balanced_bootstrap"
    min_samples_leaf: int = 1
    sweep_sizes: tuple[int, ...] = ()
    sweep_densities: tuple[float, ...] = ()
    target_error: Optional[float] = None

    def forest_config(self, extra_seed: int = 0) -> ForestConfig:
        return ForestConfig(n_trees=self.n_trees, bootstrap=self.bootstrap,
                            min_samples_leaf=self.min_samples_leaf,
                            seed=self.seed + extra_seed)


_FIELD_TYPES = {
    "name": str,
    "seed": int,
    "per_class": int,
    "density": (int, float),
    "k_folds": int,
    "n_trees": int,
    "bootstrap": str,
    "min_samples_leaf": int,
    "sweep_sizes": list,
    "sweep_densities": list,
    "target_error": (int, float, type(None)),
}


def manifest_from_dict(doc: dict) -> ExperimentManifest:
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")
    unknown = set(doc) - set(_FIELD_TYPES)
    if unknown:
        raise ManifestError(f"unknown manifest field(s): {sorted(unknown)}")
    if "name" not in doc:
        raise ManifestError("manifest requires a 'name'")
    for key, val in doc.items():
        if not isinstance(val, _FIELD_TYPES[key]) or isinstance(val, bool):
            raise ManifestError(f"field {key!r} has wrong type {type(val).__name__}")
    kwargs = dict(doc)
    for key in ("sweep_sizes", "sweep_densities"):
        bad = [v for v in kwargs.get(key, ())
               if isinstance(v, bool) or not isinstance(v, (int, float))]
        if bad:
            raise ManifestError(f"field {key!r} entries must be numbers")
    if "sweep_sizes" in kwargs:
        kwargs["sweep_sizes"] = tuple(int(v) for v in kwargs["sweep_sizes"])
    if "sweep_densities" in kwargs:
        kwargs["sweep_densities"] = tuple(float(v) for v in kwargs["sweep_densities"])
    if "density" in kwargs:
        kwargs["density"] = float(kwargs["density"])
    if kwargs.get("target_error") is not None:
        kwargs["target_error"] = float(kwargs["target_error"])
    m = ExperimentManifest(**kwargs)
    if m.per_class < 1 or m.k_folds < 2 or m.n_trees < 1 or m.density <= 0:
        raise ManifestError("per_class, k_folds, n_trees, density out of range")
    return m


def manifest_to_dict(m: ExperimentManifest) -> dict:
    d = asdict(m)
    d["sweep_sizes"] = list(m.sweep_sizes)
    d["sweep_densities"] = list(m.sweep_densities)
    return d


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def manifest_hash(m: ExperimentManifest) -> str:
    digest = hashlib.sha256(canonical_json(manifest_to_dict(m)).encode("utf-8"))
    return digest.hexdigest()[:STAMP_HEX]


def read_manifest(path: Union[str, Path]) -> ExperimentManifest:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestError(f"manifest is not valid JSON: {e}") from None
    return manifest_from_dict(doc)


def write_manifest(path: Union[str, Path], m: ExperimentManifest) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(canonical_json(manifest_to_dict(m)) + "\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


class StageTimer:
    """Wall-clock per named stage; written to timings.txt, which is excluded
    from byte-level reproducibility checks by design."""

    def __init__(self):
        self.stages: list[tuple[str, float]] = []

    def time(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()
                return self_inner

            def __exit__(self_inner, *exc):
                timer.stages.append((name, time.perf_counter() - self_inner.t0))
                return False

        return _Ctx()

    def write(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for name, seconds in self.stages:
                f.write(f"{name}\t{seconds:.6f}\n")
            f.write(f"total\t{sum(s for _, s in self.stages):.6f}\n")


class _Stage:
    """Times a stage and converts any failure into a StageFailure naming it."""

    def __init__(self, timer: StageTimer, name: str):
        self._ctx = timer.time(name)
        self._name = name

    def __enter__(self):
        self._ctx.__enter__()
        return self

    def __exit__(self, exc_type, exc, tb):
        self._ctx.__exit__(exc_type, exc, tb)
        if exc is not None:
            raise StageFailure(f"stage {self._name!r} failed: {exc}") from exc
        return False


def warm_up() -> None:
    """Tiny end-to-end pass to pay one-time import/dispatch costs before
    anything is timed."""
    segs, codes = generate_labeled_segments(per_class=3, seed=987, density=6.0)
    schema = build_schema(segs)
    X = featurize_segments(segs, schema)
    RandomForest(ForestConfig(n_trees=2, seed=987)).fit(X, codes).predict(X)


def run_manifest(m: ExperimentManifest, out_dir: Union[str, Path],
                 timer: Optional[StageTimer] = None) -> dict:
    """Execute a manifest: synthesize the labeled segment set, cross-validate
    the classifier, run any configured sweeps, fit the scaling law, and write
    stamped artifacts into out_dir. Returns the metrics document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = timer or StageTimer()
    stamp = f"{manifest_hash(m)} seed={m.seed}"
    previous = out / "manifest.json"
    if previous.exists():
        try:
            old = read_manifest(previous)
        except ManifestError:
            old = None
        if old != m:
            warnings.warn(
                f"{out} holds artifacts from a different manifest; overwriting",
                ManifestMismatch, stacklevel=2)
    write_manifest(previous, m)

    with _Stage(timer, "synthesize"):
        segments, codes = generate_labeled_segments(m.per_class, m.seed,
                                                    density=m.density)
    write_labels(out / "labels.csv",
                 [LabelRow(s.segment_id, int(c)) for s, c in zip(segments, codes)],
                 stamp=stamp)

    with _Stage(timer, "cross_validate"):
        fold_of = scaling.stratified_kfold(codes, m.k_folds, m.seed)
        pred = np.zeros(len(segments), dtype=np.int64)
        proba = np.zeros((len(segments), 9))
        for fold in range(m.k_folds):
            train_idx = np.flatnonzero(fold_of != fold)
            test_idx = np.flatnonzero(fold_of == fold)
            schema = build_schema([segments[i] for i in train_idx])
            X = featurize_segments(segments, schema)
            forest = RandomForest(m.forest_config(fold)).fit(X[train_idx], codes[train_idx])
            p = forest.predict_proba(X[test_idx])
            pred[test_idx] = forest.classes_[np.argmax(p, axis=1)]
            for j, c in enumerate(forest.classes_):
                proba[test_idx, int(c) - 1] = p[:, j]

    sids = np.array([s.segment_id for s in segments])
    evaluate.write_predictions(out / "predictions.csv", sids, pred,
                               proba, list(range(1, 10)), stamp=stamp)
    report = evaluate.compute_metrics(codes, pred)
    ci_lo, ci_hi = evaluate.bootstrap_ci(codes, pred, seed=m.seed)
    doc = report.as_dict()
    doc["overall_accuracy_ci95"] = [ci_lo, ci_hi]
    doc["stamp"] = stamp

    if m.sweep_sizes:
        with _Stage(timer, "sweep_size"):
            fold0 = np.flatnonzero(fold_of != 0)
            schema = build_schema([segments[i] for i in fold0])
            X = featurize_segments(segments, schema)
            rows = scaling.sweep_training_size(X, codes, m.sweep_sizes,
                                               m.k_folds, m.seed,
                                               m.forest_config())
        scaling.write_sweep_rows(out / "sweep_size.csv", rows, stamp=stamp)
        xs, oe, _ = scaling.aggregate_sweep(rows)
        fit_doc = {"stamp": stamp}
        try:
            fit = scaling.fit_power_law(xs, oe)
        except (scaling.NonPositiveInput, ValueError) as e:
            # e.g. every sweep point scored a zero error; record why instead
            # of aborting a run whose sweep data is still on disk
            fit_doc["fit_error"] = str(e)
            fit = None
        if fit is not None:
            fit_doc.update(amplitude=fit.amplitude, exponent=fit.exponent,
                           r_squared=fit.r_squared, n_points=fit.n_points)
            if m.target_error is not None:
                fit_doc["target_error"] = m.target_error
                try:
                    fit_doc["extrapolated_m"] = scaling.extrapolate_m(
                        fit, m.target_error)
                except scaling.NonConvergentFit as e:
                    fit_doc["fit_error"] = str(e)
        _write_json(out / "scaling.json", fit_doc)

    if m.sweep_densities:
        with _Stage(timer, "sweep_density"):
            rows = scaling.sweep_density(segments, codes, m.sweep_densities,
                                         m.k_folds, m.seed, m.forest_config())
        scaling.write_sweep_rows(out / "sweep_density.csv", rows, stamp=stamp)

    _write_json(out / "metrics.json", doc)
    timer.write(out / "timings.txt")
    return doc
