"""Classification metrics and bootstrap confidence intervals.

Reference labels are species codes 1..9; predictions may additionally carry 0
("no prediction"), which always scores as an error against the reference class
and never forms a class of its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import MISSING_PREDICTION, rng_from

BOOTSTRAP_REPLICATES = 2000
CI_PERCENTILES = (2.5, 97.5)

STATISTICS = ("overall_accuracy", "macro_average_accuracy")


class LengthMismatch(ValueError):
    pass


class EmptyMatrix(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    classes: tuple[int, ...]          # sorted codes appearing in ref or pred
    confusion: np.ndarray             # (C, C); rows reference, cols predicted
    n_total: int
    n_missing: int                    # predictions equal to 0, counted as errors
    overall_accuracy: float
    precision: np.ndarray             # aligned with classes
    recall: np.ndarray
    f1: np.ndarray
    precision_zero_division: np.ndarray  # True where precision was 0/0
    macro_average_accuracy: float     # mean recall over classes with references
    reference_counts: np.ndarray = None  # per class, missing predictions included
    ci95: Optional[dict] = None       # statistic -> (lo, hi), set when bootstrapped

    @property
    def classification_error(self) -> float:
        return 1.0 - self.overall_accuracy

    @property
    def macro_f1(self) -> float:
        present = self.reference_counts > 0
        return float(self.f1[present].mean()) if present.any() else 0.0

    def as_dict(self) -> dict:
        per_class = {}
        for i, code in enumerate(self.classes):
            per_class[str(code)] = {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f1": float(self.f1[i]),
                "precision_zero_division": bool(self.precision_zero_division[i]),
                "reference_count": int(self.reference_counts[i]),
            }
        doc = {
            "classes": list(self.classes),
            "confusion": self.confusion.astype(int).tolist(),
            "n_total": self.n_total,
            "n_missing": self.n_missing,
            "overall_accuracy": self.overall_accuracy,
            "classification_error": self.classification_error,
            "macro_average_accuracy": self.macro_average_accuracy,
            "macro_f1": self.macro_f1,
            "per_class": per_class,
        }
        if self.ci95 is not None:
            doc["ci95"] = {k: list(v) for k, v in self.ci95.items()}
        return doc


def report_from_dict(doc: dict) -> MetricsReport:
    classes = tuple(int(c) for c in doc["classes"])
    per = doc["per_class"]
    return MetricsReport(
        classes=classes,
        confusion=np.array(doc["confusion"], dtype=np.int64),
        n_total=int(doc["n_total"]),
        n_missing=int(doc["n_missing"]),
        overall_accuracy=float(doc["overall_accuracy"]),
        precision=np.array([per[str(c)]["precision"] for c in classes]),
        recall=np.array([per[str(c)]["recall"] for c in classes]),
        f1=np.array([per[str(c)]["f1"] for c in classes]),
        precision_zero_division=np.array(
            [per[str(c)]["precision_zero_division"] for c in classes]),
        macro_average_accuracy=float(doc["macro_average_accuracy"]),
        reference_counts=np.array(
            [per[str(c)]["reference_count"] for c in classes], dtype=np.int64),
        ci95={k: tuple(v) for k, v in doc["ci95"].items()} if "ci95" in doc else None,
    )


def _check_inputs(ref: np.ndarray, pred: np.ndarray):
    if len(ref) != len(pred):
        raise LengthMismatch("reference and prediction lengths differ")
    if len(ref) == 0:
        raise EmptyMatrix("no samples to score")
    if (ref == MISSING_PREDICTION).any():
        raise ValueError("reference labels may not be 0")


def compute_metrics(ref: Sequence[int], pred: Sequence[int]) -> MetricsReport:
    ref = np.asarray(ref, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    _check_inputs(ref, pred)
    classes = np.unique(np.concatenate([ref, pred]))
    classes = classes[classes != MISSING_PREDICTION]
    index = {c: i for i, c in enumerate(classes.tolist())}
    c = len(classes)
    confusion = np.zeros((c, c), dtype=np.int64)
    n_missing = 0
    for r, p in zip(ref.tolist(), pred.tolist()):
        if p == MISSING_PREDICTION:
            n_missing += 1
            continue
        confusion[index[r], index[p]] += 1
    # missing predictions count in reference totals but in no predicted column
    ref_counts = np.bincount([index[r] for r in ref.tolist()], minlength=c)
    pred_counts = confusion.sum(axis=0)
    tp = np.diag(confusion).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_counts > 0, tp / np.maximum(pred_counts, 1), 0.0)
        recall = np.where(ref_counts > 0, tp / np.maximum(ref_counts, 1), 0.0)
    zero_div = pred_counts == 0
    pr = precision + recall
    f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1), 0.0)
    present = ref_counts > 0
    macro = float(recall[present].mean()) if present.any() else 0.0
    oa = float(tp.sum() / len(ref))
    return MetricsReport(
        classes=tuple(int(v) for v in classes),
        confusion=confusion,
        n_total=int(len(ref)),
        n_missing=int(n_missing),
        overall_accuracy=oa,
        precision=precision,
        recall=recall,
        f1=f1,
        precision_zero_division=zero_div,
        macro_average_accuracy=macro,
        reference_counts=ref_counts,
    )


def _macro_per_replicate(ref_idx: np.ndarray, correct: np.ndarray,
                         samples: np.ndarray, n_classes: int) -> np.ndarray:
    """Macro-average accuracy for each bootstrap replicate, vectorized.

    Builds one flat bincount over (replicate, class, correct) triples instead
    of looping over replicates.
    """
    reps = samples.shape[0]
    key = ref_idx * 2 + correct                       # per-sample (class, hit)
    flat = key[samples] + (np.arange(reps)[:, None] * 2 * n_classes)
    counts = np.bincount(flat.ravel(), minlength=reps * 2 * n_classes)
    counts = counts.reshape(reps, n_classes, 2)
    totals = counts.sum(axis=2)
    with np.errstate(invalid="ignore"):
        rec = counts[:, :, 1] / totals
    masked = np.ma.masked_array(rec, mask=totals == 0)
    return masked.mean(axis=1).filled(0.0)


def bootstrap_ci(ref: Sequence[int], pred: Sequence[int],
                 statistic: str = "overall_accuracy",
                 n_replicates: int = BOOTSTRAP_REPLICATES,
                 seed: int = 0,
                 percentiles: tuple[float, float] = CI_PERCENTILES) -> tuple[float, float]:
    """Percentile bootstrap CI for a scoring statistic, resampling segments
    with replacement. Deterministic in (seed, n_replicates)."""
    if statistic not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}")
    ref = np.asarray(ref, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    _check_inputs(ref, pred)
    n = len(ref)
    rng = rng_from(seed, 424243)
    samples = rng.integers(0, n, size=(n_replicates, n))
    correct = (ref == pred).astype(np.int64)
    if statistic == "overall_accuracy":
        stats = correct[samples].mean(axis=1)
    else:
        classes = np.unique(ref)
        index = {c: i for i, c in enumerate(classes.tolist())}
        ref_idx = np.array([index[r] for r in ref.tolist()], dtype=np.int64)
        stats = _macro_per_replicate(ref_idx, correct, samples, len(classes))
    lo, hi = np.percentile(stats, percentiles)
    return float(lo), float(hi)


def group_metrics(ref: Sequence[int], pred: Sequence[int],
                  groups: Sequence[str]) -> dict[str, MetricsReport]:
    """Metrics restricted to each distinct group value (e.g. crown class)."""
    ref = np.asarray(ref, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    groups = np.asarray(groups)
    out = {}
    for g in sorted(set(groups.tolist())):
        m = groups == g
        out[str(g)] = compute_metrics(ref[m], pred[m])
    return out


PREDICTIONS_HEADER = "segment_id,predicted_code," + ",".join(f"p{c}" for c in range(1, 10))


def write_predictions(path, segment_ids: Sequence[int], codes: Sequence[int],
                      proba: np.ndarray, proba_classes: Sequence[int],
                      stamp: Optional[str] = None) -> None:
    """predictions CSV: one row per segment with the predicted code and the
    per-species probabilities p1..p9 (0 for classes absent from training)."""
    full = np.zeros((len(segment_ids), 9))
    for j, c in enumerate(proba_classes):
        full[:, int(c) - 1] = proba[:, j]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if stamp:
            f.write(f"# {stamp}\n")
        f.write(PREDICTIONS_HEADER + "\n")
        for i, (sid, code) in enumerate(zip(segment_ids, codes)):
            probs = ",".join(repr(float(v)) for v in full[i])
            f.write(f"{int(sid)},{int(code)},{probs}\n")


def read_predictions(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(segment_ids, predicted codes, probability matrix (n, 9))."""
    sids, codes, probs = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        header_seen = False
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != PREDICTIONS_HEADER:
                    raise ValueError(f"expected header {PREDICTIONS_HEADER!r}")
                header_seen = True
                continue
            parts = line.split(",")
            sids.append(int(parts[0]))
            codes.append(int(parts[1]))
            probs.append([float(p) for p in parts[2:]])
    return (np.array(sids, dtype=np.int64), np.array(codes, dtype=np.int64),
            np.array(probs, dtype=np.float64).reshape(len(sids), 9))


def format_report(report: MetricsReport, names: Optional[dict[int, str]] = None) -> str:
    """Plain-text table for terminal output."""
    names = names or {}
    lines = [
        f"samples: {report.n_total}   no-prediction: {report.n_missing}",
        f"overall accuracy:        {report.overall_accuracy:.4f}",
        f"macro-average accuracy:  {report.macro_average_accuracy:.4f}",
        "",
        f"{'class':<12} {'precision':>9} {'recall':>9} {'f1':>9} {'n':>6}",
    ]
    for i, code in enumerate(report.classes):
        label = names.get(code, str(code))
        flag = "*" if report.precision_zero_division[i] else ""
        lines.append(f"{label:<12} {report.precision[i]:>9.4f}{flag}"
                     f" {report.recall[i]:>9.4f} {report.f1[i]:>9.4f}"
                     f" {int(report.reference_counts[i]):>6}")
    if report.precision_zero_division.any():
        lines.append("* precision reported as 0 for a class never predicted")
    return "\n".join(lines)
