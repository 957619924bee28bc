"""Training-set scaling experiments: stratified folds, nested subsampling,
size/density sweeps, and power-law extrapolation of the error curve.

The nested subsampling keeps a fixed per-(fold, class) permutation and always
takes its prefix, so the training set at a smaller fraction is a subset of the
training set at any larger fraction — error curves across fractions then
differ only through training-set size, not through resampling noise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import SegmentCloud, rng_from
from .evaluate import compute_metrics
from .features import build_schema, featurize_segments
from .forest import ForestConfig, RandomForest
from .ingest import subsample_to_density

SWEEP_HEADER = "x,fold,overall_error,macro_error"


class ClassSmallerThanK(ValueError):
    pass


class NonPositiveInput(ValueError):
    pass


class NonConvergentFit(ValueError):
    pass


# ---------------------------------------------------------------------------
# Folds and nested subsampling


def stratified_kfold(codes: Sequence[int], k: int, seed: int) -> np.ndarray:
    """Fold index (0..k-1) per sample; each class is shuffled once and dealt
    round-robin, so per-fold class counts differ by at most one."""
    codes = np.asarray(codes, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    fold = np.full(len(codes), -1, dtype=np.int64)
    for c in np.unique(codes):
        rows = np.flatnonzero(codes == c)
        if len(rows) < k:
            raise ClassSmallerThanK(
                f"class {int(c)} has {len(rows)} samples, fewer than k={k}")
        perm = rng_from(seed, int(c)).permutation(len(rows))
        fold[rows[perm]] = np.arange(len(rows)) % k
    return fold


def nested_subsample(train_idx: np.ndarray, codes: Sequence[int],
                     fraction: float, seed: int, fold: int) -> np.ndarray:
    """Per-class prefix of a fixed permutation: ceil(fraction * count) samples
    of each class, nested across fractions for the same (seed, fold)."""
    if not (0 < fraction <= 1):
        raise ValueError("fraction must be in (0, 1]")
    codes = np.asarray(codes, dtype=np.int64)
    keep: list[np.ndarray] = []
    for c in np.unique(codes[train_idx]):
        rows = train_idx[codes[train_idx] == c]
        perm = rng_from(seed, fold, int(c)).permutation(len(rows))
        take = math.ceil(fraction * len(rows))
        keep.append(rows[perm[:take]])
    return np.sort(np.concatenate(keep))


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepRow:
    x: float            # training samples per class, or point density
    fold: int
    overall_error: float
    macro_error: float


def _fold_errors(X: np.ndarray, y: np.ndarray, train_idx: np.ndarray,
                 test_idx: np.ndarray, config: ForestConfig) -> tuple[float, float]:
    forest = RandomForest(config).fit(X[train_idx], y[train_idx])
    pred = forest.predict(X[test_idx])
    rep = compute_metrics(y[test_idx], pred)
    return 1.0 - rep.overall_accuracy, 1.0 - rep.macro_average_accuracy


def sweep_training_size(X: np.ndarray, y: np.ndarray, m_values: Sequence[int],
                        k: int, seed: int,
                        config: ForestConfig = ForestConfig()) -> list[SweepRow]:
    """Cross-validated error at several training-set sizes.

    m is the target total training-set size. A fold's training portion holds
    about N*(k-1)/k samples, so m maps to the nested-subsample fraction
    m*k/((k-1)*N), capped at 1 (= plain k-fold CV). Class proportions are
    preserved by the stratified nested subsample.
    """
    y = np.asarray(y, dtype=np.int64)
    fold_of = stratified_kfold(y, k, seed)
    rows: list[SweepRow] = []
    for fold in range(k):
        train_idx = np.flatnonzero(fold_of != fold)
        test_idx = np.flatnonzero(fold_of == fold)
        for m in m_values:
            fraction = min(1.0, m * k / ((k - 1) * len(y)))
            sub = nested_subsample(train_idx, y, fraction, seed, fold)
            oe, me = _fold_errors(X, y, sub, test_idx, config)
            rows.append(SweepRow(float(m), fold, oe, me))
    return rows


def sweep_density(segments: Sequence[SegmentCloud], codes: Sequence[int],
                  densities: Sequence[float], k: int, seed: int,
                  config: ForestConfig = ForestConfig()) -> list[SweepRow]:
    """Cross-validated error at several point densities (points / m^2).

    Segments are subsampled to each density before featurization; the feature
    schema is rebuilt from the fold's training split at that density, since
    histogram ranges shift with the sampling.
    """
    codes = np.asarray(codes, dtype=np.int64)
    fold_of = stratified_kfold(codes, k, seed)
    rows: list[SweepRow] = []
    for d in densities:
        thinned = [subsample_to_density(s, d, seed, min_points=1) for s in segments]
        for fold in range(k):
            train_idx = np.flatnonzero(fold_of != fold)
            test_idx = np.flatnonzero(fold_of == fold)
            schema = build_schema([thinned[i] for i in train_idx])
            X = featurize_segments(thinned, schema)
            oe, me = _fold_errors(X, codes, train_idx, test_idx, config)
            rows.append(SweepRow(float(d), fold, oe, me))
    return rows


def aggregate_sweep(rows: Sequence[SweepRow]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(x values, mean overall error, mean macro error), x ascending."""
    xs = sorted({r.x for r in rows})
    oe = np.array([np.mean([r.overall_error for r in rows if r.x == x]) for x in xs])
    me = np.array([np.mean([r.macro_error for r in rows if r.x == x]) for x in xs])
    return np.array(xs), oe, me


def write_sweep_rows(path: Union[str, Path], rows: Sequence[SweepRow],
                     stamp: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if stamp:
            f.write(f"# {stamp}\n")
        f.write(SWEEP_HEADER + "\n")
        for r in rows:
            f.write(f"{repr(r.x)},{r.fold},{repr(r.overall_error)},{repr(r.macro_error)}\n")


def read_sweep_rows(path: Union[str, Path]) -> list[SweepRow]:
    rows: list[SweepRow] = []
    with open(path, "r", encoding="utf-8") as f:
        header_seen = False
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != SWEEP_HEADER:
                    raise ValueError(f"expected header {SWEEP_HEADER!r}")
                header_seen = True
                continue
            x, fold, oe, me = line.split(",")
            rows.append(SweepRow(float(x), int(fold), float(oe), float(me)))
    return rows


# ---------------------------------------------------------------------------
# Power-law fit and extrapolation


@dataclass(frozen=True)
class PowerLawFit:
    """error(x) ~ amplitude * x ** (-exponent), fitted by least squares in
    log-log space."""

    amplitude: float
    exponent: float
    r_squared: float
    n_points: int


def fit_power_law(x: Sequence[float], err: Sequence[float]) -> PowerLawFit:
    x = np.asarray(x, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    if len(x) != len(err):
        raise ValueError("x and err lengths differ")
    if (x <= 0).any():
        raise NonPositiveInput("x values must be > 0")
    if (err < 0).any():
        raise NonPositiveInput("error values must be >= 0")
    zero = err == 0
    if zero.any():
        warnings.warn(f"excluding {int(zero.sum())} zero-error point(s) from the "
                      "log-log fit", stacklevel=2)
        x, err = x[~zero], err[~zero]
    if len(x) < 2:
        raise ValueError("need at least 2 usable points to fit")
    lx, le = np.log(x), np.log(err)
    slope, intercept = np.polyfit(lx, le, 1)
    pred = slope * lx + intercept
    ss_res = float(((le - pred) ** 2).sum())
    ss_tot = float(((le - le.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return PowerLawFit(amplitude=float(np.exp(intercept)), exponent=float(-slope),
                       r_squared=r2, n_points=int(len(x)))


def extrapolate_m(fit: PowerLawFit, target_err: float) -> float:
    """Training size at which the fitted curve reaches target_err."""
    if target_err <= 0:
        raise NonPositiveInput("target error must be > 0")
    if fit.exponent <= 0:
        raise NonConvergentFit(
            f"fitted exponent {fit.exponent} is not positive; the error curve "
            "does not decrease with training size")
    return float((fit.amplitude / target_err) ** (1.0 / fit.exponent))
