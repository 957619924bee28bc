"""Random forest classifier built from scratch on numpy.

Trees are CART with Gini impurity: at each node a random subset of
floor(sqrt(F)) features is considered, candidate thresholds are the midpoints
between consecutive distinct sorted values, and the split maximizing the
impurity decrease wins, ties resolved to the lowest feature index and then the
lowest threshold. Leaves store class frequency vectors; the forest prediction
averages them over trees, breaking argmax ties toward the lowest species code.

Three sampling modes (all bootstrap; the name states the imbalance strategy):
  none               plain bootstrap of n rows per tree, no mitigation
  balanced_bootstrap every tree draws round(n/C) samples per class with
                     replacement, equalizing class influence
  jitter_oversample  small classes are topped up once with synthetic rows
                     jittered from per-class feature statistics, then plain
                     bootstrap per tree
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import rng_from

BOOTSTRAP_MODES = ("none", "balanced_bootstrap", "jitter_oversample")
MODEL_VERSION = 1
_JITTER_STREAM = 1_000_003  # rng stream tag, distinct from any tree index


class ClassTooSmall(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


class NonFiniteFeature(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def jitter_oversample(X: np.ndarray, y: np.ndarray, min_per_class: int = 125,
                      seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Top up classes below min_per_class with rows drawn per-feature from
    Normal(class mean, class std). Originals are preserved; synthetic rows
    are appended in ascending class order, deterministically per seed."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    rng = rng_from(seed, _JITTER_STREAM)
    parts_X, parts_y = [X], [y]
    for c in np.unique(y):
        rows = np.flatnonzero(y == c)
        if len(rows) >= min_per_class:
            continue
        if len(rows) < 2:
            raise ClassTooSmall(
                f"class {c} has {len(rows)} samples; need at least 2 to oversample")
        mu = X[rows].mean(axis=0)
        sd = X[rows].std(axis=0)
        extra = rng.normal(loc=mu, scale=sd,
                           size=(min_per_class - len(rows), X.shape[1]))
        parts_X.append(extra)
        parts_y.append(np.full(min_per_class - len(rows), c, dtype=y.dtype))
    return np.concatenate(parts_X), np.concatenate(parts_y)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    max_features: Optional[int] = None  # None -> floor(sqrt(n_features))
    min_samples_leaf: int = 1
    max_depth: Optional[int] = None
    bootstrap: str = "balanced_bootstrap"
    oversample_target: int = 125  # jitter_oversample tops classes up to this
    seed: int = 0

    def __post_init__(self):
        if self.bootstrap not in BOOTSTRAP_MODES:
            raise ValueError(f"bootstrap must be one of {BOOTSTRAP_MODES}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass
class _Tree:
    feature: np.ndarray    # int, -1 at leaves
    threshold: np.ndarray  # float, NaN at leaves
    left: np.ndarray
    right: np.ndarray
    probs: np.ndarray      # (n_nodes, n_classes) class frequencies


def _best_split(Xn: np.ndarray, yn: np.ndarray, n_classes: int,
                features: np.ndarray, min_leaf: int):
    """(score, feature, threshold) of the best candidate split, or None.

    score = sum of squared class counts over each side divided by side size;
    within a node, maximizing it is equivalent to maximizing the Gini
    impurity decrease.
    """
    n = len(yn)
    best = None  # (score, feature, threshold)
    for f in features:
        v = Xn[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        one_hot = (yn[order, None] == np.arange(n_classes)).astype(np.float64)
        cl = np.cumsum(one_hot, axis=0)[:-1]          # counts left of each cut
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        total = cl[-1] + one_hot[-1]
        score = (cl ** 2).sum(axis=1) / nl + ((total - cl) ** 2).sum(axis=1) / nr
        thr = 0.5 * (vs[:-1] + vs[1:])
        valid = (vs[1:] != vs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf) & (thr < vs[1:])
        if not valid.any():
            continue
        score = np.where(valid, score, -np.inf)
        j = int(np.argmax(score))                     # first max: lowest threshold
        if best is None or score[j] > best[0]:
            best = (float(score[j]), int(f), float(thr[j]))
    return best


def _grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, rng, cfg: ForestConfig) -> _Tree:
    n_feat = X.shape[1]
    k = cfg.max_features or max(1, int(np.sqrt(n_feat)))
    feature, threshold, left, right, probs = [], [], [], [], []
    # stack of (sample indices, depth, parent slot, is_left); left child first
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node_id
        yn = y[idx]
        counts = np.bincount(yn, minlength=n_classes).astype(np.float64)
        n = len(idx)
        split = None
        if (counts > 0).sum() > 1 and n >= 2 * cfg.min_samples_leaf \
                and (cfg.max_depth is None or depth < cfg.max_depth):
            cand = np.sort(rng.permutation(n_feat)[:k])
            found = _best_split(X[idx], yn, n_classes, cand, cfg.min_samples_leaf)
            if found is not None and found[0] > (counts ** 2).sum() / n:
                split = found
        if split is None:
            feature.append(-1)
            threshold.append(np.nan)
            left.append(-1)
            right.append(-1)
            probs.append(counts / n)
            continue
        _, f, thr = split
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        probs.append(counts / n)
        go_left = X[idx, f] <= thr
        stack.append((idx[~go_left], depth + 1, node_id, False))
        stack.append((idx[go_left], depth + 1, node_id, True))
    return _Tree(np.array(feature, dtype=np.int64),
                 np.array(threshold, dtype=np.float64),
                 np.array(left, dtype=np.int64),
                 np.array(right, dtype=np.int64),
                 np.array(probs, dtype=np.float64))


def _tree_proba(tree: _Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        f = tree.feature[node]
        active = f >= 0
        if not active.any():
            break
        xv = X[np.arange(len(X)), np.where(active, f, 0)]
        go_left = active & (xv <= tree.threshold[node])
        nxt = np.where(go_left, tree.left[node], tree.right[node])
        node = np.where(active, nxt, node)
    return tree.probs[node]


class RandomForest:
    """Fit with integer class codes; predictions return the same codes."""

    def __init__(self, config: ForestConfig = ForestConfig()):
        self.config = config
        self.classes_: Optional[np.ndarray] = None
        self.n_features_: Optional[int] = None
        self.oob_uncovered_: Optional[int] = None  # rows in every bootstrap
        self._trees: list[_Tree] = []
        self._in_bag: Optional[np.ndarray] = None  # (n_trees, n_fit_rows) bool
        self._fit_X: Optional[np.ndarray] = None
        self._fit_y_idx: Optional[np.ndarray] = None

    # -- sampling -----------------------------------------------------------

    def _jitter_augment(self, X: np.ndarray, y_idx: np.ndarray, n_classes: int):
        codes = self.classes_[y_idx]
        X2, codes2 = jitter_oversample(X, codes, self.config.oversample_target,
                                       self.config.seed)
        lookup = {c: i for i, c in enumerate(self.classes_.tolist())}
        y2 = np.array([lookup[v] for v in codes2.tolist()], dtype=np.int64)
        return X2, y2

    def _bootstrap_indices(self, y_idx: np.ndarray, n_classes: int, rng) -> np.ndarray:
        n = len(y_idx)
        mode = self.config.bootstrap
        if mode == "balanced_bootstrap":
            present = [c for c in range(n_classes) if (y_idx == c).any()]
            per_class = int(round(n / len(present)))
            picks = []
            for c in present:
                rows = np.flatnonzero(y_idx == c)
                picks.append(rows[rng.integers(0, len(rows), size=per_class)])
            return np.concatenate(picks)
        return rng.integers(0, n, size=n)  # plain bootstrap (none, jitter_oversample)

    # -- fitting / prediction -----------------------------------------------

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if len(X) != len(y):
            raise LengthMismatch("X and y length mismatch")
        if len(y) == 0:
            raise ValueError("cannot fit on zero samples")
        if not np.isfinite(X).all():
            raise NonFiniteFeature("feature matrix contains non-finite values")
        self.n_features_ = X.shape[1]
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise DegenerateLabels("training labels contain a single class")
        lookup = {c: i for i, c in enumerate(self.classes_.tolist())}
        y_idx = np.array([lookup[v] for v in y.tolist()], dtype=np.int64)
        n_classes = len(self.classes_)
        if self.config.bootstrap == "jitter_oversample":
            X, y_idx = self._jitter_augment(X, y_idx, n_classes)
        self._fit_X, self._fit_y_idx = X, y_idx
        self._trees = []
        self._in_bag = np.zeros((self.config.n_trees, len(y_idx)), dtype=bool)
        for t in range(self.config.n_trees):
            rng = rng_from(self.config.seed, t)
            idx = self._bootstrap_indices(y_idx, n_classes, rng)
            self._in_bag[t, idx] = True
            self._trees.append(_grow_tree(X[idx], y_idx[idx], n_classes, rng, self.config))
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.classes_ is None:
            raise ValueError("fit has not run")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (self.n_features_ is not None
                           and X.shape[1] != self.n_features_):
            raise LengthMismatch(
                f"expected {self.n_features_} features, got shape {X.shape}")
        acc = np.zeros((len(X), len(self.classes_)))
        for tree in self._trees:
            acc += _tree_proba(tree, X)
        return acc / len(self._trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        if self.classes_ is None:
            raise ValueError("fit has not run")
        trees = []
        for t in self._trees:
            thr = [None if f < 0 else float(v)
                   for f, v in zip(t.feature.tolist(), t.threshold.tolist())]
            trees.append({
                "feature": t.feature.tolist(),
                "threshold": thr,
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "probs": t.probs.tolist(),
            })
        cfg = self.config
        return {
            "version": MODEL_VERSION,
            "config": {
                "n_trees": cfg.n_trees, "max_features": cfg.max_features,
                "min_samples_leaf": cfg.min_samples_leaf, "max_depth": cfg.max_depth,
                "bootstrap": cfg.bootstrap, "oversample_target": cfg.oversample_target,
                "seed": cfg.seed,
            },
            "n_features": self.n_features_,
            "classes": self.classes_.tolist(),
            "trees": trees,
        }

    @staticmethod
    def from_dict(doc: dict) -> "RandomForest":
        version = doc.get("version", MODEL_VERSION)
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported model version {version}")
        rf = RandomForest(ForestConfig(**doc["config"]))
        rf.n_features_ = doc.get("n_features")
        rf.classes_ = np.array(doc["classes"], dtype=np.int64)
        rf._trees = []
        for t in doc["trees"]:
            thr = np.array([np.nan if v is None else v for v in t["threshold"]],
                           dtype=np.float64)
            rf._trees.append(_Tree(
                np.array(t["feature"], dtype=np.int64), thr,
                np.array(t["left"], dtype=np.int64),
                np.array(t["right"], dtype=np.int64),
                np.array(t["probs"], dtype=np.float64)))
        return rf

    def oob_error(self) -> Optional[float]:
        """1 - accuracy over rows left out of at least one bootstrap; None when
        every row landed in every bootstrap (no out-of-bag evidence). The
        number of rows excluded for lack of coverage lands in oob_uncovered_."""
        if self._fit_X is None:
            return None
        n = len(self._fit_y_idx)
        votes = np.zeros((n, len(self.classes_)))
        covered = np.zeros(n, dtype=bool)
        for t, tree in enumerate(self._trees):
            out = ~self._in_bag[t]
            if not out.any():
                continue
            votes[out] += _tree_proba(tree, self._fit_X[out])
            covered |= out
        self.oob_uncovered_ = int(n - covered.sum())
        if not covered.any():
            return None
        pred = np.argmax(votes[covered], axis=1)
        return float(1.0 - (pred == self._fit_y_idx[covered]).mean())
