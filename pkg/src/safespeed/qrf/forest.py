"""Quantile Regression Forest built from scratch.

Every tree remembers which of the *n* training rows (in-bag or not) lands in
each of its leaves. For a query ``x`` a training row gets weight

    w_i(x) = 1/T * sum_t 1{X_i in leaf_t(x)} / |leaf_t(x)|

and the conditional CDF and quantiles follow from those weights. Quantiles
are returned as observed training targets, never interpolated.
"""

from __future__ import annotations

import io
import json
import math
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from ..core import ValidationError
from ._tree import apply_tree, expand_sorted, grow_tree

FORMAT_NAME = "safespeed-qrf"
FORMAT_VERSION = 1
# Absorbs float rounding when cumulative weights land exactly on alpha.
CUM_TOL = 1e-12


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 200
    min_samples_leaf: int = 10
    max_depth: int | None = None
    mtry: int | None = None  # None -> ceil(p / 3)
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValidationError("n_estimators must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0 or None")
        if self.mtry is not None and self.mtry < 1:
            raise ValidationError("mtry must be >= 1 or None")

    def resolved_mtry(self, n_features: int) -> int:
        if self.mtry is None:
            return max(1, math.ceil(n_features / 3))
        return min(self.mtry, n_features)


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_of_train: np.ndarray  # leaf node reached by each of the n training rows
    members: np.ndarray = field(init=False, repr=False)
    node_start: np.ndarray = field(init=False, repr=False)
    node_end: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        members = np.argsort(self.leaf_of_train, kind="stable")
        sorted_leaves = self.leaf_of_train[members]
        nodes = np.arange(self.feature.size)
        object.__setattr__(self, "members", members.astype(np.int64))
        object.__setattr__(self, "node_start", np.searchsorted(sorted_leaves, nodes, "left"))
        object.__setattr__(self, "node_end", np.searchsorted(sorted_leaves, nodes, "right"))

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        return apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def leaf_members(self, node: int) -> np.ndarray:
        return self.members[self.node_start[node] : self.node_end[node]]


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    training_targets: np.ndarray
    params: ForestParams
    master_seed: int
    n_features: int
    feature_names: tuple[str, ...] = ()
    _order: np.ndarray = field(init=False, repr=False)
    _members: np.ndarray = field(init=False, repr=False)
    _starts: np.ndarray = field(init=False, repr=False)
    _ends: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.trees) != self.params.n_estimators:
            raise ValidationError("tree count does not match n_estimators")
        if self.training_targets.size == 0:
            raise ValidationError("forest has no training targets")
        object.__setattr__(self, "_order", np.argsort(self.training_targets, kind="stable"))
        # Per-tree leaf tables padded to a rectangle for the compiled accumulator.
        width = max(t.n_nodes for t in self.trees)
        starts = np.zeros((len(self.trees), width), dtype=np.int64)
        ends = np.zeros((len(self.trees), width), dtype=np.int64)
        for k, t in enumerate(self.trees):
            starts[k, : t.n_nodes] = t.node_start
            ends[k, : t.n_nodes] = t.node_end
        object.__setattr__(self, "_members", np.stack([t.members for t in self.trees]))
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_ends", ends)

    @property
    def n_train(self) -> int:
        return int(self.training_targets.size)

    def _check_x(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ValidationError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def leaf_ids(self, X) -> np.ndarray:
        """(n_queries, n_trees) leaf node index per tree."""
        X = self._check_x(X)
        return np.stack([t.apply(X) for t in self.trees], axis=1)

    def weight_matrix(self, X) -> np.ndarray:
        leaves = self.leaf_ids(X)
        out = np.empty((leaves.shape[0], self.n_train))
        for q in range(leaves.shape[0]):
            out[q] = _accumulate(leaves[q], self._starts, self._ends, self._members, self.n_train)
        return out

    def predict_quantiles(self, X, alphas: Sequence[float]) -> np.ndarray:
        """(n_queries, len(alphas)) conditional quantiles."""
        alphas = np.asarray([_check_alpha(a) for a in alphas])
        sorted_y = self.training_targets[self._order]
        leaves = self.leaf_ids(X)
        out = np.empty((leaves.shape[0], alphas.size))
        for q in range(leaves.shape[0]):
            w = _accumulate(leaves[q], self._starts, self._ends, self._members, self.n_train)
            out[q] = _scan_quantiles(np.cumsum(w[self._order]), sorted_y, alphas)
        return out


@njit(cache=True, nogil=True)
def _accumulate(leaves, starts, ends, members, n):
    n_trees = leaves.shape[0]
    w = np.zeros(n)
    for t in range(n_trees):
        node = leaves[t]
        s = starts[t, node]
        e = ends[t, node]
        share = 1.0 / (n_trees * (e - s))
        for k in range(s, e):
            w[members[t, k]] += share
    return w


def _scan_quantiles(cum: np.ndarray, sorted_y: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cum, alphas - CUM_TOL, side="left")
    return sorted_y[np.minimum(idx, sorted_y.size - 1)]


def _check_alpha(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def _tree_rng(master_seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), t]))


def _fit_one(X, XT, global_order, y, t, params: ForestParams, master_seed: int, mtry: int) -> Tree:
    n = X.shape[0]
    rng = _tree_rng(master_seed, t)
    if params.bootstrap:
        samples = rng.integers(0, n, size=n).astype(np.int64)
    else:
        samples = np.arange(n, dtype=np.int64)
    split_seed = int(rng.integers(0, 2**63 - 1))
    max_depth = -1 if params.max_depth is None else params.max_depth
    counts = np.bincount(samples, minlength=n)
    sorted_rows = expand_sorted(global_order, counts, samples.size)
    feature, threshold, left, right = grow_tree(
        XT, y, sorted_rows, mtry, params.min_samples_leaf, max_depth, split_seed
    )
    leaf_of_train = apply_tree(X, feature, threshold, left, right)
    return Tree(feature, threshold, left, right, leaf_of_train)


def fit(
    X,
    y,
    params: ForestParams | None = None,
    master_seed: int = 0,
    n_jobs: int = 1,
    feature_names: Sequence[str] = (),
) -> Forest:
    """Fit a forest on rows ``X`` (n, p) with targets ``y`` (n,) in mph.

    Tree ``t`` draws its bootstrap and split randomness from a generator
    seeded by ``(master_seed, t)``, so results do not depend on ``n_jobs``.
    """
    params = params or ForestParams()
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("X must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise ValidationError("y must have one target per row of X")
    if X.shape[0] < params.min_samples_leaf:
        raise ValidationError("fewer rows than min_samples_leaf")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("X and y must be finite")
    mtry = params.resolved_mtry(X.shape[1])

    XT = np.ascontiguousarray(X.T)
    global_order = np.ascontiguousarray(np.argsort(XT, axis=1, kind="stable"))

    def job(t):
        return _fit_one(X, XT, global_order, y, t, params, master_seed, mtry)

    if n_jobs is None or n_jobs < 1:
        import os

        n_jobs = os.cpu_count() or 1
    if n_jobs == 1:
        trees = [job(t) for t in range(params.n_estimators)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(job, range(params.n_estimators)))
    return Forest(
        trees=tuple(trees),
        training_targets=y.copy(),
        params=params,
        master_seed=int(master_seed),
        n_features=X.shape[1],
        feature_names=tuple(feature_names),
    )


def weights(forest: Forest, x) -> np.ndarray:
    """Weight of every training row for a single query ``x``; sums to one."""
    return forest.weight_matrix(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def cdf(forest: Forest, x, y):
    """Weighted share of training targets at or below ``y`` (scalar or array).

    Summed in target order so the estimate is non-decreasing in ``y`` even
    under floating-point rounding.
    """
    w = weights(forest, x)
    sorted_y = forest.training_targets[forest._order]
    cum = np.r_[0.0, np.cumsum(w[forest._order])]
    F = cum[np.searchsorted(sorted_y, y, side="right")]
    return float(F) if np.ndim(F) == 0 else F


def predict_quantile(forest: Forest, x, alpha: float) -> float:
    return float(forest.predict_quantiles(np.reshape(x, (1, -1)), [alpha])[0, 0])


def predict_window(forest: Forest, x) -> tuple[float, float, float]:
    q25, q50, q75 = forest.predict_quantiles(np.reshape(x, (1, -1)), [0.25, 0.5, 0.75])[0]
    return float(q25), float(q50), float(q75)


# -- persistence -----------------------------------------------------------

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save(forest: Forest, path: str | Path) -> None:
    """Write a versioned model file (zip of .npy arrays plus a JSON header).

    Trees are flattened as pre-order node lists; ``node_offsets`` delimits
    them. The archive carries fixed timestamps so identical forests produce
    identical bytes.
    """
    offsets = np.cumsum([0] + [t.n_nodes for t in forest.trees]).astype(np.int64)
    arrays = {
        "training_targets": forest.training_targets,
        "node_offsets": offsets,
        "feature": np.concatenate([t.feature for t in forest.trees]),
        "threshold": np.concatenate([t.threshold for t in forest.trees]),
        "left": np.concatenate([t.left for t in forest.trees]),
        "right": np.concatenate([t.right for t in forest.trees]),
        "leaf_of_train": np.stack([t.leaf_of_train for t in forest.trees]).astype(np.int32),
    }
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "params": asdict(forest.params),
        "master_seed": forest.master_seed,
        "n_features": forest.n_features,
        "feature_names": list(forest.feature_names),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_ZIP_DATE)
        zf.writestr(info, json.dumps(meta, sort_keys=True), compress_type=zipfile.ZIP_DEFLATED)
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE)
            zf.writestr(info, _npy_bytes(arr), compress_type=zipfile.ZIP_DEFLATED)


def load(path: str | Path) -> Forest:
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile:
        raise ValidationError(f"{path}: not a {FORMAT_NAME} file") from None
    with zf:
        try:
            meta = json.loads(zf.read("meta.json"))
        except (KeyError, ValueError):
            raise ValidationError(f"{path}: not a {FORMAT_NAME} file") from None
        if meta.get("format") != FORMAT_NAME:
            raise ValidationError(f"{path}: not a {FORMAT_NAME} file")
        if meta.get("version") != FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported model version {meta.get('version')}")
        arrays = {
            name[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
            for name in zf.namelist()
            if name.endswith(".npy")
        }
    offsets = arrays["node_offsets"]
    trees = []
    for k in range(offsets.size - 1):
        sl = slice(offsets[k], offsets[k + 1])
        trees.append(
            Tree(
                arrays["feature"][sl].copy(),
                arrays["threshold"][sl].copy(),
                arrays["left"][sl].copy(),
                arrays["right"][sl].copy(),
                arrays["leaf_of_train"][k].astype(np.int64),
            )
        )
    return Forest(
        trees=tuple(trees),
        training_targets=arrays["training_targets"],
        params=ForestParams(**meta["params"]),
        master_seed=meta["master_seed"],
        n_features=meta["n_features"],
        feature_names=tuple(meta["feature_names"]),
    )
