"""From-scratch CART decision trees and a bagged random-forest classifier.

Greedy axis-aligned splitting: at each node the (feature, threshold) pair
minimizing weighted child impurity is chosen, with thresholds placed at
midpoints between consecutive distinct sorted feature values. The left
branch always takes ``feature <= threshold``.

Determinism contract: a fixed seed yields bit-identical models regardless
of worker count. Bootstrap and feature subsampling use numpy's PCG64
generator, seeded per tree as ``seed + tree_index``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np


class ModelError(ValueError):
    """Raised for invalid training inputs or malformed model files."""


class Criterion(str, Enum):
    GINI = "gini"
    MSE = "mse"


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 8
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    criterion: Criterion = Criterion.GINI
    seed: int = 0

    def __post_init__(self) -> None:
        if self.min_samples_leaf < 1:
            raise ModelError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ModelError("min_samples_split must be >= 2")
        if self.max_depth < 0:
            raise ModelError("max_depth must be >= 0")


@dataclass(frozen=True)
class TreeNode:
    """One node of a fitted tree; a leaf iff ``feature_index`` is None.

    ``value`` is the class-probability vector for classification trees and a
    one-element (mean target,) tuple for regression trees. Internal nodes
    carry the value of their sample subset too.
    """

    n_samples: int
    value: tuple[float, ...]
    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature_index is None


@dataclass(frozen=True)
class ForestModel:
    """Bagged ensemble of CART classification trees."""

    trees: tuple[TreeNode, ...]
    n_classes: int
    feature_subsample: int
    per_tree_seed: tuple[int, ...]
    in_bag_counts: tuple[tuple[int, ...], ...]
    params: TreeParams

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def gini(counts: Sequence[float]) -> float:
    """Gini impurity 1 - sum(p_i^2) from a class histogram."""
    arr = np.asarray(counts, dtype=np.float64)
    if arr.size == 0:
        raise ModelError("empty class histogram")
    if np.any(arr < 0):
        raise ModelError("class counts must be non-negative")
    total = arr.sum()
    if total <= 0:
        raise ModelError("class histogram total must be > 0")
    p = arr / total
    return float(1.0 - np.sum(p * p))


def _leaf_value(y: np.ndarray, criterion: Criterion, n_classes: int) -> tuple[float, ...]:
    if criterion is Criterion.GINI:
        counts = np.bincount(y.astype(np.intp), minlength=n_classes)
        return tuple((counts / counts.sum()).tolist())
    return (float(y.mean()),)


def _best_split_of_feature(
    values: np.ndarray,
    y: np.ndarray,
    criterion: Criterion,
    n_classes: int,
    min_samples_leaf: int,
) -> tuple[float, float] | None:
    """Best (weighted child impurity, threshold) for one feature, or None.

    Vectorized scan over all candidate boundaries using cumulative class
    counts (gini) or cumulative sums (mse). Ties on impurity resolve to the
    lowest threshold because the scan runs in ascending value order.
    """
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sy = y[order]
    # Candidate boundary after position i (left = 0..i) requires a value change.
    distinct = sv[:-1] != sv[1:]
    if not distinct.any():
        return None
    left_n = np.arange(1, n)
    right_n = n - left_n
    valid = distinct & (left_n >= min_samples_leaf) & (right_n >= min_samples_leaf)
    if not valid.any():
        return None

    if criterion is Criterion.GINI:
        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), sy.astype(np.intp)] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[:-1]
        right_counts = cum[-1] - left_counts
        gini_left = 1.0 - np.sum(left_counts**2, axis=1) / left_n**2
        gini_right = 1.0 - np.sum(right_counts**2, axis=1) / right_n**2
        weighted = (left_n * gini_left + right_n * gini_right) / n
    else:
        syf = sy.astype(np.float64)
        cum_s = np.cumsum(syf)[:-1]
        cum_sq = np.cumsum(syf * syf)[:-1]
        tot_s = syf.sum()
        tot_sq = float(np.sum(syf * syf))
        var_left = np.maximum(cum_sq / left_n - (cum_s / left_n) ** 2, 0.0)
        var_right = np.maximum(
            (tot_sq - cum_sq) / right_n - ((tot_s - cum_s) / right_n) ** 2, 0.0
        )
        weighted = (left_n * var_left + right_n * var_right) / n

    weighted = np.where(valid, weighted, np.inf)
    best = int(np.argmin(weighted))
    threshold = 0.5 * (sv[best] + sv[best + 1])
    return float(weighted[best]), float(threshold)


def _node_impurity(y: np.ndarray, criterion: Criterion, n_classes: int) -> float:
    if criterion is Criterion.GINI:
        return gini(np.bincount(y.astype(np.intp), minlength=n_classes))
    return float(np.var(y.astype(np.float64)))


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    depth: int,
    params: TreeParams,
    n_classes: int,
    feature_subsample: int | None,
    rng: np.random.Generator | None,
) -> TreeNode:
    n, d = X.shape
    value = _leaf_value(y, params.criterion, n_classes)

    def leaf() -> TreeNode:
        return TreeNode(n_samples=n, value=value)

    if depth >= params.max_depth or n < params.min_samples_split:
        return leaf()
    pure = bool(np.all(y == y[0]))
    if pure:
        return leaf()

    if feature_subsample is not None and feature_subsample < d:
        assert rng is not None
        candidates = np.sort(rng.choice(d, size=feature_subsample, replace=False))
    else:
        candidates = np.arange(d)

    best_feature = -1
    best_threshold = 0.0
    best_weighted = np.inf
    for f in candidates:
        found = _best_split_of_feature(
            X[:, f], y, params.criterion, n_classes, params.min_samples_leaf
        )
        if found is None:
            continue
        weighted, threshold = found
        # Strict < keeps the lowest feature index among equal-impurity splits.
        if weighted < best_weighted:
            best_weighted = weighted
            best_feature = int(f)
            best_threshold = threshold

    if best_feature < 0:
        return leaf()
    parent_impurity = _node_impurity(y, params.criterion, n_classes)
    if not best_weighted < parent_impurity:
        return leaf()

    mask = X[:, best_feature] <= best_threshold
    left = _grow(X[mask], y[mask], depth + 1, params, n_classes, feature_subsample, rng)
    right = _grow(X[~mask], y[~mask], depth + 1, params, n_classes, feature_subsample, rng)
    return TreeNode(
        n_samples=n,
        value=value,
        feature_index=best_feature,
        threshold=best_threshold,
        left=left,
        right=right,
    )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: TreeParams,
    n_classes: int | None = None,
    _feature_subsample: int | None = None,
    _rng: np.random.Generator | None = None,
) -> TreeNode:
    """Fit one CART tree.

    Classification (criterion=gini): y holds integer class labels and leaf
    values are probability vectors over ``n_classes``. Regression
    (criterion=mse): y holds numeric targets and leaf values are means.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ModelError("X must be a 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise ModelError("X and y length mismatch")
    if X.shape[0] == 0:
        raise ModelError("cannot fit a tree on empty input")
    if params.criterion is Criterion.GINI:
        if n_classes is None:
            n_classes = int(np.max(y)) + 1 if y.size else 2
        n_classes = max(n_classes, 2)
    else:
        n_classes = 1
    return _grow(X, y, 0, params, n_classes, _feature_subsample, _rng)


def predict_tree(root: TreeNode, x: Sequence[float]) -> tuple[float, ...]:
    """Value of the leaf reached by threshold descent (<= goes left)."""
    xa = np.asarray(x, dtype=np.float64)
    node = root
    while not node.is_leaf:
        assert node.left is not None and node.right is not None
        if xa.shape[0] <= node.feature_index:  # type: ignore[operator]
            raise ModelError("feature vector shorter than training schema")
        if xa[node.feature_index] <= node.threshold:
            node = node.left
        else:
            node = node.right
    return node.value


def predict_tree_value(root: TreeNode, x: Sequence[float], output_index: int = 0) -> float:
    return predict_tree(root, x)[output_index]


def _fit_one_forest_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: TreeParams,
    n_classes: int,
    feature_subsample: int,
    tree_seed: int,
    bootstrap: bool,
) -> tuple[TreeNode, tuple[int, ...]]:
    rng = np.random.Generator(np.random.PCG64(tree_seed))
    n = X.shape[0]
    if bootstrap:
        indices = rng.integers(0, n, size=n)
    else:
        indices = np.arange(n)
    counts = np.bincount(indices, minlength=n)
    tree = fit_tree(
        X[indices],
        y[indices],
        params,
        n_classes=n_classes,
        _feature_subsample=feature_subsample,
        _rng=rng,
    )
    return tree, tuple(int(c) for c in counts)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    params: TreeParams,
    n_classes: int = 2,
    bootstrap: bool = True,
    n_workers: int = 1,
) -> ForestModel:
    """Bagged CART classifier: ceil(sqrt(d)) candidate features per split,
    one bootstrap sample per tree, per-tree seed = params.seed + tree index.

    ``bootstrap=False`` is a test hook making a 1-tree forest coincide with
    ``fit_tree``. Results are independent of ``n_workers``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if n_trees < 1:
        raise ModelError("n_trees must be >= 1")
    if params.criterion is not Criterion.GINI:
        raise ModelError("forest classifier requires the gini criterion")
    d = X.shape[1]
    feature_subsample = int(np.ceil(np.sqrt(d))) if d else 0
    seeds = tuple(params.seed + i for i in range(n_trees))

    def build(seed: int) -> tuple[TreeNode, tuple[int, ...]]:
        return _fit_one_forest_tree(
            X, y, params, n_classes, feature_subsample, seed, bootstrap
        )

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(build, seeds))
    else:
        results = [build(s) for s in seeds]

    return ForestModel(
        trees=tuple(t for t, _ in results),
        n_classes=n_classes,
        feature_subsample=feature_subsample,
        per_tree_seed=seeds,
        in_bag_counts=tuple(c for _, c in results),
        params=params,
    )


def predict_forest_proba(forest: ForestModel, x: Sequence[float]) -> tuple[float, ...]:
    """Mean of per-tree class-probability vectors; sums to 1."""
    acc = np.zeros(forest.n_classes, dtype=np.float64)
    for tree in forest.trees:
        acc += np.asarray(predict_tree(tree, x))
    return tuple((acc / forest.n_trees).tolist())


def predict_forest_class(forest: ForestModel, x: Sequence[float]) -> int:
    """Argmax class; ties resolve to the lower class index."""
    return int(np.argmax(predict_forest_proba(forest, x)))


def baseline_majority(y: Sequence[int], n_classes: int = 2, seed: int = 0) -> ForestModel:
    """Constant classifier carrying the training class priors.

    Represented as a single-leaf, single-tree forest so that prediction,
    attribution, and persistence treat it uniformly. Argmax of the priors is
    the majority class; an exact tie resolves to the lower class index.
    """
    ya = np.asarray(y, dtype=np.intp)
    if ya.size == 0:
        raise ModelError("cannot fit a baseline on empty targets")
    counts = np.bincount(ya, minlength=n_classes)
    value = tuple((counts / counts.sum()).tolist())
    leaf = TreeNode(n_samples=int(ya.size), value=value)
    params = TreeParams(max_depth=0, criterion=Criterion.GINI, seed=seed)
    return ForestModel(
        trees=(leaf,),
        n_classes=n_classes,
        feature_subsample=0,
        per_tree_seed=(seed,),
        in_bag_counts=(tuple([1] * int(ya.size)),),
        params=params,
    )


def baseline_mean(y: Sequence[float]) -> TreeNode:
    """Constant regressor predicting the training-set mean."""
    ya = np.asarray(y, dtype=np.float64)
    if ya.size == 0:
        raise ModelError("cannot fit a baseline on empty targets")
    return TreeNode(n_samples=int(ya.size), value=(float(ya.mean()),))


def count_nodes(model: TreeNode | ForestModel) -> int:
    """Total node count of a tree, or of all trees in a forest."""
    if isinstance(model, ForestModel):
        return sum(count_nodes(t) for t in model.trees)
    if model.is_leaf:
        return 1
    assert model.left is not None and model.right is not None
    return 1 + count_nodes(model.left) + count_nodes(model.right)


# ---------------------------------------------------------------------------
# Flat-array views and persistence
# ---------------------------------------------------------------------------

MODEL_FORMAT_TREE = "gradecast-tree/1"
MODEL_FORMAT_FOREST = "gradecast-forest/1"


def tree_to_arrays(root: TreeNode) -> dict:
    """Depth-first flat node arrays; leaves use feature -1 and children -1."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    n_samples: list[int] = []
    value: list[list[float]] = []

    def walk(node: TreeNode) -> int:
        idx = len(feature)
        feature.append(-1 if node.is_leaf else int(node.feature_index))  # type: ignore[arg-type]
        threshold.append(0.0 if node.is_leaf else float(node.threshold))  # type: ignore[arg-type]
        left.append(-1)
        right.append(-1)
        n_samples.append(node.n_samples)
        value.append(list(node.value))
        if not node.is_leaf:
            assert node.left is not None and node.right is not None
            left[idx] = walk(node.left)
            right[idx] = walk(node.right)
        return idx

    walk(root)
    return {
        "feature": feature,
        "threshold": threshold,
        "left": left,
        "right": right,
        "n_samples": n_samples,
        "value": value,
    }


def tree_from_arrays(arrays: dict) -> TreeNode:
    feature = arrays["feature"]

    def build(idx: int) -> TreeNode:
        if feature[idx] < 0:
            return TreeNode(
                n_samples=int(arrays["n_samples"][idx]),
                value=tuple(float(v) for v in arrays["value"][idx]),
            )
        return TreeNode(
            n_samples=int(arrays["n_samples"][idx]),
            value=tuple(float(v) for v in arrays["value"][idx]),
            feature_index=int(feature[idx]),
            threshold=float(arrays["threshold"][idx]),
            left=build(int(arrays["left"][idx])),
            right=build(int(arrays["right"][idx])),
        )

    return build(0)


def _params_to_dict(params: TreeParams) -> dict:
    return {
        "max_depth": params.max_depth,
        "min_samples_leaf": params.min_samples_leaf,
        "min_samples_split": params.min_samples_split,
        "criterion": params.criterion.value,
        "seed": params.seed,
    }


def _params_from_dict(doc: dict) -> TreeParams:
    return TreeParams(
        max_depth=int(doc["max_depth"]),
        min_samples_leaf=int(doc["min_samples_leaf"]),
        min_samples_split=int(doc["min_samples_split"]),
        criterion=Criterion(doc["criterion"]),
        seed=int(doc["seed"]),
    )


def tree_to_dict(root: TreeNode, params: TreeParams) -> dict:
    return {
        "format": MODEL_FORMAT_TREE,
        "params": _params_to_dict(params),
        "nodes": tree_to_arrays(root),
    }


def tree_from_dict(doc: dict) -> tuple[TreeNode, TreeParams]:
    if doc.get("format") != MODEL_FORMAT_TREE:
        raise ModelError(f"unsupported tree model format: {doc.get('format')!r}")
    return tree_from_arrays(doc["nodes"]), _params_from_dict(doc["params"])


def forest_to_dict(forest: ForestModel) -> dict:
    return {
        "format": MODEL_FORMAT_FOREST,
        "params": _params_to_dict(forest.params),
        "n_classes": forest.n_classes,
        "feature_subsample": forest.feature_subsample,
        "per_tree_seed": list(forest.per_tree_seed),
        "in_bag_counts": [list(c) for c in forest.in_bag_counts],
        "trees": [tree_to_arrays(t) for t in forest.trees],
    }


def forest_from_dict(doc: dict) -> ForestModel:
    if doc.get("format") != MODEL_FORMAT_FOREST:
        raise ModelError(f"unsupported forest model format: {doc.get('format')!r}")
    return ForestModel(
        trees=tuple(tree_from_arrays(a) for a in doc["trees"]),
        n_classes=int(doc["n_classes"]),
        feature_subsample=int(doc["feature_subsample"]),
        per_tree_seed=tuple(int(s) for s in doc["per_tree_seed"]),
        in_bag_counts=tuple(tuple(int(c) for c in row) for row in doc["in_bag_counts"]),
        params=_params_from_dict(doc["params"]),
    )


def dump_model_json(doc: dict) -> str:
    """Canonical JSON: sorted keys, no whitespace. Floats round-trip exactly
    through repr, so save -> load -> save is byte-identical."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save_model(doc: dict, path: str | Path) -> None:
    Path(path).write_text(dump_model_json(doc) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
