"""Exact interventional Shapley attributions for CART trees and forests.

The game value of a feature subset S is the expected model output when
features in S come from the explained instance x and the rest are drawn
from a background dataset: v(S) = mean_z f(x_S, z_{~S}). Both the exact
path-decomposition method and the brute-force subset enumeration compute
this same game, so they must agree to numerical precision.

Exact method: for a single (x, z) pair, each leaf contributes its value to
v(S) iff every path feature is satisfied by the side the coalition picks.
Classifying path features as A (only x satisfies), B (only z satisfies),
free (both), or dead (neither) gives a closed form per leaf:

    i in A:  phi_i += val * (a-1)! b! / (a+b)!
    i in B:  phi_i -= val * a! (b-1)! / (a+b)!

with a = |A|, b = |B|, and no contribution from any leaf with a dead
feature. Background rows sharing the same per-leaf satisfaction bitmask
are grouped, so cost scales with distinct patterns rather than rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .trees import ForestModel, TreeNode, predict_forest_proba, predict_tree

MAX_BRUTEFORCE_FEATURES = 15
LOCAL_ACCURACY_TOL = 1e-9

# Leaf path constraints longer than this cannot be bit-packed into uint64
# pattern codes; trees here are depth-limited far below it.
_MAX_PATH_FEATURES = 63


class ExplainError(ValueError):
    """Raised for invalid attribution inputs."""


@dataclass(frozen=True)
class Attribution:
    """Per-feature Shapley values for one prediction.

    ``base_value`` is the mean model output over the background rows and
    ``prediction`` the raw model output at x, so that
    base_value + sum(phi) == prediction (local accuracy).
    """

    base_value: float
    phi: Mapping[str, float]
    prediction: float

    def check_local_accuracy(self, tol: float = LOCAL_ACCURACY_TOL) -> bool:
        return abs(self.base_value + sum(self.phi.values()) - self.prediction) <= tol

    def top_features(self, k: int) -> list[tuple[str, float]]:
        """The k largest attributions by magnitude; ties break on name."""
        ranked = sorted(self.phi.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
        return ranked[:k]


def _factorial_weight_tables(max_order: int) -> tuple[np.ndarray, np.ndarray]:
    """W_A[a, b] = (a-1)! b! / (a+b)!  (0 when a == 0)
    W_B[a, b] = a! (b-1)! / (a+b)!  (0 when b == 0)."""
    size = max_order + 1
    wa = np.zeros((size, size), dtype=np.float64)
    wb = np.zeros((size, size), dtype=np.float64)
    for a in range(size):
        for b in range(size):
            if a + b == 0:
                continue
            denom = math.factorial(a + b)
            if a >= 1:
                wa[a, b] = math.factorial(a - 1) * math.factorial(b) / denom
            if b >= 1:
                wb[a, b] = math.factorial(a) * math.factorial(b - 1) / denom
    return wa, wb


def _leaf_paths(root: TreeNode, output_index: int) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, float]]:
    """(feature ids, lower bounds, upper bounds, leaf value) per leaf.

    A leaf is reached by x iff lo < x[f] <= hi for every constrained f.
    Repeated splits on one feature tighten a single interval.
    """
    out: list[tuple[np.ndarray, np.ndarray, np.ndarray, float]] = []

    def walk(node: TreeNode, bounds: dict[int, tuple[float, float]]) -> None:
        if node.is_leaf:
            feats = np.array(sorted(bounds), dtype=np.intp)
            lo = np.array([bounds[f][0] for f in feats], dtype=np.float64)
            hi = np.array([bounds[f][1] for f in feats], dtype=np.float64)
            out.append((feats, lo, hi, float(node.value[output_index])))
            return
        f = node.feature_index
        t = node.threshold
        assert f is not None and t is not None
        assert node.left is not None and node.right is not None
        lo, hi = bounds.get(f, (-np.inf, np.inf))
        # Skip branches whose interval would be empty (redundant splits).
        if t > lo:
            walk(node.left, {**bounds, f: (lo, min(hi, t))})
        if t < hi:
            walk(node.right, {**bounds, f: (max(lo, t), hi)})

    walk(root, {})
    return out


class TreeExplainer:
    """Attribution engine for a fixed (model, background) pair.

    Accepts a single tree or a forest; forest attributions average the
    per-tree attributions, which equals the Shapley value of the averaged
    model by linearity. Building the explainer precomputes, per leaf, the
    distinct background satisfaction patterns and their multiplicities, so
    repeated calls to :meth:`shap` only pay for the per-x sweep.
    """

    def __init__(
        self,
        model: TreeNode | ForestModel,
        background: np.ndarray,
        n_features: int,
        output_index: int = 0,
    ) -> None:
        background = np.asarray(background, dtype=np.float64)
        if background.ndim != 2 or background.shape[0] == 0:
            raise ExplainError("background must be a non-empty 2-D matrix")
        if background.shape[1] != n_features:
            raise ExplainError("background width does not match feature count")
        self.n_features = n_features
        self._model = model
        self._output_index = output_index
        self._n_bg = background.shape[0]

        trees = model.trees if isinstance(model, ForestModel) else (model,)
        tree_weight = 1.0 / len(trees)

        feat_rows: list[np.ndarray] = []
        xlo_rows: list[np.ndarray] = []
        xhi_rows: list[np.ndarray] = []
        pattern_rows: list[np.ndarray] = []
        scale_rows: list[float] = []
        base = 0.0
        max_path = 0

        for tree in trees:
            for feats, lo, hi, val in _leaf_paths(tree, output_index):
                m = feats.shape[0]
                max_path = max(max_path, m)
                if m > _MAX_PATH_FEATURES:
                    raise ExplainError("leaf path constrains too many features")
                if m == 0:
                    # Unsplit tree: constant output, pure base value.
                    base += val * tree_weight
                    continue
                zok = (background[:, feats] > lo) & (background[:, feats] <= hi)
                codes = np.zeros(self._n_bg, dtype=np.uint64)
                for j in range(m):
                    codes |= zok[:, j].astype(np.uint64) << np.uint64(j)
                uniq, counts = np.unique(codes, return_counts=True)
                full = np.uint64((1 << m) - 1)
                for code, count in zip(uniq, counts):
                    bits = np.array(
                        [(int(code) >> j) & 1 for j in range(m)], dtype=bool
                    )
                    scale = val * count / self._n_bg * tree_weight
                    if code == full:
                        base += scale
                    feat_rows.append(feats)
                    xlo_rows.append(lo)
                    xhi_rows.append(hi)
                    pattern_rows.append(bits)
                    scale_rows.append(scale)

        self.base_value = base
        self._n_rows = len(scale_rows)
        width = max(max_path, 1)
        r = max(self._n_rows, 1)
        self._feat = np.zeros((r, width), dtype=np.intp)
        self._xlo = np.full((r, width), np.inf)
        self._xhi = np.full((r, width), -np.inf)
        self._pattern = np.zeros((r, width), dtype=bool)
        self._valid = np.zeros((r, width), dtype=bool)
        for i in range(self._n_rows):
            m = feat_rows[i].shape[0]
            self._feat[i, :m] = feat_rows[i]
            self._xlo[i, :m] = xlo_rows[i]
            self._xhi[i, :m] = xhi_rows[i]
            self._pattern[i, :m] = pattern_rows[i]
            self._valid[i, :m] = True
        self._scale = np.array(scale_rows, dtype=np.float64) if scale_rows else np.zeros(1)
        self._wa, self._wb = _factorial_weight_tables(width)

    def _predict(self, x: np.ndarray) -> float:
        if isinstance(self._model, ForestModel):
            return predict_forest_proba(self._model, x)[self._output_index]
        return predict_tree(self._model, x)[self._output_index]

    def shap(self, x: Sequence[float]) -> np.ndarray:
        """Shapley values of all features at x. O(rows * max path length)."""
        xa = np.asarray(x, dtype=np.float64)
        if xa.shape != (self.n_features,):
            raise ExplainError("x does not match the feature count")
        phi = np.zeros(self.n_features, dtype=np.float64)
        if self._n_rows == 0:
            return phi

        xok = (xa[self._feat] > self._xlo) & (xa[self._feat] <= self._xhi)
        a_mask = self._valid & xok & ~self._pattern
        b_mask = self._valid & ~xok & self._pattern
        dead = np.any(self._valid & ~xok & ~self._pattern, axis=1)
        live = ~dead

        a = a_mask.sum(axis=1)
        b = b_mask.sum(axis=1)
        w_add = np.where(live, self._scale * self._wa[a, b], 0.0)
        w_sub = np.where(live, self._scale * self._wb[a, b], 0.0)

        add = np.broadcast_to(w_add[:, None], a_mask.shape)[a_mask]
        sub = np.broadcast_to(w_sub[:, None], b_mask.shape)[b_mask]
        np.add.at(phi, self._feat[a_mask], add)
        np.subtract.at(phi, self._feat[b_mask], sub)
        return phi

    def attribution(self, x: Sequence[float], feature_names: Sequence[str] | None = None) -> Attribution:
        names = _resolve_names(feature_names, self.n_features)
        phi = self.shap(x)
        return Attribution(
            base_value=self.base_value,
            phi={name: float(v) for name, v in zip(names, phi)},
            prediction=self._predict(np.asarray(x, dtype=np.float64)),
        )


def _resolve_names(names: Sequence[str] | None, d: int) -> list[str]:
    if names is None:
        return [f"f{i}" for i in range(d)]
    if len(names) != d:
        raise ExplainError("feature_names length does not match feature count")
    return list(names)


def shapley_exact(
    model: TreeNode | ForestModel,
    x: Sequence[float],
    background: np.ndarray,
    feature_names: Sequence[str] | None = None,
    output_index: int = 0,
) -> Attribution:
    """Exact interventional Shapley attribution of model output at x.

    Convenience wrapper that builds a throwaway :class:`TreeExplainer`;
    callers explaining many instances against one background should hold an
    explainer instead.
    """
    background = np.asarray(background, dtype=np.float64)
    explainer = TreeExplainer(model, background, background.shape[1], output_index)
    return explainer.attribution(x, feature_names)


def _model_output(model: TreeNode | ForestModel, rows: np.ndarray, output_index: int) -> float:
    if isinstance(model, ForestModel):
        return float(
            np.mean([predict_forest_proba(model, r)[output_index] for r in rows])
        )
    return float(np.mean([predict_tree(model, r)[output_index] for r in rows]))


def shapley_bruteforce(
    model: TreeNode | ForestModel,
    x: Sequence[float],
    background: np.ndarray,
    feature_names: Sequence[str] | None = None,
    output_index: int = 0,
) -> Attribution:
    """Textbook Shapley by full subset enumeration; oracle for the exact
    method. v(S) averages model output over hybrids taking S from x and the
    complement from each background row. Refuses more than 15 features.
    """
    xa = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ExplainError("background must be a non-empty 2-D matrix")
    d = xa.shape[0]
    if background.shape[1] != d:
        raise ExplainError("background width does not match x")
    if d > MAX_BRUTEFORCE_FEATURES:
        raise ExplainError(
            f"brute force limited to {MAX_BRUTEFORCE_FEATURES} features, got {d}"
        )
    names = _resolve_names(feature_names, d)

    value: dict[frozenset[int], float] = {}
    all_features = range(d)
    for size in range(d + 1):
        for subset in combinations(all_features, size):
            s = frozenset(subset)
            hybrids = background.copy()
            if subset:
                hybrids[:, list(subset)] = xa[list(subset)]
            value[s] = _model_output(model, hybrids, output_index)

    fact = [math.factorial(i) for i in range(d + 1)]
    phi = np.zeros(d, dtype=np.float64)
    for i in all_features:
        rest = [j for j in all_features if j != i]
        total = 0.0
        for size in range(d):
            weight = fact[size] * fact[d - size - 1] / fact[d]
            for subset in combinations(rest, size):
                s = frozenset(subset)
                total += weight * (value[s | {i}] - value[s])
        phi[i] = total

    return Attribution(
        base_value=value[frozenset()],
        phi={name: float(v) for name, v in zip(names, phi)},
        prediction=value[frozenset(all_features)],
    )


# ---------------------------------------------------------------------------
# Textual explanations
# ---------------------------------------------------------------------------


class Direction(str, Enum):
    SUPPORTS_PASS = "supports_pass"
    INCREASES_RISK = "increases_risk"


class AttributionKind(str, Enum):
    """Which model output the phi values decompose."""

    PASS_PROBABILITY = "pass_probability"
    GRADE_POINTS = "grade_points"


@dataclass(frozen=True)
class Explanation:
    attribution: Attribution
    kind: AttributionKind
    sentences: tuple[str, ...]
    directions: tuple[Direction, ...]
    feature_order: tuple[str, ...]


def _describe_feature(name: str) -> str:
    """Student-facing phrase for a schema feature name."""
    if name.startswith("clicks_month_"):
        return f"your activity in {name.removeprefix('clicks_month_').capitalize()}"
    if name == "clicks_pre_semester":
        return "your activity before the semester started"
    if name == "clicks_total_to_cutoff":
        return "your overall course activity so far"
    if name.startswith("clicks_component_"):
        area = name.removeprefix("clicks_component_").replace("_", " ")
        return f"your use of {area} materials"
    if name == "first_interaction_offset_days":
        return "how early you first engaged with the course"
    if name.startswith("points_"):
        item = name.removeprefix("points_").replace("_", " ")
        return f"your score on {item}"
    if name.startswith("gender_") or name in {"disability"}:
        return "your enrolment profile"
    if name.startswith("schedule_group_"):
        return "your timetable group"
    return name.replace("_", " ")


def _magnitude_phrase(phi: float, kind: AttributionKind) -> str:
    if kind is AttributionKind.PASS_PROBABILITY:
        return f"{abs(phi) * 100:.1f} percentage points"
    return f"{abs(phi):.1f} points"


def _sentence_case(text: str) -> str:
    # str.capitalize() would lowercase the rest (month names, item names).
    return text[0].upper() + text[1:] if text else text


def textual_explanation(
    attribution: Attribution,
    kind: AttributionKind,
    k: int = 3,
) -> Explanation:
    """Top-k |phi| features rendered as one sentence each.

    Sentences never surface raw feature names; each carries an explicit
    direction so the dashboard can color it without re-parsing text.
    """
    if k < 1:
        raise ExplainError("k must be >= 1")
    top = attribution.top_features(k)
    sentences: list[str] = []
    directions: list[Direction] = []
    order: list[str] = []
    for name, phi in top:
        helps = phi > 0
        direction = Direction.SUPPORTS_PASS if helps else Direction.INCREASES_RISK
        subject = _describe_feature(name)
        amount = _magnitude_phrase(phi, kind)
        if kind is AttributionKind.PASS_PROBABILITY:
            if phi == 0.0:
                sentence = f"{_sentence_case(subject)} is not shifting your outlook either way right now."
                direction = Direction.SUPPORTS_PASS
            elif helps:
                sentence = f"{_sentence_case(subject)} is improving your outlook by about {amount}."
            else:
                sentence = f"{_sentence_case(subject)} is lowering your outlook by about {amount}."
        else:
            if phi == 0.0:
                sentence = f"{_sentence_case(subject)} is not moving your projected grade right now."
                direction = Direction.SUPPORTS_PASS
            elif helps:
                sentence = f"{_sentence_case(subject)} is adding about {amount} to your projected total."
            else:
                sentence = f"{_sentence_case(subject)} is taking about {amount} off your projected total."
        sentences.append(sentence)
        directions.append(direction)
        order.append(name)
    return Explanation(
        attribution=attribution,
        kind=kind,
        sentences=tuple(sentences),
        directions=tuple(directions),
        feature_order=tuple(order),
    )
