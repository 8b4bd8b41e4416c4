"""Robust tree fitting, adversarial sample propagation, prediction, and
model serialization.

Fitting greedily picks the split with the lowest worst-case score, then
routes the node's samples to the children the way the optimal attacker
would: intersection samples follow the (x_star, y_star) reallocation, with
random selection driven by one seeded generator. The generator is only
consumed when a strict subset must be chosen, so configurations that need
no random choices share the same stream.
"""

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .impurity import gini
from .splitter import SplitCandidate, best_robust_split
from .threat import (
    CategoricalPerturbation,
    ThreatModel,
    dump_threat,
    effective_threat,
    null_threat,
    parse_threat_spec,
    threat_digest,
)

MODEL_VERSION = 1


@dataclass(frozen=True)
class Leaf:
    count0: int
    count1: int

    @property
    def predicted_label(self) -> int:
        # ties predict 0
        return 1 if self.count1 > self.count0 else 0

    @property
    def value(self) -> float:
        return self.count1 / (self.count0 + self.count1)


@dataclass(frozen=True)
class DecisionNode:
    feature: int
    left: "Node"
    right: "Node"
    threshold: Optional[float] = None
    left_categories: Optional[frozenset] = None


Node = Union[Leaf, DecisionNode]


@dataclass(frozen=True)
class FitParams:
    max_depth: int = 4
    min_samples_split: int = 2
    rho: float = 1.0
    seed: int = 0


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def _draw(rng, pool: np.ndarray, k: int) -> np.ndarray:
    """k distinct elements of pool; consumes the generator only when the
    choice is a strict non-empty subset."""
    if k <= 0:
        return pool[:0]
    if k >= pool.size:
        return pool
    return rng.choice(pool, size=k, replace=False)


def _category_reach_masks(pert: CategoricalPerturbation, c: int) -> np.ndarray:
    if pert.reachable is None:
        return np.full(c, (1 << c) - 1, dtype=np.int64)
    extra = 0
    for cat in pert.reachable:
        if cat < c:
            extra |= 1 << cat
    return (1 << np.arange(c, dtype=np.int64)) | extra


def _membership(values, labels, pert, split: SplitCandidate, attacked,
                n_categories: Optional[int]):
    """Boolean masks (firm_left, li, ri, firm_right) for the node's rows."""
    attacked_row = np.isin(labels, sorted(attacked))
    if split.threshold is not None:
        s = split.threshold
        eps_l = np.where(attacked_row, pert.eps_left, 0.0)
        eps_r = np.where(attacked_row, pert.eps_right, 0.0)
        natural_left = values <= s
        firm_left = natural_left & (values + eps_r <= s)
        firm_right = ~natural_left & (values - eps_l > s)
    else:
        codes = values.astype(np.int64)
        left_bits = 0
        for cat in split.left_categories:
            left_bits |= 1 << cat
        comp_bits = ((1 << n_categories) - 1) & ~left_bits
        reach = _category_reach_masks(pert, n_categories)[codes]
        natural_left = ((left_bits >> codes) & 1).astype(bool)
        firm_left = natural_left & ~(attacked_row & ((reach & comp_bits) != 0))
        firm_right = ~natural_left & ~(attacked_row & ((reach & left_bits) != 0))
    li = natural_left & ~firm_left
    ri = ~natural_left & ~firm_right
    return firm_left, li, ri, firm_right


def propagate(X, y, idx, split: SplitCandidate, threat: ThreatModel,
              rho: float, rng, n_categories=None):
    """Route a node's rows to the children the chosen attacker would.

    Per label: a (1 - rho) share of each intersection side returns to its
    natural side, then the remainder is balanced to the attacker's target
    (x_star for label 1, y_star for label 0 when class 0 is attacked) by
    uniformly random moves between the intersection sides. Firmly-left rows
    and the final left intersection form the left child.
    """
    j = split.feature
    values = X[idx, j]
    labels = y[idx]
    pert = threat.perturbations[j]
    c = None if n_categories is None else n_categories.get(j)
    firm_left, li, ri, firm_right = _membership(
        values, labels, pert, split, threat.attacked_classes, c
    )
    left_parts = [idx[firm_left]]
    right_parts = [idx[firm_right]]
    for k in (0, 1):
        li_k = idx[li & (labels == k)]
        ri_k = idx[ri & (labels == k)]
        back_left = _draw(rng, li_k, _round_half_away((1.0 - rho) * li_k.size))
        back_right = _draw(rng, ri_k, _round_half_away((1.0 - rho) * ri_k.size))
        li_rem = np.setdiff1d(li_k, back_left)
        ri_rem = np.setdiff1d(ri_k, back_right)
        if k == 1:
            target = split.x_star
        elif 0 in threat.attacked_classes:
            target = split.y_star
        else:
            target = li_rem.size
        target = min(target, li_rem.size + ri_rem.size)
        if li_rem.size < target:
            moved = _draw(rng, ri_rem, target - li_rem.size)
            li_rem = np.concatenate([li_rem, moved])
            ri_rem = np.setdiff1d(ri_rem, moved)
        elif li_rem.size > target:
            moved = _draw(rng, li_rem, li_rem.size - target)
            ri_rem = np.concatenate([ri_rem, moved])
            li_rem = np.setdiff1d(li_rem, moved)
        left_parts += [back_left, li_rem]
        right_parts += [back_right, ri_rem]
    left_idx = np.sort(np.concatenate(left_parts))
    right_idx = np.sort(np.concatenate(right_parts))
    return left_idx, right_idx


@dataclass
class Tree:
    root: Node
    features: list
    params: FitParams
    threat: ThreatModel

    @property
    def n_features(self) -> int:
        return len(self.features)

    def _leaf_for(self, row) -> Leaf:
        node = self.root
        while isinstance(node, DecisionNode):
            v = row[node.feature]
            if node.threshold is not None:
                go_left = v <= node.threshold
            else:
                go_left = int(v) in node.left_categories
            node = node.left if go_left else node.right
        return node

    def _rows(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(
                "expected %d features, got %d" % (self.n_features, X.shape[1])
            )
        return X

    def predict(self, X) -> np.ndarray:
        return np.array(
            [self._leaf_for(row).predicted_label for row in self._rows(X)],
            dtype=np.int64,
        )

    def predict_value(self, X) -> np.ndarray:
        return np.array(
            [self._leaf_for(row).value for row in self._rows(X)],
            dtype=np.float64,
        )

    def depth(self) -> int:
        def walk(node):
            if isinstance(node, Leaf):
                return 0
            return 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def n_categories(self) -> dict:
        return {
            i: f["n_categories"] for i, f in enumerate(self.features)
            if f["kind"] == "categorical"
        }

    def feature_range(self, feature: int):
        lo, hi = self.features[feature]["range"]
        return float(lo), float(hi)

    def to_doc(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "params": {
                "max_depth": self.params.max_depth,
                "min_samples_split": self.params.min_samples_split,
                "rho": self.params.rho,
                "seed": self.params.seed,
                "threat_digest": threat_digest(self.threat),
            },
            "threat": dump_threat(self.threat),
            "features": self.features,
            "root": _node_to_doc(self.root),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), sort_keys=True,
                          separators=(",", ":")) + "\n"


def _node_to_doc(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"count0": int(node.count0), "count1": int(node.count1)}
    doc = {
        "feature": int(node.feature),
        "left": _node_to_doc(node.left),
        "right": _node_to_doc(node.right),
    }
    if node.threshold is not None:
        doc["threshold"] = float(node.threshold)
    else:
        doc["left_categories"] = sorted(int(c) for c in node.left_categories)
    return doc


def _node_from_doc(doc: dict) -> Node:
    if "count0" in doc:
        return Leaf(int(doc["count0"]), int(doc["count1"]))
    if "threshold" in doc:
        return DecisionNode(
            feature=int(doc["feature"]),
            left=_node_from_doc(doc["left"]),
            right=_node_from_doc(doc["right"]),
            threshold=float(doc["threshold"]),
        )
    return DecisionNode(
        feature=int(doc["feature"]),
        left=_node_from_doc(doc["left"]),
        right=_node_from_doc(doc["right"]),
        left_categories=frozenset(int(c) for c in doc["left_categories"]),
    )


def serialize(tree: Tree) -> dict:
    return tree.to_doc()


def deserialize(doc: dict) -> Tree:
    if not isinstance(doc, dict):
        raise ValueError("model document must be an object")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError("unsupported model version: %r" % doc.get("version"))
    try:
        features = doc["features"]
        categorical = [
            i for i, f in enumerate(features) if f["kind"] == "categorical"
        ]
        threat = parse_threat_spec(
            doc["threat"]["perturbations"], categorical,
            doc["threat"]["attacked_classes"],
        )
        p = doc["params"]
        params = FitParams(
            max_depth=int(p["max_depth"]),
            min_samples_split=int(p["min_samples_split"]),
            rho=float(p["rho"]),
            seed=int(p["seed"]),
        )
        stored_digest = p["threat_digest"]
        root = _node_from_doc(doc["root"])
    except (KeyError, TypeError) as exc:
        raise ValueError("malformed model document: %s" % exc) from None
    if stored_digest != threat_digest(threat):
        raise ValueError("threat digest mismatch in model document")
    return Tree(root=root, features=features, params=params, threat=threat)


def load(path) -> Tree:
    with open(path) as fh:
        return deserialize(json.load(fh))


def save(tree: Tree, path) -> None:
    with open(path, "w") as fh:
        fh.write(tree.to_json())


def _build(X, y, idx, depth, rng, threat, params, n_categories,
           max_categories) -> Node:
    labels = y[idx]
    n1 = int(labels.sum())
    n0 = int(idx.size - n1)
    if (depth >= params.max_depth or n0 == 0 or n1 == 0
            or idx.size < params.min_samples_split):
        return Leaf(n0, n1)
    best = best_robust_split(
        X[idx], labels, threat, params.rho, n_categories, max_categories
    )
    if best is None or best.score >= gini(n0, n1):
        return Leaf(n0, n1)
    left_idx, right_idx = propagate(
        X, y, idx, best, threat, params.rho, rng, n_categories
    )
    if left_idx.size == 0 or right_idx.size == 0:
        return Leaf(n0, n1)
    left = _build(X, y, left_idx, depth + 1, rng, threat, params,
                  n_categories, max_categories)
    right = _build(X, y, right_idx, depth + 1, rng, threat, params,
                   n_categories, max_categories)
    return DecisionNode(
        feature=best.feature, left=left, right=right,
        threshold=best.threshold, left_categories=best.left_categories,
    )


def fit(X, y, threat: Optional[ThreatModel] = None,
        params: Optional[FitParams] = None, feature_names=None,
        categorical=(), max_categories: int = 12) -> Tree:
    """Fit a robust classification tree.

    X holds numerical columns (any scale) and categorical columns encoded
    as integer codes; y holds binary labels. The threat model, when given,
    must have one perturbation per column, categorical where the column is.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-d array")
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one label per row of X")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary (0 or 1)")
    y = y.astype(np.int64)
    n, d = X.shape
    categorical = frozenset(categorical)
    if threat is None:
        threat = null_threat(d, categorical)
    if threat.n_features != d:
        raise ValueError(
            "threat model covers %d features, data has %d"
            % (threat.n_features, d)
        )
    threat_categorical = frozenset(
        i for i, p in enumerate(threat.perturbations)
        if isinstance(p, CategoricalPerturbation)
    )
    if categorical and categorical != threat_categorical:
        raise ValueError("categorical feature set disagrees with threat model")
    if params is None:
        params = FitParams()
    if params.max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if params.min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")
    if not 0.0 <= params.rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")

    threat = effective_threat(threat, params.rho)
    params = FitParams(
        max_depth=params.max_depth,
        min_samples_split=params.min_samples_split,
        rho=0.0 if threat.is_null() else params.rho,
        seed=params.seed,
    )

    if feature_names is None:
        feature_names = ["f%d" % j for j in range(d)]
    if len(feature_names) != d:
        raise ValueError("feature_names must match the number of columns")
    features = []
    n_categories = {}
    for j in range(d):
        if j in threat_categorical:
            c = int(X[:, j].max()) + 1
            n_categories[j] = c
            features.append({
                "name": str(feature_names[j]), "kind": "categorical",
                "n_categories": c,
            })
        else:
            features.append({
                "name": str(feature_names[j]), "kind": "numerical",
                "range": [float(X[:, j].min()), float(X[:, j].max())],
            })

    rng = np.random.default_rng(params.seed)
    idx = np.arange(n)
    root = _build(X, y, idx, 0, rng, threat, params, n_categories,
                  max_categories)
    return Tree(root=root, features=features, params=params, threat=threat)
