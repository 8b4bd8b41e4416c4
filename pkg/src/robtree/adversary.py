"""Exact optimal evasion attack against a fitted tree.

Every leaf of a tree occupies an axis-aligned box: half-open intervals
(lo, hi] for numerical features, mirroring the value <= threshold rule, and
an admissible category set for categorical features. A sample is
misclassifiable when any leaf with a wrong label is reachable, meaning its
perturbation region intersects that leaf's box on every feature.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .threat import (
    CategoricalPerturbation,
    ThreatModel,
    reachable_categories,
)
from .tree import DecisionNode, Leaf, Tree


@dataclass(frozen=True)
class LeafBox:
    # per feature: ("num", lo, hi) for the interval (lo, hi], or
    # ("cat", "in", s) / ("cat", "notin", s) for category membership
    constraints: tuple
    leaf: Leaf

    @property
    def predicted_label(self) -> int:
        return self.leaf.predicted_label


@dataclass
class AttackReport:
    accuracy: float
    adversarial_accuracy: float
    n_samples: int
    records: list

    def to_doc(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "adversarial_accuracy": self.adversarial_accuracy,
            "n_samples": self.n_samples,
            "records": self.records,
        }


def enumerate_leaf_boxes(tree: Tree):
    """All leaf boxes in depth-first (left-first) order."""
    init = []
    for f in tree.features:
        if f["kind"] == "numerical":
            init.append(("num", -np.inf, np.inf))
        else:
            init.append(("cat", "notin", frozenset()))
    boxes = []

    def walk(node, constr):
        if isinstance(node, Leaf):
            boxes.append(LeafBox(tuple(constr), node))
            return
        j = node.feature
        if node.threshold is not None:
            _, lo, hi = constr[j]
            left_c = ("num", lo, min(hi, node.threshold))
            right_c = ("num", max(lo, node.threshold), hi)
        else:
            _, kind, s = constr[j]
            cats = node.left_categories
            if kind == "in":
                left_c = ("cat", "in", s & cats)
                right_c = ("cat", "in", s - cats)
            else:
                left_c = ("cat", "in", cats - s)
                right_c = ("cat", "notin", s | cats)
        walk(node.left, constr[:j] + [left_c] + constr[j + 1:])
        walk(node.right, constr[:j] + [right_c] + constr[j + 1:])

    walk(tree.root, init)
    return boxes


def _feature_reach(tree: Tree, X, threat: ThreatModel):
    """Per feature, the attacker's reach for every row.

    Numerical: clamped interval endpoint arrays (a, b). Categorical: a
    bitmask array of reachable known categories plus a mask of rows whose
    own code is outside the known range.
    """
    out = []
    for j, f in enumerate(tree.features):
        p = threat.perturbations[j]
        col = X[:, j]
        if f["kind"] == "numerical":
            lo, hi = f["range"]
            a = np.clip(col - p.eps_left, lo, hi)
            b = np.clip(col + p.eps_right, lo, hi)
            out.append(("num", a, b))
        else:
            c = int(f["n_categories"])
            if p.reachable is None:
                extra = (1 << c) - 1
            else:
                extra = 0
                for cat in p.reachable:
                    if cat < c:
                        extra |= 1 << cat
            codes = col.astype(np.int64)
            known = (codes >= 0) & (codes < c)
            own = np.where(known, np.int64(1) << np.clip(codes, 0, c - 1), 0)
            bits = (own | extra).astype(np.int64)
            out.append(("cat", bits, ~known, c))
    return out


def _reach_mask(box: LeafBox, reach) -> np.ndarray:
    """Rows whose perturbation region intersects the box."""
    ok = None
    for constr, feat in zip(box.constraints, reach):
        if constr[0] == "num":
            _, lo, hi = constr
            _, a, b = feat
            here = (a <= hi) & (b > lo)
        else:
            _, kind, s = constr
            _, bits, unknown, c = feat
            sbits = 0
            for cat in s:
                sbits |= 1 << cat
            if kind == "in":
                here = (bits & sbits) != 0
            else:
                outside = ((1 << c) - 1) & ~sbits
                # an unknown own category is never in the excluded set
                here = ((bits & outside) != 0) | unknown
        ok = here if ok is None else ok & here
    if ok is None:
        return np.ones(0, dtype=bool)
    return ok


def is_reachable(sample, box: LeafBox, threat: ThreatModel, tree: Tree) -> bool:
    """True when the sample's perturbation region intersects the box."""
    X = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    reach = _feature_reach(tree, X, threat)
    return bool(_reach_mask(box, reach)[0])


def witness_perturbation(tree: Tree, sample, label: int,
                         threat: Optional[ThreatModel] = None):
    """A concrete perturbed copy of the sample that the tree misclassifies,
    or None when the attack cannot succeed."""
    threat = tree.threat if threat is None else threat
    x = np.asarray(sample, dtype=np.float64)
    X = np.atleast_2d(x)
    reach = _feature_reach(tree, X, threat)
    for box in enumerate_leaf_boxes(tree):
        if box.predicted_label == label:
            continue
        if not _reach_mask(box, reach)[0]:
            continue
        for pick_midpoint in (True, False):
            w = x.copy()
            for j, constr in enumerate(box.constraints):
                if constr[0] == "num":
                    _, lo, hi = constr
                    _, a, b = reach[j]
                    top = min(float(b[0]), hi)
                    if pick_midpoint:
                        w[j] = (max(float(a[0]), lo) + top) / 2.0
                    else:
                        w[j] = top
                else:
                    _, kind, s = constr
                    c = int(tree.features[j]["n_categories"])
                    cats = reachable_categories(threat, j, int(x[j]), c)
                    if kind == "in":
                        w[j] = min(cats & s)
                    else:
                        allowed = sorted(c2 for c2 in cats if c2 not in s)
                        w[j] = allowed[0] if allowed else int(x[j])
            if int(tree.predict([w])[0]) != label:
                return w
    return None


def adversarial_accuracy(tree: Tree, X, y,
                         threat: Optional[ThreatModel] = None,
                         with_witnesses: bool = False) -> AttackReport:
    """Accuracy under the exact optimal per-sample evasion attack.

    Samples of attacked classes count as misclassified when any wrong-label
    leaf is reachable; other samples count by their natural prediction.
    """
    threat = tree.threat if threat is None else threat
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).astype(np.int64)
    if X.shape[1] != tree.n_features:
        raise ValueError(
            "expected %d features, got %d" % (tree.n_features, X.shape[1])
        )
    if threat.n_features != tree.n_features:
        raise ValueError("threat model arity does not match the tree")

    natural = tree.predict(X)
    boxes = enumerate_leaf_boxes(tree)
    reach = _feature_reach(tree, X, threat)
    n = X.shape[0]
    reach_wrong = {0: np.zeros(n, dtype=bool), 1: np.zeros(n, dtype=bool)}
    for box in boxes:
        mask = _reach_mask(box, reach)
        reach_wrong[1 - box.predicted_label] |= mask

    misclassifiable = natural != y
    for k in threat.attacked_classes:
        rows = y == k
        misclassifiable[rows] = reach_wrong[k][rows]

    records = []
    for i in range(n):
        rec = {
            "index": i,
            "label": int(y[i]),
            "natural_prediction": int(natural[i]),
            "misclassifiable": bool(misclassifiable[i]),
        }
        if with_witnesses:
            w = None
            if misclassifiable[i] and int(y[i]) in threat.attacked_classes:
                w = witness_perturbation(tree, X[i], int(y[i]), threat)
            rec["witness"] = None if w is None else [float(v) for v in w]
        records.append(rec)

    accuracy = float((natural == y).mean()) if n else 0.0
    adv = float(1.0 - misclassifiable.mean()) if n else 0.0
    return AttackReport(
        accuracy=accuracy, adversarial_accuracy=adv, n_samples=n,
        records=records,
    )
