"""Candidate split enumeration and worst-case scoring per feature.

Numerical features are swept over the candidate set formed by the sample
values and their perturbation reach endpoints; counts at every candidate
come from searchsorted on presorted arrays, so each feature costs one sort.
Categorical features are scored by exhaustive enumeration of the
2^(c-1) - 1 nontrivial bipartitions.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .impurity import SplitCounts, one_class_scores, two_class_scores
from .threat import CategoricalPerturbation, ThreatModel


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    score: float
    threshold: Optional[float] = None
    left_categories: Optional[frozenset] = None
    x_star: int = 0
    y_star: int = 0


def candidate_thresholds(values, eps_left: float, eps_right: float) -> np.ndarray:
    """Sorted unique split positions: sample values and reach endpoints.

    Unbounded perturbation sides contribute no candidates.
    """
    v = np.asarray(values, dtype=np.float64)
    parts = [v]
    if eps_left > 0 and math.isfinite(eps_left):
        parts.append(v - eps_left)
    if eps_right > 0 and math.isfinite(eps_right):
        parts.append(v + eps_right)
    cands = np.unique(np.concatenate(parts))
    return cands[np.isfinite(cands)]


def _label_counts(values, thresholds, eps_left, eps_right):
    """(L, LI, RI, R) for one label's values at each threshold.

    A sample is firmly left of s when it cannot be pushed right
    (value + eps_right <= s) and firmly right when it cannot be pushed left
    (value - eps_left > s); otherwise it sits in the intersection on its
    natural side (left iff value <= s).
    """
    o = np.sort(values)
    hi = np.sort(values + eps_right) if eps_right > 0 else o
    lo = np.sort(values - eps_left) if eps_left > 0 else o
    n = o.size
    nl = np.searchsorted(o, thresholds, side="right")
    firm_left = np.searchsorted(hi, thresholds, side="right")
    can_reach_left = np.searchsorted(lo, thresholds, side="right")
    r = n - can_reach_left
    li = nl - firm_left
    ri = (n - nl) - r
    return firm_left, li, ri, r


def _raw_counts(values, labels, thresholds, eps_left, eps_right, attacked):
    per_label = []
    for k in (0, 1):
        vk = values[labels == k]
        if k in attacked:
            per_label.append(_label_counts(vk, thresholds, eps_left, eps_right))
        else:
            per_label.append(_label_counts(vk, thresholds, 0.0, 0.0))
    return per_label


def partition_counts(values, labels, s: float, eps_left: float = 0.0,
                     eps_right: float = 0.0,
                     attacked_classes=(0, 1)) -> SplitCounts:
    """Raw per-label counts around threshold s, computed from scratch."""
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    thresholds = np.asarray([s], dtype=np.float64)
    attacked = frozenset(attacked_classes)
    (l0, li0, ri0, r0), (l1, li1, ri1, r1) = _raw_counts(
        values, labels, thresholds, eps_left, eps_right, attacked
    )
    return SplitCounts(
        l0=float(l0[0]), l1=float(l1[0]), r0=float(r0[0]), r1=float(r1[0]),
        i0=float(li0[0] + ri0[0]), i1=float(li1[0] + ri1[0]),
        li0=float(li0[0]), li1=float(li1[0]),
        ri0=float(ri0[0]), ri1=float(ri1[0]),
    )


def _score_counts(counts0, counts1, rho, attacked):
    """Adversarial scores for arrays of raw counts, dispatched on the
    attacked class set."""
    L0, LI0, RI0, R0 = counts0
    L1, LI1, RI1, R1 = counts1
    l0 = L0 + (1.0 - rho) * LI0
    l1 = L1 + (1.0 - rho) * LI1
    r0 = R0 + (1.0 - rho) * RI0
    r1 = R1 + (1.0 - rho) * RI1
    i0 = rho * (LI0 + RI0)
    i1 = rho * (LI1 + RI1)
    if attacked == frozenset({1}):
        return one_class_scores(l0, l1, r0, r1, i0, i1, LI0, LI1, RI0, RI1)
    if attacked == frozenset({0}):
        # same search with the labels swapped; x counts moved label-0 mass
        s, x, y = one_class_scores(l1, l0, r1, r0, i1, i0, LI1, LI0, RI1, RI0)
        return s, y, x
    return two_class_scores(l0, l1, r0, r1, i0, i1, LI0, LI1, RI0, RI1)


def best_robust_split_numerical(values, labels, pert, rho: float = 1.0,
                                attacked_classes=(0, 1),
                                feature: int = 0) -> Optional[SplitCandidate]:
    """Minimum worst-case score over all candidate thresholds.

    Returns None when no threshold separates the samples into two non-empty
    sides under the plain (unattacked) partition.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    attacked = frozenset(attacked_classes)
    cands = candidate_thresholds(values, pert.eps_left, pert.eps_right)
    vmin = values.min()
    vmax = values.max()
    cands = cands[(cands >= vmin) & (cands < vmax)]
    if cands.size == 0:
        return None
    counts0, counts1 = _raw_counts(
        values, labels, cands, pert.eps_left, pert.eps_right, attacked
    )
    scores, x, y = _score_counts(counts0, counts1, rho, attacked)
    k = int(np.argmin(scores))
    return SplitCandidate(
        feature=feature, score=float(scores[k]), threshold=float(cands[k]),
        x_star=int(x[k]), y_star=int(y[k]),
    )


def best_robust_split_categorical(codes, labels, pert, rho: float = 1.0,
                                  attacked_classes=(0, 1), feature: int = 0,
                                  n_categories: Optional[int] = None,
                                  max_categories: int = 12,
                                  ) -> Optional[SplitCandidate]:
    """Minimum worst-case score over all nontrivial category bipartitions."""
    codes = np.asarray(codes).astype(np.int64)
    labels = np.asarray(labels)
    attacked = frozenset(attacked_classes)
    c = int(n_categories) if n_categories is not None else int(codes.max()) + 1
    if c > max_categories:
        raise ValueError(
            "feature %d has %d categories, above the cap of %d; "
            "pre-encode it into fewer categories" % (feature, c, max_categories)
        )
    if c < 2:
        return None
    cnt = [np.bincount(codes[labels == k], minlength=c) for k in (0, 1)]

    if pert.reachable is None:
        reach_mask = np.full(c, (1 << c) - 1, dtype=np.int64)
    else:
        extra = 0
        for cat in pert.reachable:
            if cat < c:
                extra |= 1 << cat
        reach_mask = (1 << np.arange(c, dtype=np.int64)) | extra

    # category c-1 stays right, so each unordered bipartition appears once
    masks = np.arange(1, 1 << (c - 1), dtype=np.int64)
    comp = ((1 << c) - 1) & ~masks
    in_left = ((masks[:, None] >> np.arange(c)[None, :]) & 1).astype(bool)
    straddle_from_left = in_left & ((reach_mask[None, :] & comp[:, None]) != 0)
    straddle_from_right = ~in_left & ((reach_mask[None, :] & masks[:, None]) != 0)

    per_label = []
    for k in (0, 1):
        if k in attacked:
            li = (straddle_from_left * cnt[k]).sum(axis=1)
            ri = (straddle_from_right * cnt[k]).sum(axis=1)
        else:
            li = np.zeros(masks.size, dtype=np.int64)
            ri = np.zeros(masks.size, dtype=np.int64)
        nat_left = (in_left * cnt[k]).sum(axis=1)
        nat_right = (~in_left * cnt[k]).sum(axis=1)
        per_label.append((nat_left - li, li, ri, nat_right - ri))

    nat_left_total = per_label[0][0] + per_label[0][1] + per_label[1][0] + per_label[1][1]
    nat_right_total = per_label[0][2] + per_label[0][3] + per_label[1][2] + per_label[1][3]
    valid = (nat_left_total > 0) & (nat_right_total > 0)
    if not valid.any():
        return None
    masks = masks[valid]
    per_label = [tuple(a[valid] for a in counts) for counts in per_label]
    scores, x, y = _score_counts(per_label[0], per_label[1], rho, attacked)

    best_score = scores.min()
    best_k = None
    best_cats = None
    for k in np.flatnonzero(scores == best_score):
        cats = tuple(j for j in range(c) if (int(masks[k]) >> j) & 1)
        if best_cats is None or cats < best_cats:
            best_cats = cats
            best_k = int(k)
    return SplitCandidate(
        feature=feature, score=float(scores[best_k]),
        left_categories=frozenset(best_cats),
        x_star=int(x[best_k]), y_star=int(y[best_k]),
    )


def best_robust_split(X, y, threat: ThreatModel, rho: float = 1.0,
                      n_categories=None,
                      max_categories: int = 12) -> Optional[SplitCandidate]:
    """Best robust split across all features; ties go to the lowest index."""
    X = np.asarray(X, dtype=np.float64)
    best = None
    for j in range(X.shape[1]):
        p = threat.perturbations[j]
        if isinstance(p, CategoricalPerturbation):
            cand = best_robust_split_categorical(
                X[:, j], y, p, rho, threat.attacked_classes, feature=j,
                n_categories=(n_categories or {}).get(j),
                max_categories=max_categories,
            )
        else:
            cand = best_robust_split_numerical(
                X[:, j], y, p, rho, threat.attacked_classes, feature=j
            )
        if cand is not None and (best is None or cand.score < best.score):
            best = cand
    return best
