"""Split score math.

Gini impurity, weighted split scores, and constant-time worst-case split
scores where an attacker reallocates movable samples across the split to
maximize impurity. Scalar functions delegate to the array implementations so
both paths produce bit-identical floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Cap on the solution line slope; keeps squares finite for absurd count ratios.
_SLOPE_CAP = 1e150


@dataclass(frozen=True)
class SplitCounts:
    """Per-label sample masses around one candidate split.

    l/r are the firmly-left and firmly-right masses, i the movable mass the
    attacker controls, li/ri the raw intersection counts by natural side.
    l, r, i may be fractional after rho scaling; li, ri stay raw.
    """

    l0: float = 0.0
    l1: float = 0.0
    r0: float = 0.0
    r1: float = 0.0
    i0: float = 0.0
    i1: float = 0.0
    li0: float = 0.0
    li1: float = 0.0
    ri0: float = 0.0
    ri1: float = 0.0


class SolutionLine(NamedTuple):
    slope: float
    intercept: float


class AdversarialScore(NamedTuple):
    score: float
    x_star: int
    y_star: int


def gini_arrays(n0, n1):
    n0 = np.asarray(n0, dtype=np.float64)
    n1 = np.asarray(n1, dtype=np.float64)
    t = n0 + n1
    # q * q instead of q ** 2: identical bits on 0-d and vector inputs
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = n0 / t
        q1 = n1 / t
        g = 1.0 - q0 * q0 - q1 * q1
    return np.where(t > 0, g, 0.0)


def split_score_arrays(l0, l1, r0, r1):
    l0 = np.asarray(l0, dtype=np.float64)
    l1 = np.asarray(l1, dtype=np.float64)
    r0 = np.asarray(r0, dtype=np.float64)
    r1 = np.asarray(r1, dtype=np.float64)
    tl = l0 + l1
    tr = r0 + r1
    t = tl + tr
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (tl * gini_arrays(l0, l1) + tr * gini_arrays(r0, r1)) / t
    return np.where(t > 0, s, 0.0)


def gini(n0: float, n1: float) -> float:
    """Gini impurity of a two-class node; 0 for an empty node."""
    return float(gini_arrays(n0, n1))


def split_score(l0: float, l1: float, r0: float, r1: float) -> float:
    """Weighted average Gini of the two sides; 0 when both are empty.

    Lower is better.
    """
    return float(split_score_arrays(l0, l1, r0, r1))


def apply_rho(raw: SplitCounts, rho: float) -> SplitCounts:
    """Scale raw partition counts by the movable-fraction rho.

    A (1 - rho) share of each intersection stays on its natural side; the
    rest becomes attacker-movable mass.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return SplitCounts(
        l0=raw.l0 + (1.0 - rho) * raw.li0,
        l1=raw.l1 + (1.0 - rho) * raw.li1,
        r0=raw.r0 + (1.0 - rho) * raw.ri0,
        r1=raw.r1 + (1.0 - rho) * raw.ri1,
        i0=rho * (raw.li0 + raw.ri0),
        i1=rho * (raw.li1 + raw.ri1),
        li0=raw.li0,
        li1=raw.li1,
        ri0=raw.ri0,
        ri1=raw.ri1,
    )


def solution_line(c: SplitCounts) -> SolutionLine:
    """Line of real-valued maximizers y = intercept + slope * x.

    x counts moved label-1 mass, y moved label-0 mass.
    """
    d1 = c.l1 + c.r1 + c.i1
    if d1 <= 0:
        raise ValueError("degenerate solution line: no label-1 mass")
    slope = (c.l0 + c.r0 + c.i0) / d1
    intercept = (c.l1 * (c.r0 + c.i0) - c.l0 * (c.r1 + c.i1)) / d1
    return SolutionLine(slope, intercept)


def project_to_line(line: SolutionLine, start) -> tuple:
    """Perpendicular projection of a point onto the line."""
    x0, y0 = start
    m, b = line.slope, line.intercept
    xp = (x0 + m * (y0 - b)) / (m * m + 1.0)
    return (xp, m * xp + b)


def _start_point(i, li, ri):
    # movable mass currently on the left, proportional share of i
    den = li + ri
    with np.errstate(divide="ignore", invalid="ignore"):
        s = i * li / den
    return np.where(den > 0, s, 0.0)


def _sanitize(a, lo, hi):
    a = np.clip(a, lo, hi)
    return np.where(np.isfinite(a), a, 0.0)


def two_class_scores(l0, l1, r0, r1, i0, i1, li0, li1, ri0, ri1):
    """Worst-case split scores when the attacker moves both labels.

    All inputs are broadcastable float arrays. Returns (score, x_star,
    y_star) arrays: the attacker-optimal integer reallocation where x_star
    label-1 and y_star label-0 movable samples end up on the left.

    Evaluates floor/ceil neighbors of six anchors: the clipped projection of
    the start point onto the solution line, the line's clipped crossings
    with all four edges of [0, i1] x [0, i0], and the clipped start point
    itself. The objective is concave so these cover the integer maximum up
    to a small calibrated gap. Ties break by distance to the start point,
    then by smallest (x, y).
    """
    l0, l1, r0, r1, i0, i1, li0, li1, ri0, ri1 = (
        np.asarray(a, dtype=np.float64)
        for a in (l0, l1, r0, r1, i0, i1, li0, li1, ri0, ri1)
    )
    shape = np.broadcast_shapes(
        l0.shape, l1.shape, r0.shape, r1.shape, i0.shape, i1.shape,
        li0.shape, li1.shape, ri0.shape, ri1.shape,
    )
    l0, l1, r0, r1, i0, i1, li0, li1, ri0, ri1 = (
        np.broadcast_to(a, shape)
        for a in (l0, l1, r0, r1, i0, i1, li0, li1, ri0, ri1)
    )
    x0 = _start_point(i1, li1, ri1)
    y0 = _start_point(i0, li0, ri0)
    xmax = np.floor(i1)
    ymax = np.floor(i0)

    d1 = l1 + r1 + i1
    safe_d1 = np.where(d1 > 0, d1, 1.0)
    m = np.clip((l0 + r0 + i0) / safe_d1, 0.0, _SLOPE_CAP)
    b = (l1 * (r0 + i0) - l0 * (r1 + i1)) / safe_d1
    xp = (x0 + m * (y0 - b)) / (m * m + 1.0)
    yp = m * xp + b
    safe_m = np.where(m > 0, m, 1.0)

    anchors = [
        (_sanitize(xp, 0.0, i1), _sanitize(yp, 0.0, i0)),
        (np.zeros(shape), _sanitize(b, 0.0, i0)),
        (i1, _sanitize(m * i1 + b, 0.0, i0)),
        (_sanitize((0.0 - b) / safe_m, 0.0, i1), np.zeros(shape)),
        (_sanitize((i0 - b) / safe_m, 0.0, i1), i0),
        (x0, y0),
    ]

    best_s = np.full(shape, -1.0)
    best_d = np.full(shape, np.inf)
    best_x = np.zeros(shape)
    best_y = np.zeros(shape)
    for ax, ay in anchors:
        for x in (np.clip(np.floor(ax), 0.0, xmax), np.clip(np.ceil(ax), 0.0, xmax)):
            for y in (np.clip(np.floor(ay), 0.0, ymax), np.clip(np.ceil(ay), 0.0, ymax)):
                s = split_score_arrays(l0 + y, l1 + x, r0 + i0 - y, r1 + i1 - x)
                dx = x - x0
                dy = y - y0
                d = dx * dx + dy * dy
                tie = s == best_s
                better = (s > best_s) | (tie & (d < best_d)) | (
                    tie
                    & (d == best_d)
                    & ((x < best_x) | ((x == best_x) & (y < best_y)))
                )
                best_s = np.where(better, s, best_s)
                best_d = np.where(better, d, best_d)
                best_x = np.where(better, x, best_x)
                best_y = np.where(better, y, best_y)
    return best_s, best_x, best_y


def one_class_scores(l0, l1, r0, r1, i0, i1, li0, li1, ri0, ri1):
    """Worst-case split scores when only label-1 samples move.

    Exact: the objective is concave in x, so the integer maximum is at the
    floor or ceil of the clipped continuous maximizer. i0 must be 0.
    """
    l0, l1, r0, r1, i1, li1, ri1 = (
        np.asarray(a, dtype=np.float64) for a in (l0, l1, r0, r1, i1, li1, ri1)
    )
    shape = np.broadcast_shapes(
        l0.shape, l1.shape, r0.shape, r1.shape, i1.shape, li1.shape, ri1.shape
    )
    l0, l1, r0, r1, i1, li1, ri1 = (
        np.broadcast_to(a, shape) for a in (l0, l1, r0, r1, i1, li1, ri1)
    )
    x0 = _start_point(i1, li1, ri1)
    xmax = np.floor(i1)

    den = l0 + r0
    safe_den = np.where(den > 0, den, 1.0)
    xc = (l0 * r1 + l0 * i1 - l1 * r0) / safe_den
    # den == 0 means no label-0 mass at all, score is identically 0
    xc = np.where(den > 0, xc, 0.0)
    xc = _sanitize(xc, 0.0, i1)

    best_s = np.full(shape, -1.0)
    best_d = np.full(shape, np.inf)
    best_x = np.zeros(shape)
    for x in (np.clip(np.floor(xc), 0.0, xmax), np.clip(np.ceil(xc), 0.0, xmax), xmax):
        s = split_score_arrays(l0, l1 + x, r0, r1 + i1 - x)
        dx = x - x0
        d = dx * dx
        tie = s == best_s
        better = (s > best_s) | (tie & (d < best_d)) | (
            tie & (d == best_d) & (x < best_x)
        )
        best_s = np.where(better, s, best_s)
        best_d = np.where(better, d, best_d)
        best_x = np.where(better, x, best_x)
    return best_s, best_x, np.zeros(shape)


def adversarial_score_two_class(c: SplitCounts) -> AdversarialScore:
    """Attacker-optimal score and reallocation with both labels movable."""
    s, x, y = two_class_scores(
        c.l0, c.l1, c.r0, c.r1, c.i0, c.i1, c.li0, c.li1, c.ri0, c.ri1
    )
    return AdversarialScore(float(s), int(x), int(y))


def adversarial_score_one_class(c: SplitCounts) -> AdversarialScore:
    """Attacker-optimal score with only label-1 movable; exact.

    Requires i0 == 0 (no movable label-0 mass).
    """
    if c.i0 != 0:
        raise ValueError("one-class score requires i0 == 0")
    s, x, y = one_class_scores(
        c.l0, c.l1, c.r0, c.r1, c.i0, c.i1, c.li0, c.li1, c.ri0, c.ri1
    )
    return AdversarialScore(float(s), int(x), int(y))
