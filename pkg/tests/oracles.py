"""Brute-force reference implementations, written independently of medal.metaeval.

Each follows the most literal textbook definition, trading speed for
obviousness: explicit sums, pair enumeration, counting-based ranks.
"""

from __future__ import annotations

import math
from itertools import permutations


def pearson(xs, ys):
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxy = sum(x * y for x, y in zip(xs, ys))
    sxx = sum(x * x for x in xs)
    syy = sum(y * y for y in ys)
    num = n * sxy - sx * sy
    den = math.sqrt(n * sxx - sx * sx) * math.sqrt(n * syy - sy * sy)
    if den == 0:
        return None
    return num / den


def rank(values):
    # rank = 1 + (#smaller) + (#tied others) / 2
    out = []
    for v in values:
        less = sum(1 for w in values if w < v)
        tied = sum(1 for w in values if w == v) - 1
        out.append(1 + less + tied / 2)
    return out


def spearman(xs, ys):
    return pearson(rank(xs), rank(ys))


def f1(pred, gold, positive=1):
    tp = sum(1 for p, g in zip(pred, gold) if p == positive and g == positive)
    fp = sum(1 for p, g in zip(pred, gold) if p == positive and g != positive)
    fn = sum(1 for p, g in zip(pred, gold) if p != positive and g == positive)
    if tp + fp + fn == 0:
        return None
    if tp == 0:
        return 0.0
    prec, rec = tp / (tp + fp), tp / (tp + fn)
    return 2 * prec * rec / (prec + rec)


def exact(a, b):
    return sum(1 for x, y in zip(a, b) if x == y) / len(a)


def adjacent(a, b):
    return sum(1 for x, y in zip(a, b) if -1 <= x - y <= 1) / len(a)


def alpha(units, metric):
    """Pair-enumeration alpha.

    ``units`` is a list of value lists (missing already removed). Observed
    disagreement averages, within each unit, every ordered pair of
    distinct raters weighted by 1/(m-1); expected disagreement averages
    every ordered pair of distinct pairable values across all units.
    """
    pairable = [u for u in units if len(u) >= 2]
    flat = [v for u in pairable for v in u]
    n = len(flat)
    if n == 0:
        return None
    d_o = 0.0
    for u in pairable:
        m = len(u)
        for i, j in permutations(range(m), 2):
            d_o += metric(u[i], u[j]) / (m - 1)
    d_o /= n
    d_e = 0.0
    for i, j in permutations(range(n), 2):
        d_e += metric(flat[i], flat[j])
    d_e /= n * (n - 1)
    if d_e == 0:
        return None
    return 1 - d_o / d_e


def nominal(a, b):
    return 0.0 if a == b else 1.0


def interval(a, b):
    return float(a - b) ** 2


def mtld_pass(tokens, threshold=0.72):
    factors = 0.0
    start = 0
    for end in range(1, len(tokens) + 1):
        seg = tokens[start:end]
        if len(set(seg)) / len(seg) < threshold:
            factors += 1
            start = end
    rest = tokens[start:]
    if rest:
        ttr = len(set(rest)) / len(rest)
        factors += (1 - ttr) / (1 - threshold)
    return len(tokens) / factors if factors else None


def mtld(tokens, threshold=0.72):
    if len(tokens) < 2:
        return None
    f, b = mtld_pass(tokens, threshold), mtld_pass(tokens[::-1], threshold)
    if f is None or b is None:
        return None
    return (f + b) / 2
