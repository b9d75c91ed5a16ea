"""Correlation, classification, agreement, significance and lexical-diversity metrics.

Functions return ``None`` where a quantity is undefined (constant inputs,
empty denominators) instead of a misleading number.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class Correlation:
    value: float | None
    p: float | None
    n: int

    def to_dict(self) -> dict:
        return {"value": self.value, "p": self.p, "n": self.n}


def _paired(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d and the same length")
    if len(x) < 3:
        raise ValueError("need at least 3 paired observations")
    return x, y


def _t_pvalue(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2 * sps.t.sf(abs(t), n - 2))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> Correlation:
    x, y = _paired(xs, ys)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return Correlation(None, None, len(x))
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return Correlation(r, _t_pvalue(r, len(x)), len(x))


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> Correlation:
    _paired(xs, ys)
    return pearson(average_ranks(list(xs)), average_ranks(list(ys)))


# ---------------------------------------------------------------------------
# binary classification

@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def flipped(self) -> Confusion:
        """Same counts with the negative class treated as positive."""
        return Confusion(self.tn, self.fn, self.fp, self.tp)


def confusion(pred: Sequence[int], gold: Sequence[int]) -> Confusion:
    if len(pred) != len(gold):
        raise ValueError("prediction and gold lengths differ")
    c = Counter(zip((int(p) for p in pred), (int(g) for g in gold)))
    return Confusion(tp=c[(1, 1)], fp=c[(1, 0)], fn=c[(0, 1)], tn=c[(0, 0)])


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


def precision(c: Confusion) -> float | None:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: Confusion) -> float | None:
    return _ratio(c.tp, c.tp + c.fn)


def f1(c: Confusion) -> float | None:
    """None when the class never occurs in either predictions or gold."""
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


def binary_metrics(pred: Sequence[int], gold: Sequence[int]) -> dict[str, float | int | None]:
    c = confusion(pred, gold)
    return {
        "f1_plus": f1(c),
        "f1_minus": f1(c.flipped()),
        "precision_plus": precision(c),
        "recall_plus": recall(c),
        "accuracy": _ratio(c.tp + c.tn, c.n),
        "predicted_positive_count": c.tp + c.fp,
        "gold_positive_count": c.tp + c.fn,
        "n": c.n,
    }


def mean_defined(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


# ---------------------------------------------------------------------------
# significance

@dataclass(frozen=True)
class McNemarResult:
    b: int  # a right, b wrong
    c: int  # a wrong, b right
    statistic: int
    p: float

    @property
    def significant(self) -> bool:
        return self.p < 0.05

    def to_dict(self) -> dict:
        return {"b": self.b, "c": self.c, "statistic": self.statistic, "p": self.p,
                "significant": self.significant}


def binomial_two_sided(k: int, n: int) -> float:
    """Exact two-sided p for ``k`` successes in ``n`` fair trials (doubling the smaller tail)."""
    if n == 0:
        return 1.0
    k = min(k, n - k)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2 ** n
    return min(1.0, 2 * tail)


def mcnemar(pred_a: Sequence[int], pred_b: Sequence[int], gold: Sequence[int]) -> McNemarResult:
    if not len(pred_a) == len(pred_b) == len(gold):
        raise ValueError("vectors must be aligned")
    b = c = 0
    for pa, pb, g in zip(pred_a, pred_b, gold):
        ra, rb = int(pa) == int(g), int(pb) == int(g)
        if ra and not rb:
            b += 1
        elif rb and not ra:
            c += 1
    return McNemarResult(b, c, min(b, c), binomial_two_sided(min(b, c), b + c))


# ---------------------------------------------------------------------------
# agreement

def _aligned(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    if not a:
        raise ValueError("empty input")


def exact_agreement(a: Sequence, b: Sequence) -> float:
    _aligned(a, b)
    return sum(x == y for x, y in zip(a, b)) / len(a)


def adjacent_agreement(a: Sequence[int], b: Sequence[int], tolerance: int = 1) -> float:
    _aligned(a, b)
    return sum(abs(x - y) <= tolerance for x, y in zip(a, b)) / len(a)


NOMINAL, INTERVAL = "nominal", "interval"


def _delta(level: str):
    if level == NOMINAL:
        return lambda v, w: 0.0 if v == w else 1.0
    if level == INTERVAL:
        return lambda v, w: (float(v) - float(w)) ** 2
    raise ValueError(f"unsupported level {level!r}")


def _units(records) -> list[list]:
    """Normalize to a list of per-unit value lists, dropping missing ratings.

    Accepts ``{unit: {rater: value}}``, ``{unit: [values]}``, or a
    rater-by-unit matrix (sequence of equal-length rows, ``None`` = missing).
    """
    if isinstance(records, Mapping):
        units = []
        for v in records.values():
            vals = v.values() if isinstance(v, Mapping) else v
            units.append([x for x in vals if x is not None])
        return units
    rows = [list(r) for r in records]
    if not rows:
        return []
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("rater rows must have equal length")
    return [[r[u] for r in rows if r[u] is not None] for u in range(width)]


def krippendorff_alpha(records, level: str = NOMINAL) -> float | None:
    """Coincidence-matrix alpha; None when nothing is pairable or expected disagreement is 0."""
    delta = _delta(level)
    coincidence: dict[tuple[Hashable, Hashable], float] = defaultdict(float)
    for values in _units(records):
        m = len(values)
        if m < 2:
            continue
        for i, v in enumerate(values):
            for j, w in enumerate(values):
                if i != j:
                    coincidence[(v, w)] += 1.0 / (m - 1)
    if not coincidence:
        return None
    marginals: dict[Hashable, float] = defaultdict(float)
    for (v, _), n_vw in coincidence.items():
        marginals[v] += n_vw
    n = sum(marginals.values())
    d_o = sum(n_vw * delta(v, w) for (v, w), n_vw in coincidence.items()) / n
    values = list(marginals)
    d_e = sum(marginals[v] * marginals[w] * delta(v, w)
              for v in values for w in values) / (n * (n - 1))
    if d_e == 0:
        return None
    return 1.0 - d_o / d_e


# ---------------------------------------------------------------------------
# lexical diversity

def _mtld_pass(tokens: Sequence[str], threshold: float) -> float | None:
    factors = 0.0
    types: set = set()
    count = 0
    for tok in tokens:
        count += 1
        types.add(tok)
        if len(types) / count < threshold:
            factors += 1
            types, count = set(), 0
    if count:
        factors += (1 - len(types) / count) / (1 - threshold)
    return len(tokens) / factors if factors else None


def mtld(tokens: Sequence[str], threshold: float = 0.72) -> float | None:
    """Bidirectional MTLD; None for fewer than two tokens or when no factor accrues."""
    tokens = list(tokens)
    if len(tokens) < 2:
        return None
    fwd = _mtld_pass(tokens, threshold)
    bwd = _mtld_pass(tokens[::-1], threshold)
    if fwd is None or bwd is None:
        return None
    return (fwd + bwd) / 2
