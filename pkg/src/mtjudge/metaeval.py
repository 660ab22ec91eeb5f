"""Meta-evaluation statistics for translation metrics.

Covers pairwise system-ranking accuracy, segment-level Kendall tau-b and
Pearson correlation, word-position span metrics (precision/recall/F1 for all
and for major-only errors, plus MCC over per-word error classification),
category precision/recall with min-count overlap, Shapley attribution of the
source and reference prompt fields, a paired permutation significance test,
and critical-error detection accuracy.

Degenerate-denominator conventions used throughout: precision, recall, F1,
and MCC are 0 when their denominators vanish.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.stats

from .data import CANONICAL_CATEGORIES, ErrorAnnotation, InputMode

logger = logging.getLogger(__name__)


class MetaEvalError(Exception):
    pass


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


# ---------------------------------------------------------------------------
# Score-level statistics
# ---------------------------------------------------------------------------

def system_accuracy(human: Mapping[str, Mapping[str, float]],
                    metric: Mapping[str, Mapping[str, float]]) -> float:
    """Pairwise ranking accuracy pooled over language pairs.

    A system pair counts as correct when the metric orders it the same way as
    the human scores. Human-tied pairs are excluded; metric-tied pairs count
    as incorrect.
    """
    if set(human) != set(metric):
        raise MetaEvalError("human and metric cover different language pairs")
    correct = 0
    total = 0
    for lp in sorted(human):
        if set(human[lp]) != set(metric[lp]):
            raise MetaEvalError(f"{lp}: human and metric system sets differ")
        for a, b in itertools.combinations(sorted(human[lp]), 2):
            human_delta = human[lp][a] - human[lp][b]
            if human_delta == 0:
                continue
            metric_delta = metric[lp][a] - metric[lp][b]
            total += 1
            if metric_delta != 0 and (metric_delta > 0) == (human_delta > 0):
                correct += 1
    if total == 0:
        raise MetaEvalError("no comparable system pairs "
                            "(need >= 2 systems with distinct human scores)")
    return correct / total


def kendall_tau(gold: Iterable[float], pred: Iterable[float],
                variant: str = "b") -> float:
    """Kendall rank correlation: tie-corrected tau-b by default, tau-a on
    request."""
    x = np.asarray(list(gold), dtype=float)
    y = np.asarray(list(pred), dtype=float)
    if len(x) != len(y):
        raise MetaEvalError("lists differ in length")
    if len(x) < 2:
        raise MetaEvalError("need at least 2 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise MetaEvalError("correlation undefined for constant inputs")
    if variant == "b":
        return float(scipy.stats.kendalltau(x, y, variant="b").statistic)
    if variant == "a":
        sign_x = np.sign(x[:, None] - x[None, :])
        sign_y = np.sign(y[:, None] - y[None, :])
        n = len(x)
        concordance = np.sum(np.triu(sign_x * sign_y, 1))
        return float(concordance / (n * (n - 1) / 2))
    raise MetaEvalError(f"unknown Kendall variant {variant!r}")


def pearson(gold: Iterable[float], pred: Iterable[float]) -> float:
    x = np.asarray(list(gold), dtype=float)
    y = np.asarray(list(pred), dtype=float)
    if len(x) != len(y):
        raise MetaEvalError("lists differ in length")
    if len(x) < 2:
        raise MetaEvalError("need at least 2 observations")
    if np.std(x) == 0 or np.std(y) == 0:
        raise MetaEvalError("correlation undefined for zero variance")
    return float(np.corrcoef(x, y)[0, 1])


# ---------------------------------------------------------------------------
# Span-level statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpanCounts:
    overlap: int = 0
    pred_size: int = 0
    gold_size: int = 0
    overlap_major: int = 0
    pred_major: int = 0
    gold_major: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


@dataclass(frozen=True)
class SpanMetrics:
    sp: float
    sr: float
    sf1: float
    mp: float
    mr: float
    mf1: float
    mcc: float
    counts: SpanCounts


def _positions(annotations: Iterable[ErrorAnnotation],
               major_only: bool = False) -> set[int]:
    out: set[int] = set()
    for ann in annotations:
        if major_only and ann.severity != "major":
            continue
        out |= ann.word_span
    return out


def mcc_from_confusion(tp: int, fp: int, fn: int, tn: int) -> float:
    denom = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / denom


def span_metrics(gold: Mapping[tuple, list[ErrorAnnotation]],
                 pred: Mapping[tuple, list[ErrorAnnotation]],
                 word_counts: Mapping[tuple, int]) -> SpanMetrics:
    """Micro-averaged word-position overlap between predicted and gold spans.

    Per segment, each side's marked positions are the union of its spans'
    word indices; counts are pooled over the whole corpus before ratios are
    taken. MCC classifies every word position of every segment as
    error/not-error.
    """
    if set(gold) != set(pred):
        raise MetaEvalError("gold and predictions cover different segments")
    overlap = pred_size = gold_size = 0
    overlap_major = pred_major = gold_major = 0
    tp = fp = fn = tn = 0
    for key in gold:
        gold_pos = _positions(gold[key])
        pred_pos = _positions(pred[key])
        overlap += len(gold_pos & pred_pos)
        pred_size += len(pred_pos)
        gold_size += len(gold_pos)
        gold_maj = _positions(gold[key], major_only=True)
        pred_maj = _positions(pred[key], major_only=True)
        overlap_major += len(gold_maj & pred_maj)
        pred_major += len(pred_maj)
        gold_major += len(gold_maj)
        tp += len(gold_pos & pred_pos)
        fp += len(pred_pos - gold_pos)
        fn += len(gold_pos - pred_pos)
        tn += word_counts[key] - len(gold_pos | pred_pos)
    sp = _ratio(overlap, pred_size)
    sr = _ratio(overlap, gold_size)
    mp = _ratio(overlap_major, pred_major)
    mr = _ratio(overlap_major, gold_major)
    return SpanMetrics(
        sp=sp, sr=sr, sf1=_f1(sp, sr),
        mp=mp, mr=mr, mf1=_f1(mp, mr),
        mcc=mcc_from_confusion(tp, fp, fn, tn),
        counts=SpanCounts(overlap=overlap, pred_size=pred_size,
                          gold_size=gold_size, overlap_major=overlap_major,
                          pred_major=pred_major, gold_major=gold_major,
                          tp=tp, fp=fp, fn=fn, tn=tn),
    )


# ---------------------------------------------------------------------------
# Category-level statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CategoryMetrics:
    per_category: dict[str, tuple[float, float, float]]

    def get(self, category: str) -> tuple[float, float, float]:
        return self.per_category.get(category, (0.0, 0.0, 0.0))


def _category_counts(annotations: Mapping[tuple, list[ErrorAnnotation]],
                     ) -> dict[str, int]:
    counts: dict[str, int] = {}
    for anns in annotations.values():
        if not anns:
            counts["no-error"] = counts.get("no-error", 0) + 1
            continue
        for ann in anns:
            cat = ann.category.canonical
            counts[cat] = counts.get(cat, 0) + 1
    return counts


def category_metrics(gold: Mapping[tuple, list[ErrorAnnotation]],
                     pred: Mapping[tuple, list[ErrorAnnotation]],
                     ) -> CategoryMetrics:
    """Min-count multiset precision/recall per canonical category, pooled
    corpus-wide and position-agnostic.

    A segment with an empty annotation list contributes one "no-error"
    occurrence to its side, so error-free detection is scored like a category.
    """
    if set(gold) != set(pred):
        raise MetaEvalError("gold and predictions cover different segments")
    gold_counts = _category_counts(gold)
    pred_counts = _category_counts(pred)
    per_category = {}
    for cat in CANONICAL_CATEGORIES:
        g = gold_counts.get(cat, 0)
        p = pred_counts.get(cat, 0)
        agreed = min(g, p)
        precision = _ratio(agreed, p)
        recall = _ratio(agreed, g)
        per_category[cat] = (precision, recall, _f1(precision, recall))
    return CategoryMetrics(per_category=per_category)


# ---------------------------------------------------------------------------
# Shapley attribution of prompt fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapleyResult:
    src: float
    ref: float
    basis: dict[str, float]


def shapley(scores: Mapping[InputMode | str, float]) -> ShapleyResult:
    """Average marginal contribution of the source and reference fields,
    computed from the four input-mode scores.

    src = ((S_ST - S_T) + (S_SRT - S_RT)) / 2
    ref = ((S_RT - S_T) + (S_SRT - S_ST)) / 2

    The two always satisfy src + ref = S_SRT - S_T exactly.
    """
    by_value: dict[str, float] = {}
    for mode, value in scores.items():
        name = mode.value if isinstance(mode, InputMode) else str(mode)
        by_value[name] = float(value)
    missing = [m.value for m in InputMode if m.value not in by_value]
    if missing:
        raise MetaEvalError(f"missing mode scores: {missing}")
    s_t = by_value["T"]
    s_st = by_value["S-T"]
    s_rt = by_value["R-T"]
    s_srt = by_value["S-R-T"]
    return ShapleyResult(
        src=((s_st - s_t) + (s_srt - s_rt)) / 2,
        ref=((s_rt - s_t) + (s_srt - s_st)) / 2,
        basis={m.value: by_value[m.value] for m in InputMode},
    )


# ---------------------------------------------------------------------------
# Paired permutation significance test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    statistic: float
    n_resamples: int
    alpha: float

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def _tau_stat(g: np.ndarray, x: np.ndarray) -> float:
    return float(scipy.stats.kendalltau(g, x, variant="b").statistic)


def _pearson_stat(g: np.ndarray, x: np.ndarray) -> float:
    with np.errstate(invalid="ignore", divide="ignore"):
        return float(np.corrcoef(g, x)[0, 1])


def perm_both_test(scores_a: Mapping[tuple, float],
                   scores_b: Mapping[tuple, float],
                   gold: Mapping[tuple, float],
                   target: str = "tau",
                   n: int = 1000,
                   alpha: float = 0.05,
                   seed: int = 0) -> SignificanceResult:
    """Paired permutation test between two metrics on the same segments.

    The observed statistic is target(gold, a) - target(gold, b). Each
    resample independently swaps the two metrics' values per segment with
    probability 1/2 (per system, after aggregation, when the target is
    pairwise accuracy). Two-sided p-value with add-one smoothing:
    (#{|resampled| >= |observed|} + 1) / (n + 1). Deterministic per seed;
    resamples whose statistic is undefined count as extreme.
    """
    if set(scores_a) != set(scores_b) or set(scores_a) != set(gold):
        raise MetaEvalError("score maps cover different segments")
    if n < 100:
        raise MetaEvalError("need at least 100 resamples")
    if not scores_a:
        raise MetaEvalError("empty score maps")
    rng = np.random.default_rng(seed)

    if target == "accuracy":
        return _perm_accuracy(scores_a, scores_b, gold, n, alpha, rng)
    if target == "tau":
        stat = _tau_stat
    elif target == "pearson":
        stat = _pearson_stat
    else:
        raise MetaEvalError(f"unknown test target {target!r}")

    keys = sorted(scores_a)
    a = np.array([scores_a[k] for k in keys], dtype=float)
    b = np.array([scores_b[k] for k in keys], dtype=float)
    g = np.array([gold[k] for k in keys], dtype=float)
    if np.all(g == g[0]):
        raise MetaEvalError("gold scores are constant; target undefined")
    for side, name in ((a, "a"), (b, "b")):
        if np.all(side == side[0]):
            raise MetaEvalError(f"metric {name} is constant; target undefined")

    observed = stat(g, a) - stat(g, b)
    if math.isnan(observed):
        raise MetaEvalError("observed statistic is undefined")
    extreme = 0
    for _ in range(n):
        mask = rng.random(len(keys)) < 0.5
        xa = np.where(mask, b, a)
        xb = np.where(mask, a, b)
        delta = stat(g, xa) - stat(g, xb)
        if math.isnan(delta) or abs(delta) >= abs(observed):
            extreme += 1
    p = (extreme + 1) / (n + 1)
    return SignificanceResult(p_value=p, statistic=observed, n_resamples=n,
                              alpha=alpha)


def _group_by_system(scores: Mapping[tuple, float],
                     ) -> dict[str, dict[str, float]]:
    sums: dict[tuple[str, str], list[float]] = {}
    for (lp, system, _seg), value in scores.items():
        sums.setdefault((lp, system), []).append(value)
    out: dict[str, dict[str, float]] = {}
    for (lp, system), values in sums.items():
        out.setdefault(lp, {})[system] = sum(values) / len(values)
    return out


def _perm_accuracy(scores_a, scores_b, gold, n, alpha,
                   rng) -> SignificanceResult:
    sys_a = _group_by_system(scores_a)
    sys_b = _group_by_system(scores_b)
    sys_h = _group_by_system(gold)
    units = sorted((lp, system) for lp in sys_a for system in sys_a[lp])
    observed = (system_accuracy(sys_h, sys_a)
                - system_accuracy(sys_h, sys_b))
    extreme = 0
    for _ in range(n):
        mask = rng.random(len(units)) < 0.5
        xa = {lp: dict(systems) for lp, systems in sys_a.items()}
        xb = {lp: dict(systems) for lp, systems in sys_b.items()}
        for swap, (lp, system) in zip(mask, units):
            if swap:
                xa[lp][system], xb[lp][system] = (xb[lp][system],
                                                  xa[lp][system])
        delta = system_accuracy(sys_h, xa) - system_accuracy(sys_h, xb)
        if abs(delta) >= abs(observed):
            extreme += 1
    p = (extreme + 1) / (n + 1)
    return SignificanceResult(p_value=p, statistic=observed, n_resamples=n,
                              alpha=alpha)


# ---------------------------------------------------------------------------
# Critical error detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalErrorResult:
    sp: float
    sr: float
    sf1: float
    accuracy: float


def critical_error_eval(gold: Mapping[tuple, list[ErrorAnnotation]],
                        pred: Mapping[tuple, list[ErrorAnnotation]],
                        ) -> CriticalErrorResult:
    """Span overlap plus complete-identification accuracy for corpora with
    exactly one critical gold span per segment.

    Accuracy is the fraction of segments whose gold span positions are fully
    contained in the union of predicted span positions.
    """
    if set(gold) != set(pred):
        raise MetaEvalError("gold and predictions cover different segments")
    if not gold:
        raise MetaEvalError("no segments to evaluate")
    overlap = pred_size = gold_size = 0
    contained = 0
    for key in gold:
        spans = gold[key]
        if len(spans) != 1:
            raise MetaEvalError(
                f"segment {key} has {len(spans)} gold critical spans; "
                f"expected exactly 1")
        gold_pos = _positions(spans)
        pred_pos = _positions(pred[key])
        overlap += len(gold_pos & pred_pos)
        pred_size += len(pred_pos)
        gold_size += len(gold_pos)
        if gold_pos and gold_pos <= pred_pos:
            contained += 1
    sp = _ratio(overlap, pred_size)
    sr = _ratio(overlap, gold_size)
    return CriticalErrorResult(sp=sp, sr=sr, sf1=_f1(sp, sr),
                               accuracy=contained / len(gold))
