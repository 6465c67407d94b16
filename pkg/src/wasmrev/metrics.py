"""Evaluation metrics: classification scores, type prefix score, BLEU, top-k."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def metrics_from_counts(c: ConfusionCounts) -> dict[str, float]:
    """Accuracy, precision, recall, F1; zero denominators score 0."""
    acc = (c.tp + c.tn) / c.total if c.total else 0.0
    p = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else 0.0
    r = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return {"accuracy": acc, "precision": p, "recall": r, "f1": f1}


@dataclass
class ClassificationReport:
    accuracy: float
    per_class: dict
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float


def classification_metrics(pred_labels, true_labels) -> ClassificationReport:
    """One-vs-rest counts per class; macro is the unweighted class mean."""
    pred, true = list(pred_labels), list(true_labels)
    if len(pred) != len(true):
        raise ValueError("label lists must have equal length")
    if not pred:
        raise ValueError("empty label lists")
    classes = sorted(set(true) | set(pred))
    per_class = {}
    sum_tp = sum_fp = sum_fn = 0
    for cls in classes:
        counts = ConfusionCounts(
            tp=sum(1 for p, t in zip(pred, true) if p == cls and t == cls),
            tn=sum(1 for p, t in zip(pred, true) if p != cls and t != cls),
            fp=sum(1 for p, t in zip(pred, true) if p == cls and t != cls),
            fn=sum(1 for p, t in zip(pred, true) if p != cls and t == cls),
        )
        per_class[cls] = {"counts": counts, **metrics_from_counts(counts)}
        sum_tp += counts.tp
        sum_fp += counts.fp
        sum_fn += counts.fn
    n_cls = len(classes)
    micro_p = sum_tp / (sum_tp + sum_fp) if (sum_tp + sum_fp) else 0.0
    micro_r = sum_tp / (sum_tp + sum_fn) if (sum_tp + sum_fn) else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if (micro_p + micro_r) else 0.0
    return ClassificationReport(
        accuracy=sum(1 for p, t in zip(pred, true) if p == t) / len(true),
        per_class=per_class,
        macro_precision=sum(v["precision"] for v in per_class.values()) / n_cls,
        macro_recall=sum(v["recall"] for v in per_class.values()) / n_cls,
        macro_f1=sum(v["f1"] for v in per_class.values()) / n_cls,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f1,
    )


def type_prefix_score(pred: list[str], truth: list[str]) -> int:
    """Length of the common leading-token run of prediction and ground truth."""
    if not pred or not truth:
        raise ValueError("sequences must be non-empty")
    score = 0
    for a, b in zip(pred, truth):
        if a != b:
            break
        score += 1
    return score


def topk_exact_match(ranked_predictions, truth, k: int) -> bool:
    if k < 1:
        raise ValueError("k must be >= 1")
    return any(list(p) == list(truth) for p in list(ranked_predictions)[:k])


# ---------------------------------------------------------------------------
# BLEU


def ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped(candidate, reference, n):
    cand = ngram_counts(candidate, n)
    ref = ngram_counts(reference, n)
    clipped = sum(min(count, ref[g]) for g, count in cand.items())
    return clipped, sum(cand.values())


def _combine(stats, cand_len, ref_len):
    """Geometric mean of clipped precisions x brevity penalty.

    Zero counts for n > 1 receive add-one smoothing; a zero unigram count
    yields 0 outright.
    """
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        clipped, total = stats[n]
        if n == 1:
            if clipped == 0:
                return 0.0
            p = clipped / total
        elif clipped == 0:
            p = (clipped + 1) / (total + 1)
        else:
            p = clipped / total
        log_sum += 0.25 * math.log(p)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum)


def bleu4(candidate, reference) -> float:
    """Sentence-level BLEU with 4-gram clipping and brevity penalty."""
    if not reference:
        raise ValueError("reference must be non-empty")
    candidate, reference = list(candidate), list(reference)
    stats = {n: _clipped(candidate, reference, n) for n in range(1, 5)}
    return _combine(stats, len(candidate), len(reference))


def corpus_bleu4(pairs) -> float:
    """Corpus-level variant: n-gram counts pool over all pairs first."""
    stats = {n: [0, 0] for n in range(1, 5)}
    cand_len = ref_len = 0
    for candidate, reference in pairs:
        if not reference:
            raise ValueError("reference must be non-empty")
        candidate, reference = list(candidate), list(reference)
        cand_len += len(candidate)
        ref_len += len(reference)
        for n in range(1, 5):
            clipped, total = _clipped(candidate, reference, n)
            stats[n][0] += clipped
            stats[n][1] += total
    return _combine({n: tuple(v) for n, v in stats.items()}, cand_len, ref_len)
