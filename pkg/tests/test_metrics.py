import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wasmrev import metrics as MX
from wasmrev.metrics import ConfusionCounts


# ---------------------------------------------------------------------------
# confusion-count arithmetic


def test_counts_fixture_from_direct_arithmetic():
    m = MX.metrics_from_counts(ConfusionCounts(tp=3, tn=5, fp=1, fn=1))
    assert m["accuracy"] == pytest.approx(0.8)
    assert m["precision"] == pytest.approx(0.75)
    assert m["recall"] == pytest.approx(0.75)
    assert m["f1"] == pytest.approx(0.75)


def test_counts_zero_denominators_score_zero():
    m = MX.metrics_from_counts(ConfusionCounts(tp=0, tn=4, fp=0, fn=0))
    assert m["precision"] == 0.0 and m["recall"] == 0.0 and m["f1"] == 0.0


def test_counts_must_be_non_negative():
    with pytest.raises(ValueError):
        ConfusionCounts(tp=-1)


def test_perfect_predictions():
    rep = MX.classification_metrics([0, 1, 2, 1], [0, 1, 2, 1])
    assert rep.accuracy == 1.0
    assert rep.macro_precision == rep.macro_recall == rep.macro_f1 == 1.0
    assert rep.micro_precision == 1.0


def test_classification_metrics_match_brute_force_counts():
    rng = random.Random(0)
    true = [rng.randrange(4) for _ in range(100)]
    pred = [rng.randrange(4) for _ in range(100)]
    rep = MX.classification_metrics(pred, true)
    # oracle: recount every one-vs-rest cell from scratch
    for cls in range(4):
        tp = sum(p == cls and t == cls for p, t in zip(pred, true))
        fp = sum(p == cls and t != cls for p, t in zip(pred, true))
        fn = sum(p != cls and t == cls for p, t in zip(pred, true))
        tn = 100 - tp - fp - fn
        got = rep.per_class[cls]["counts"]
        assert (got.tp, got.tn, got.fp, got.fn) == (tp, tn, fp, fn)
        expect_p = tp / (tp + fp) if tp + fp else 0.0
        assert rep.per_class[cls]["precision"] == pytest.approx(expect_p)
    assert rep.accuracy == pytest.approx(sum(p == t for p, t in zip(pred, true)) / 100)


def test_micro_average_equals_fraction_correct():
    rng = random.Random(1)
    true = [rng.randrange(5) for _ in range(60)]
    pred = [rng.randrange(5) for _ in range(60)]
    rep = MX.classification_metrics(pred, true)
    assert rep.micro_precision == pytest.approx(rep.accuracy)
    assert rep.micro_recall == pytest.approx(rep.accuracy)
    assert rep.micro_f1 == pytest.approx(rep.accuracy)


def test_f1_is_harmonic_mean_of_own_p_and_r():
    rep = MX.classification_metrics([0, 0, 1, 1, 1], [0, 1, 1, 1, 0])
    for cls_stats in rep.per_class.values():
        p, r, f1 = cls_stats["precision"], cls_stats["recall"], cls_stats["f1"]
        expect = 2 * p * r / (p + r) if p + r else 0.0
        assert f1 == pytest.approx(expect)


def test_classification_metrics_rejects_bad_input():
    with pytest.raises(ValueError):
        MX.classification_metrics([], [])
    with pytest.raises(ValueError):
        MX.classification_metrics([1], [1, 2])


# ---------------------------------------------------------------------------
# type prefix score


def test_tps_examples():
    assert MX.type_prefix_score(["pointer", "primitive", "char"],
                                ["pointer", "primitive", "int8"]) == 2
    assert MX.type_prefix_score(["a", "b", "c"], ["a", "b", "c"]) == 3
    assert MX.type_prefix_score(["x"], ["y"]) == 0


def test_tps_requires_non_empty():
    with pytest.raises(ValueError):
        MX.type_prefix_score([], ["a"])


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.sampled_from("abcd"), min_size=1, max_size=8),
    st.lists(st.sampled_from("abcd"), min_size=1, max_size=8),
)
def test_tps_matches_brute_force_and_properties(a, b):
    brute = 0
    while brute < min(len(a), len(b)) and a[brute] == b[brute]:
        brute += 1
    got = MX.type_prefix_score(a, b)
    assert got == brute
    assert got == MX.type_prefix_score(b, a)
    assert 0 <= got <= min(len(a), len(b))
    assert MX.type_prefix_score(a, a) == len(a)


# ---------------------------------------------------------------------------
# top-k


def test_topk_exact_match():
    ranked = [["a"], ["b"], ["c"], ["d"], ["e"]]
    assert MX.topk_exact_match(ranked, ["a"], 1)
    assert MX.topk_exact_match(ranked, ["a"], 5)
    assert MX.topk_exact_match(ranked, ["e"], 5)
    assert not MX.topk_exact_match(ranked, ["e"], 1)
    assert not MX.topk_exact_match(ranked, ["z"], 5)
    with pytest.raises(ValueError):
        MX.topk_exact_match(ranked, ["a"], 0)


# ---------------------------------------------------------------------------
# BLEU


def test_bleu_identity_and_disjoint():
    toks = ["a", "b", "c", "d", "e"]
    assert MX.bleu4(toks, toks) == pytest.approx(1.0)
    assert MX.bleu4(["x", "y"], ["a", "b", "c"]) == 0.0
    assert MX.bleu4([], ["a"]) == 0.0
    with pytest.raises(ValueError):
        MX.bleu4(["a"], [])


def test_bleu_hand_computed_fixture():
    cand = ["the", "cat", "sat", "on", "the", "mat"]
    ref = ["the", "cat", "is", "on", "the", "mat"]
    # manual n-gram table: p1=5/6, p2=3/5, p3=1/4, p4=0 -> add-one 1/4; BP=1
    expect = (5 / 6 * 3 / 5 * 1 / 4 * 1 / 4) ** 0.25
    assert MX.bleu4(cand, ref) == pytest.approx(expect, abs=1e-6)
    assert expect == pytest.approx(0.4204482076, abs=1e-6)


def test_bleu_brevity_penalty_fixture():
    cand = ["a", "b", "c", "d"]
    ref = ["a", "b", "c", "d", "e", "f"]
    # all precisions 1; BP = exp(1 - 6/4)
    assert MX.bleu4(cand, ref) == pytest.approx(math.exp(-0.5), abs=1e-9)


def test_bleu_in_unit_interval_and_alphabet_invariance():
    rng = random.Random(3)
    for _ in range(50):
        cand = [rng.choice("abc") for _ in range(rng.randrange(1, 10))]
        ref = [rng.choice("abc") for _ in range(rng.randrange(1, 10))]
        score = MX.bleu4(cand, ref)
        assert 0.0 <= score <= 1.0
        relabel = {"a": "x", "b": "y", "c": "z"}
        assert MX.bleu4([relabel[t] for t in cand], [relabel[t] for t in ref]) == pytest.approx(score)


def test_corpus_bleu_aggregates_counts_before_combining():
    pairs = [
        (["a", "b", "c", "d"], ["a", "b", "c", "d"]),
        (["x", "y"], ["a", "b", "c"]),
    ]
    # oracle: pooled clipped counts per order
    agg = {}
    for n in range(1, 5):
        clipped = total = 0
        for cand, ref in pairs:
            c = MX.ngram_counts(cand, n)
            r = MX.ngram_counts(ref, n)
            clipped += sum(min(v, r[g]) for g, v in c.items())
            total += sum(c.values())
        agg[n] = (clipped, total)
    logs = 0.0
    for n in range(1, 5):
        clipped, total = agg[n]
        p = (clipped + 1) / (total + 1) if (clipped == 0 and n > 1) else clipped / total
        logs += 0.25 * math.log(p)
    c_len, r_len = 6, 7
    expect = math.exp(1 - r_len / c_len) * math.exp(logs)
    assert MX.corpus_bleu4(pairs) == pytest.approx(expect, abs=1e-9)


def test_corpus_bleu_perfect():
    pairs = [(["a", "b", "c", "d"], ["a", "b", "c", "d"])] * 3
    assert MX.corpus_bleu4(pairs) == pytest.approx(1.0)
