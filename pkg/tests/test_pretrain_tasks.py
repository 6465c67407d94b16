import numpy as np
import pytest

from wasmrev import corpus, pretrain, wat
from wasmrev import tokenizer as tk
from wasmrev.pretrain import PairKind
from wasmrev.tokenizer import Vocabulary, encode_multimodal
from wasmrev.wat import Instruction


@pytest.fixture(scope="module")
def setup():
    samples = corpus.gen_synthetic_corpus(24, seed=3)
    vocab = Vocabulary.build(
        [s.doc_tokens for s in samples],
        [s.source_tokens for s in samples],
        [s.wasm_tokens for s in samples],
        nl_cap=400,
        pl_cap=300,
        wasm_cap=200,
    )
    encoded = [
        encode_multimodal(s.doc_tokens, s.source_tokens, s.wasm_tokens, vocab)
        for s in samples
    ]
    return samples, vocab, encoded


# ---------------------------------------------------------------------------
# masked reconstruction


def test_corrupt_preserves_everything_outside_positions(setup):
    _, vocab, encoded = setup
    rng = np.random.default_rng(0)
    enc = encoded[0]
    corrupted, targets, positions = pretrain.corrupt_m3lm(enc, rng, len(vocab))
    assert len(targets) == len(positions)
    restored = list(corrupted.token_ids)
    for pos, tgt in zip(positions, targets):
        restored[pos] = tgt
    assert restored == enc.token_ids
    for pos in positions:
        assert enc.token_ids[pos] not in pretrain.UNMASKABLE_IDS


def test_corrupt_deterministic_under_seed(setup):
    _, vocab, encoded = setup
    a = pretrain.corrupt_m3lm(encoded[1], np.random.default_rng(7), len(vocab))
    b = pretrain.corrupt_m3lm(encoded[1], np.random.default_rng(7), len(vocab))
    assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]


def test_corrupt_statistics_over_10k_tokens(setup):
    _, vocab, encoded = setup
    rng = np.random.default_rng(123)
    total_maskable = 0
    selected = 0
    masked = randomized = unchanged = 0
    while total_maskable < 10000:
        for enc in encoded:
            corrupted, targets, positions = pretrain.corrupt_m3lm(enc, rng, len(vocab))
            maskable = sum(1 for t in enc.token_ids if t not in pretrain.UNMASKABLE_IDS)
            total_maskable += maskable
            selected += len(positions)
            for pos, tgt in zip(positions, targets):
                new = corrupted.token_ids[pos]
                if new == tk.MASK_ID:
                    masked += 1
                elif new == tgt:
                    unchanged += 1
                else:
                    randomized += 1
    rate = selected / total_maskable
    assert 0.14 <= rate <= 0.16
    assert abs(masked / selected - 0.80) <= 0.03
    assert abs(randomized / selected - 0.10) <= 0.03
    assert abs(unchanged / selected - 0.10) <= 0.03


def test_corrupt_requires_maskable_tokens():
    enc = tk.EncodedInput(
        token_ids=[tk.CLS_ID, tk.SEP_ID],
        segment_ids=[0, 0],
        position_ids=[0, 1],
        attention_mask=[True, True],
    )
    with pytest.raises(ValueError):
        pretrain.corrupt_m3lm(enc, np.random.default_rng(0), 50)


def test_random_replacement_avoids_specials(setup):
    _, vocab, encoded = setup
    rng = np.random.default_rng(99)
    for _ in range(50):
        corrupted, targets, positions = pretrain.corrupt_m3lm(encoded[2], rng, len(vocab))
        for pos, tgt in zip(positions, targets):
            new = corrupted.token_ids[pos]
            if new not in (tk.MASK_ID, tgt):
                assert new >= pretrain.FIRST_CONTENT_ID


def test_m3lm_batch_never_comes_back_empty(setup):
    _, vocab, encoded = setup
    # tiny input + hostile rate would rarely select; builder must force one
    small = encode_multimodal([], [], ["i32.add"], vocab)
    batch = pretrain.build_m3lm_batch([small], np.random.default_rng(5), len(vocab), rate=1e-9)
    assert sum(len(p) for p in batch.mask_positions) >= 1


# ---------------------------------------------------------------------------
# similar-semantics pairs


def test_ssi_batch_views_by_kind(setup):
    samples, vocab, _ = setup
    for kind, anchor_segs, pos_segs in [
        (PairKind.NL_VS_WASM, {0}, {2}),
        (PairKind.PL_VS_WASM, {1}, {2}),
        (PairKind.NLPL_VS_NLWASM, {0, 1}, {0, 2}),
        (PairKind.NLPL_VS_PLWASM, {0, 1}, {1, 2}),
    ]:
        batch = pretrain.build_ssi_batch(
            samples[:4], {kind: 1.0}, np.random.default_rng(0), vocab
        )
        assert all(k is kind for k in batch.pair_kinds)
        for enc in batch.anchors:
            assert set(enc.segment_ids[1:]) == anchor_segs
        for enc in batch.positives:
            assert set(enc.segment_ids[1:]) == pos_segs


def test_ssi_trimodal_reordered_segment_order(setup):
    samples, vocab, _ = setup
    batch = pretrain.build_ssi_batch(
        samples[:3], {PairKind.TRIMODAL_VS_REORDERED: 1.0}, np.random.default_rng(0), vocab
    )
    for enc in batch.positives:
        segs = [s for s in enc.segment_ids[1:]]
        order = []
        for s in segs:
            if not order or order[-1] != s:
                order.append(s)
        assert order == [0, 2, 1]


def test_ssi_opt_variant_uses_sibling(setup):
    samples, vocab, _ = setup
    # synthetic corpus emits adjacent opt-level variants of the same function
    batch = pretrain.build_ssi_batch(
        samples[:6], {PairKind.OPT_VARIANT: 1.0}, np.random.default_rng(1), vocab,
        pool=samples,
    )
    assert any(k is PairKind.OPT_VARIANT for k in batch.pair_kinds)
    for enc in batch.anchors + batch.positives:
        assert set(enc.segment_ids[1:]) == {2}


def test_ssi_same_source_batch_rejected(setup):
    samples, vocab, _ = setup
    twins = [samples[0], samples[1]]
    assert pretrain.source_id(twins[0]) == pretrain.source_id(twins[1])  # opt variants
    with pytest.raises(ValueError):
        pretrain.build_ssi_batch(twins, None, np.random.default_rng(0), vocab)
    with pytest.raises(ValueError):
        pretrain.build_ssi_batch(samples[:1], None, np.random.default_rng(0), vocab)


def test_ssi_anchor_positive_share_source(setup):
    samples, vocab, _ = setup
    batch = pretrain.build_ssi_batch(samples[:8], None, np.random.default_rng(2), vocab)
    assert len(batch.anchors) == len(batch.positives) == 8
    assert batch.source_ids == [pretrain.source_id(s) for s in samples[:8]]
    assert len(set(batch.source_ids)) >= 2


def test_ssi_deterministic(setup):
    samples, vocab, _ = setup
    a = pretrain.build_ssi_batch(samples[:8], None, np.random.default_rng(3), vocab)
    b = pretrain.build_ssi_batch(samples[:8], None, np.random.default_rng(3), vocab)
    assert a.pair_kinds == b.pair_kinds
    assert a.anchors == b.anchors and a.positives == b.positives


# ---------------------------------------------------------------------------
# instruction reordering


def _instrs(*lines):
    return wat.segment_token_stream([t for line in lines for t in line.split()])


def test_swap_rii_paper_example():
    instrs = _instrs("local.tee 1", "i32.load8_u")
    swapped, label, spans = pretrain.swap_rii(instrs, np.random.default_rng(0), rate=1.0)
    assert label == 1
    assert [i.text() for i in swapped] == ["i32.load8_u", "local.tee 1"]
    assert spans == [((0, 2), (2, 3))]


def test_swap_rii_rate_zero_is_identity():
    instrs = _instrs("local.get 0", "local.get 1", "i32.add")
    swapped, label, spans = pretrain.swap_rii(instrs, np.random.default_rng(0), rate=0.0)
    assert label == 0 and spans == []
    assert swapped == instrs


def test_swap_rii_involution_via_spans():
    instrs = _instrs("local.get 0", "local.get 1", "i32.add", "i32.const 7", "i32.mul")
    tokens = [t for i in instrs for t in i.tokens()]
    swapped, label, spans = pretrain.swap_rii(instrs, np.random.default_rng(5), rate=0.9)
    assert label == 1
    swapped_tokens = [t for i in swapped for t in i.tokens()]
    assert pretrain.apply_span_swaps(tokens, spans) == swapped_tokens
    # swapping each span again (in the swapped stream's coordinates) restores
    undo = [((a[0], a[0] + (b[1] - b[0])), (a[0] + (b[1] - b[0]), b[1])) for a, b in spans]
    assert pretrain.apply_span_swaps(swapped_tokens, undo) == tokens


def test_swap_rii_spans_disjoint():
    instrs = _instrs(*(f"i32.const {k}" for k in range(12)))
    _, _, spans = pretrain.swap_rii(instrs, np.random.default_rng(9), rate=0.6)
    used = set()
    for (a0, a1), (b0, b1) in spans:
        assert a1 == b0
        span_range = set(range(a0, b1))
        assert not (used & span_range)
        used |= span_range


def test_swap_rii_single_instruction_errors():
    with pytest.raises(ValueError):
        pretrain.swap_rii(_instrs("i32.add"), np.random.default_rng(0))


def test_rii_batch_balanced_and_consistent(setup):
    samples, vocab, _ = setup
    batch = pretrain.build_rii_batch(samples[:20], np.random.default_rng(4), vocab)
    n1 = sum(batch.labels)
    n0 = len(batch.labels) - n1
    assert abs(n1 - n0) <= 1
    for enc, label, spans in zip(batch.inputs, batch.labels, batch.swapped_spans):
        assert set(enc.segment_ids[1:]) == {2}
        assert (label == 1) == bool(spans)


def test_rii_batch_label0_rows_match_original_stream(setup):
    samples, vocab, _ = setup
    batch = pretrain.build_rii_batch(samples[:6], np.random.default_rng(8), vocab)
    for row, (enc, label) in enumerate(zip(batch.inputs, batch.labels)):
        if label == 0:
            expect = vocab.encode_tokens(samples[row].wasm_tokens)
            assert enc.token_ids[1:-1] == expect[: len(enc.token_ids) - 2]


def test_rii_batch_deterministic(setup):
    samples, vocab, _ = setup
    a = pretrain.build_rii_batch(samples[:10], np.random.default_rng(11), vocab)
    b = pretrain.build_rii_batch(samples[:10], np.random.default_rng(11), vocab)
    assert a.inputs == b.inputs and a.labels == b.labels and a.swapped_spans == b.swapped_spans
