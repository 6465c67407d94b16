"""Batch builders for the three self-supervised objectives.

Masked reconstruction corrupts the multi-modal concatenation; the contrastive
builder pairs alternative views of the same source function; the reordering
builder swaps consecutive instruction pairs and labels the result.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import wat
from .corpus import MultiModalSample
from .tokenizer import (
    CLS_ID,
    PAD_ID,
    MASK_ID,
    MAX_LEN,
    SEG_NL,
    SEG_PL,
    SEG_WASM,
    SEP_ID,
    SPECIALS,
    EncodedInput,
    Vocabulary,
    encode_streams,
)

UNMASKABLE_IDS = (PAD_ID, CLS_ID, SEP_ID)
FIRST_CONTENT_ID = len(SPECIALS)

MASK_RATE = 0.15
MASK_ACTION = 0.8
RANDOM_ACTION = 0.1
SWAP_RATE = 0.2


@dataclass
class M3LMBatch:
    corrupted_inputs: list[EncodedInput]
    target_ids: list[list[int]]
    mask_positions: list[list[int]]


@dataclass
class SSIBatch:
    anchors: list[EncodedInput]
    positives: list[EncodedInput]
    pair_kinds: list["PairKind"]
    source_ids: list[str]


@dataclass
class RIIBatch:
    inputs: list[EncodedInput]
    labels: list[int]
    swapped_spans: list[list[tuple[tuple[int, int], tuple[int, int]]]]


class PairKind(enum.Enum):
    NL_VS_WASM = "nl_wasm"
    PL_VS_WASM = "pl_wasm"
    NLPL_VS_NLWASM = "nlpl_nlwasm"
    NLPL_VS_PLWASM = "nlpl_plwasm"
    TRIMODAL_VS_REORDERED = "trimodal_reordered"
    OPT_VARIANT = "opt_variant"


def source_id(sample: MultiModalSample) -> str:
    """Stable identity of the source function behind a sample."""
    blob = sample.project_id + "\0" + " ".join(sample.source_tokens)
    return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# masked multi-modal reconstruction


def corrupt_m3lm(
    enc: EncodedInput,
    rng: np.random.Generator,
    vocab_size: int,
    rate: float = MASK_RATE,
) -> tuple[EncodedInput, list[int], list[int]]:
    """Independently select tokens at `rate`; 80/10/10 mask/random/unchanged."""
    ids = list(enc.token_ids)
    maskable = [
        i
        for i, (tid, attn) in enumerate(zip(ids, enc.attention_mask))
        if attn and tid not in UNMASKABLE_IDS
    ]
    if not maskable:
        raise ValueError("input has no maskable tokens")
    positions: list[int] = []
    targets: list[int] = []
    for i in maskable:
        if rng.random() >= rate:
            continue
        positions.append(i)
        targets.append(ids[i])
        action = rng.random()
        if action < MASK_ACTION:
            ids[i] = MASK_ID
        elif action < MASK_ACTION + RANDOM_ACTION:
            ids[i] = int(rng.integers(FIRST_CONTENT_ID, vocab_size))
        # else: kept unchanged, still predicted
    corrupted = EncodedInput(
        token_ids=ids,
        segment_ids=list(enc.segment_ids),
        position_ids=list(enc.position_ids),
        attention_mask=list(enc.attention_mask),
    )
    return corrupted, targets, positions


def build_m3lm_batch(
    encoded: list[EncodedInput],
    rng: np.random.Generator,
    vocab_size: int,
    rate: float = MASK_RATE,
) -> M3LMBatch:
    batch = M3LMBatch([], [], [])
    for enc in encoded:
        corrupted, targets, positions = corrupt_m3lm(enc, rng, vocab_size, rate)
        batch.corrupted_inputs.append(corrupted)
        batch.target_ids.append(targets)
        batch.mask_positions.append(positions)
    if not any(batch.mask_positions):
        # degenerate draw on a tiny batch: force one masked token
        enc = batch.corrupted_inputs[0]
        i = next(
            i for i, t in enumerate(enc.token_ids) if t not in UNMASKABLE_IDS
        )
        batch.target_ids[0] = [enc.token_ids[i]]
        batch.mask_positions[0] = [i]
        enc.token_ids[i] = MASK_ID
    return batch


# ---------------------------------------------------------------------------
# similar-semantics pairs


def _views(sample: MultiModalSample, vocab: Vocabulary) -> dict[str, tuple[list[int], int]]:
    return {
        "nl": (vocab.encode_nl(sample.doc_tokens), SEG_NL),
        "pl": (vocab.encode_tokens(sample.source_tokens), SEG_PL),
        "wasm": (vocab.encode_tokens(sample.wasm_tokens), SEG_WASM),
    }


def _encode_view(parts, max_len):
    return encode_streams(list(parts), max_len=max_len)


def build_ssi_batch(
    samples: list[MultiModalSample],
    kind_mix: dict[PairKind, float] | None,
    rng: np.random.Generator,
    vocab: Vocabulary,
    max_len: int = MAX_LEN,
    pool: list[MultiModalSample] | None = None,
) -> SSIBatch:
    """Anchor/positive views per row; negatives are implied by source ids."""
    if len(samples) < 2:
        raise ValueError("need at least two rows to form in-batch negatives")
    sources = [source_id(s) for s in samples]
    if len(set(sources)) < 2:
        raise ValueError("batch must contain at least two distinct source functions")

    kinds = list(PairKind)
    weights = np.array(
        [1.0 if kind_mix is None else float(kind_mix.get(k, 0.0)) for k in kinds]
    )
    if weights.sum() <= 0:
        raise ValueError("kind mix has no mass")
    weights = weights / weights.sum()

    siblings: dict[tuple[str, str], list[MultiModalSample]] = {}
    for s in pool if pool is not None else samples:
        siblings.setdefault((source_id(s), s.opt_level), []).append(s)

    batch = SSIBatch([], [], [], [])
    for sample, sid in zip(samples, sources):
        kind = kinds[int(rng.choice(len(kinds), p=weights))]
        if kind is PairKind.OPT_VARIANT:
            others = [
                alt
                for (osid, oopt), alts in siblings.items()
                if osid == sid and oopt != sample.opt_level
                for alt in alts
            ]
            if others:
                variant = others[int(rng.integers(len(others)))]
            else:
                kind = PairKind.PL_VS_WASM  # no sibling compiled differently
        v = _views(sample, vocab)
        if kind is PairKind.NL_VS_WASM:
            anchor, positive = [v["nl"]], [v["wasm"]]
        elif kind is PairKind.PL_VS_WASM:
            anchor, positive = [v["pl"]], [v["wasm"]]
        elif kind is PairKind.NLPL_VS_NLWASM:
            anchor, positive = [v["nl"], v["pl"]], [v["nl"], v["wasm"]]
        elif kind is PairKind.NLPL_VS_PLWASM:
            anchor, positive = [v["nl"], v["pl"]], [v["pl"], v["wasm"]]
        elif kind is PairKind.TRIMODAL_VS_REORDERED:
            anchor = [v["nl"], v["pl"], v["wasm"]]
            positive = [v["nl"], v["wasm"], v["pl"]]
        else:  # OPT_VARIANT
            anchor = [v["wasm"]]
            positive = [_views(variant, vocab)["wasm"]]
        batch.anchors.append(_encode_view(anchor, max_len))
        batch.positives.append(_encode_view(positive, max_len))
        batch.pair_kinds.append(kind)
        batch.source_ids.append(sid)
    return batch


# ---------------------------------------------------------------------------
# reordered-instruction corruption


def swap_rii(
    instructions: list[wat.Instruction],
    rng: np.random.Generator,
    rate: float = SWAP_RATE,
) -> tuple[list[wat.Instruction], int, list[tuple[tuple[int, int], tuple[int, int]]]]:
    """Swap non-overlapping consecutive pairs at `rate`; operands travel along.

    Span pairs are token ranges in the input stream's coordinates.
    """
    n = len(instructions)
    if n < 2:
        raise ValueError("cannot form an instruction pair")
    offsets = [0]
    for ins in instructions:
        offsets.append(offsets[-1] + 1 + len(ins.operands))

    out = list(instructions)
    spans: list[tuple[tuple[int, int], tuple[int, int]]] = []
    i = 0
    while i < n - 1:
        if rng.random() < rate:
            out[i], out[i + 1] = out[i + 1], out[i]
            spans.append(
                ((offsets[i], offsets[i + 1]), (offsets[i + 1], offsets[i + 2]))
            )
            i += 2  # pairs never overlap
        else:
            i += 1
    return out, int(bool(spans)), spans


def apply_span_swaps(tokens: list[str], spans) -> list[str]:
    """Exchange the two sub-ranges of each span pair (ranges are disjoint)."""
    out = list(tokens)
    for (a_start, a_end), (b_start, b_end) in sorted(spans, reverse=True):
        out[a_start:b_end] = out[b_start:b_end] + out[a_start:a_end]
    return out


def build_rii_batch(
    samples: list[MultiModalSample],
    rng: np.random.Generator,
    vocab: Vocabulary,
    max_len: int = MAX_LEN,
    rate: float = SWAP_RATE,
) -> RIIBatch:
    """Alternate untouched and reordered rows so labels stay balanced."""
    batch = RIIBatch([], [], [])
    parity = 0
    for sample in samples:
        instrs = wat.segment_token_stream(sample.wasm_tokens)
        if len(instrs) < 2:
            continue  # cannot form a pair; skip the sample
        label = parity % 2
        parity += 1
        spans: list = []
        if label == 1:
            instrs, got, spans = swap_rii(instrs, rng, rate)
            if not got:
                # the coin never landed: force one swap to keep the label true
                b = int(rng.integers(len(instrs) - 1))
                offsets = [0]
                for ins in instrs:
                    offsets.append(offsets[-1] + 1 + len(ins.operands))
                instrs = list(instrs)
                instrs[b], instrs[b + 1] = instrs[b + 1], instrs[b]
                spans = [((offsets[b], offsets[b + 1]), (offsets[b + 1], offsets[b + 2]))]
        tokens = []
        for ins in instrs:
            tokens.extend(ins.tokens())
        enc = encode_streams([(vocab.encode_tokens(tokens), SEG_WASM)], max_len=max_len)
        batch.inputs.append(enc)
        batch.labels.append(label)
        batch.swapped_spans.append(spans)
    if not batch.inputs:
        raise ValueError("no sample had two or more instructions")
    return batch
