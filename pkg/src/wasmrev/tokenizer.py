"""Vocabularies and multi-modal input encoding.

One shared id namespace covers natural-language subwords, source tokens and
wasm tokens; specials occupy ids 0-6. Encoded inputs follow the layout
``[CLS] doc [SEP] source [SEP] wasm [SEP]`` with segment ids 0/1/2.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[STR]", "[ADDR]")
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID, STR_ID, ADDR_ID = range(7)

SEG_NL, SEG_PL, SEG_WASM = 0, 1, 2

MAX_LEN = 512

DEFAULT_NL_CAP = 8000
DEFAULT_PL_CAP = 8000
DEFAULT_WASM_CAP = 4000


class Vocabulary:
    """Bijective token<->id map with fixed special ids."""

    def __init__(self, tokens: list[str]):
        if list(tokens[: len(SPECIALS)]) != list(SPECIALS):
            raise ValueError("vocabulary must start with the special tokens")
        self.token_of = list(tokens)
        self.id_of = {tok: i for i, tok in enumerate(tokens)}
        if len(self.id_of) != len(self.token_of):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.token_of)

    def lookup(self, token: str) -> int:
        return self.id_of.get(token, UNK_ID)

    def encode_word(self, word: str) -> list[int]:
        """Greedy longest-match-first subword split; [UNK] when uncoverable."""
        pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            found = None
            while start < end:
                piece = word[start:end]
                if start > 0:
                    piece = "##" + piece
                if piece in self.id_of:
                    found = piece
                    break
                end -= 1
            if found is None:
                return [UNK_ID]
            pieces.append(self.id_of[found])
            start = end
        return pieces or [UNK_ID]

    def encode_nl(self, words: list[str]) -> list[int]:
        out: list[int] = []
        for w in words:
            out.extend(self.encode_word(w))
        return out

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    @classmethod
    def build(
        cls,
        nl_docs: list[list[str]],
        pl_streams: list[list[str]],
        wasm_streams: list[list[str]],
        nl_cap: int = DEFAULT_NL_CAP,
        pl_cap: int = DEFAULT_PL_CAP,
        wasm_cap: int = DEFAULT_WASM_CAP,
        min_freq: int = 1,
    ) -> "Vocabulary":
        tokens = list(SPECIALS)
        seen = set(tokens)
        for fragment in (
            train_nl_subwords(nl_docs, nl_cap) if nl_docs else [],
            build_token_vocab(pl_streams, pl_cap, min_freq),
            build_token_vocab(wasm_streams, wasm_cap, min_freq),
        ):
            for tok in fragment:
                if tok not in seen:
                    seen.add(tok)
                    tokens.append(tok)
        return cls(tokens)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.token_of:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def train_nl_subwords(docs: list[list[str]], vocab_cap: int) -> list[str]:
    """Frequency-driven subword inventory (continuations prefixed with ##).

    The cap counts the full vocabulary, so the fragment holds at most
    ``vocab_cap - len(SPECIALS)`` pieces. Single characters come first so any
    word over the seen alphabet decomposes; longer pieces follow by frequency
    with lexicographic tie-break.
    """
    if vocab_cap <= len(SPECIALS):
        raise ValueError("vocab_cap must exceed the number of specials")
    word_freq = Counter()
    for doc in docs:
        word_freq.update(doc)
    if not word_freq:
        raise ValueError("empty corpus")

    chars = Counter()
    longer = Counter()
    for word, freq in word_freq.items():
        for i in range(len(word)):
            piece = word[i] if i == 0 else "##" + word[i]
            chars[piece] += freq
        for i in range(len(word)):
            for j in range(i + 2, len(word) + 1):
                piece = word[i:j] if i == 0 else "##" + word[i:j]
                longer[piece] += freq

    budget = vocab_cap - len(SPECIALS)
    ordered = sorted(chars.items(), key=lambda kv: (-kv[1], kv[0]))
    fragment = [tok for tok, _ in ordered[:budget]]
    remaining = budget - len(fragment)
    if remaining > 0:
        ordered_longer = sorted(longer.items(), key=lambda kv: (-kv[1], kv[0]))
        fragment.extend(tok for tok, _ in ordered_longer[:remaining])
    return fragment


def build_token_vocab(streams: list[list[str]], vocab_cap: int, min_freq: int = 1) -> list[str]:
    """Token-level inventory: frequency >= min_freq, most frequent first."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    freq = Counter()
    for stream in streams:
        freq.update(stream)
    for special in SPECIALS:
        freq.pop(special, None)
    ordered = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    budget = max(0, vocab_cap - len(SPECIALS))
    return [tok for tok, f in ordered if f >= min_freq][:budget]


# ---------------------------------------------------------------------------
# encoding


@dataclass
class EncodedInput:
    token_ids: list[int]
    segment_ids: list[int]
    position_ids: list[int]
    attention_mask: list[bool]

    def __len__(self) -> int:
        return len(self.token_ids)

    def validate(self) -> None:
        n = len(self.token_ids)
        if not (len(self.segment_ids) == len(self.position_ids) == len(self.attention_mask) == n):
            raise ValueError("field lengths differ")
        if n > MAX_LEN:
            raise ValueError("input longer than the position table")
        if not self.token_ids or self.token_ids[0] != CLS_ID:
            raise ValueError("input must start with [CLS]")
        if self.position_ids != list(range(n)):
            raise ValueError("position ids must count up from 0")


def proportional_allocation(lengths: list[int], budget: int) -> list[int]:
    """Largest-remainder split of `budget` across streams, at least 1 each."""
    total = sum(lengths)
    if total <= budget:
        return list(lengths)
    if budget < len(lengths):
        raise ValueError("budget smaller than one token per stream")
    ideal = [length * budget / total for length in lengths]
    quota = [max(1, int(x)) for x in ideal]
    while sum(quota) > budget:
        shrinkable = [i for i in range(len(quota)) if quota[i] > 1]
        over = max(shrinkable, key=lambda i: (quota[i] - ideal[i], quota[i]))
        quota[over] -= 1
    order = sorted(range(len(quota)), key=lambda i: (ideal[i] - quota[i]), reverse=True)
    while sum(quota) < budget:
        for i in order:
            if sum(quota) == budget:
                break
            if quota[i] < lengths[i]:
                quota[i] += 1
    return quota


def encode_streams(
    parts: list[tuple[list[int], int]], max_len: int = MAX_LEN
) -> EncodedInput:
    """Assemble [CLS] + (ids [SEP]) per present stream with given segment ids."""
    present = [(ids, seg) for ids, seg in parts if ids]
    if not present:
        raise ValueError("at least one modality must be non-empty")
    budget = max_len - 1 - len(present)
    quotas = proportional_allocation([len(ids) for ids, _ in present], budget)
    token_ids = [CLS_ID]
    segment_ids = [SEG_NL]
    for (ids, seg), quota in zip(present, quotas):
        token_ids.extend(ids[:quota])
        token_ids.append(SEP_ID)
        segment_ids.extend([seg] * quota)
        segment_ids.append(seg)
    out = EncodedInput(
        token_ids=token_ids,
        segment_ids=segment_ids,
        position_ids=list(range(len(token_ids))),
        attention_mask=[True] * len(token_ids),
    )
    out.validate()
    return out


def encode_multimodal(
    c: list[str],
    s: list[str],
    w: list[str],
    vocab: Vocabulary,
    max_len: int = MAX_LEN,
) -> EncodedInput:
    """Concatenated (doc, source, wasm) encoding; absent modalities are skipped."""
    parts = [
        (vocab.encode_nl(c), SEG_NL),
        (vocab.encode_tokens(s), SEG_PL),
        (vocab.encode_tokens(w), SEG_WASM),
    ]
    return encode_streams(parts, max_len=max_len)


def decode(ids: list[int], vocab: Vocabulary) -> list[str]:
    """Inverse mapping; ## continuation pieces merge into their word."""
    out: list[str] = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(vocab):
            raise ValueError(f"id {i} out of range for vocabulary of {len(vocab)}")
        tok = vocab.token_of[i]
        if tok.startswith("##") and out:
            out[-1] = out[-1] + tok[2:]
        else:
            out.append(tok)
    return out


def pad_batch(inputs: list[EncodedInput], pad_to: int | None = None) -> dict:
    """Right-pad a batch of encoded inputs into int32/float arrays."""
    import numpy as np

    width = pad_to if pad_to is not None else max(len(e) for e in inputs)
    n = len(inputs)
    token_ids = np.zeros((n, width), dtype=np.int32)  # 0 == [PAD]
    segment_ids = np.zeros((n, width), dtype=np.int32)
    mask = np.zeros((n, width), dtype=np.float64)
    for r, enc in enumerate(inputs):
        L = len(enc)
        token_ids[r, :L] = enc.token_ids
        segment_ids[r, :L] = enc.segment_ids
        mask[r, :L] = 1.0
    return {"token_ids": token_ids, "segment_ids": segment_ids, "attention_mask": mask}


def split_on_separators(tokens: list[str]) -> list[list[str]]:
    """Recover modality streams from a decoded [CLS] a [SEP] b [SEP] sequence."""
    if tokens and tokens[0] == "[CLS]":
        tokens = tokens[1:]
    streams: list[list[str]] = []
    current: list[str] = []
    for tok in tokens:
        if tok == "[SEP]":
            streams.append(current)
            current = []
        elif tok != "[PAD]":
            current.append(tok)
    if current:
        streams.append(current)
    return streams
