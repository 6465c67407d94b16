"""Bidirectional Transformer encoder, task heads, and pre-training losses.

Everything is built on the wasmrev.autodiff tape, so `gradients` yields exact
analytic derivatives for every named parameter tensor. Post-norm layers with
GELU feed-forward blocks and learned position/segment embeddings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from . import container
from .autodiff import Tensor
from .tokenizer import EncodedInput, pad_batch

_MASK_OFF = -1e9  # additive bias that removes padded keys from attention
_LN_EPS = 1e-12


@dataclass
class EncoderConfig:
    vocab_size: int
    layers: int = 8
    hidden: int = 128
    heads: int = 8
    max_positions: int = 512
    segments: int = 3
    dropout: float = 0.1
    ffn_multiplier: int = 4

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError("hidden must be divisible by heads")
        if self.vocab_size < 8:
            raise ValueError("vocabulary too small")

    def to_meta(self) -> dict:
        return {f"config.{k}": v for k, v in asdict(self).items()}

    @classmethod
    def from_meta(cls, meta: dict) -> "EncoderConfig":
        kwargs = {}
        for key, value in meta.items():
            if key.startswith("config."):
                name = key[len("config.") :]
                field_type = cls.__dataclass_fields__[name].type
                kwargs[name] = float(value) if field_type == "float" else int(value)
        return cls(**kwargs)


class Parameters:
    """Named trainable tensors; enumerable for checkpoints and grad checks."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter {name}")
        self._tensors[name] = Tensor(np.asarray(array, dtype=self.dtype))

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.value for k, t in self._tensors.items()}

    def set_(self, name: str, array: np.ndarray) -> None:
        self._tensors[name].value = np.asarray(array, dtype=self.dtype)

    def astype(self, dtype) -> "Parameters":
        out = Parameters(dtype)
        for name, t in self._tensors.items():
            out.add(name, t.value)
        return out

    def copy(self) -> "Parameters":
        return self.astype(self.dtype)

    def n_values(self) -> int:
        return sum(t.value.size for t in self._tensors.values())


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_encoder_params(
    config: EncoderConfig, seed: int = 0, dtype=np.float32
) -> Parameters:
    rng = np.random.default_rng(seed)
    p = Parameters(dtype)
    H, F = config.hidden, config.hidden * config.ffn_multiplier
    p.add("emb.token", _xavier(rng, config.vocab_size, H))
    p.add("emb.position", _xavier(rng, config.max_positions, H))
    p.add("emb.segment", _xavier(rng, config.segments, H))
    p.add("emb.ln.g", np.ones(H))
    p.add("emb.ln.b", np.zeros(H))
    for i in range(config.layers):
        base = f"layer{i}"
        for mat in ("wq", "wk", "wv", "wo"):
            p.add(f"{base}.attn.{mat}", _xavier(rng, H, H))
        for vec in ("bq", "bk", "bv", "bo"):
            p.add(f"{base}.attn.{vec}", np.zeros(H))
        p.add(f"{base}.ln1.g", np.ones(H))
        p.add(f"{base}.ln1.b", np.zeros(H))
        p.add(f"{base}.ffn.w1", _xavier(rng, H, F))
        p.add(f"{base}.ffn.b1", np.zeros(F))
        p.add(f"{base}.ffn.w2", _xavier(rng, F, H))
        p.add(f"{base}.ffn.b2", np.zeros(H))
        p.add(f"{base}.ln2.g", np.ones(H))
        p.add(f"{base}.ln2.b", np.zeros(H))
    p.add("mlm.w", _xavier(rng, H, config.vocab_size))
    p.add("mlm.b", np.zeros(config.vocab_size))
    p.add("rii.w", _xavier(rng, H, 2))
    p.add("rii.b", np.zeros(2))
    return p


def init_classifier_head(
    params: Parameters, hidden: int, n_classes: int, seed: int = 0, prefix: str = "cls"
) -> None:
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    params.add(f"{prefix}.w", _xavier(rng, hidden, n_classes))
    params.add(f"{prefix}.b", np.zeros(n_classes))


# ---------------------------------------------------------------------------
# forward pieces


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return x @ w + b


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / ad.sqrt(var + _LN_EPS) * gain + bias


def _dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    if not p or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.value.dtype) / (1.0 - p)
    return x * Tensor(keep)


def embed(enc: EncodedInput, params: Parameters) -> Tensor:
    """Token + position + segment embedding rows for one encoded input."""
    ids = np.asarray(enc.token_ids)
    segs = np.asarray(enc.segment_ids)
    pos = np.asarray(enc.position_ids)
    return _embed_ids(ids, segs, params, positions=pos)


def embed_batch(batch: dict, params: Parameters) -> Tensor:
    return _embed_ids(batch["token_ids"], batch["segment_ids"], params)


def _embed_ids(ids, segs, params, positions=None) -> Tensor:
    ids = np.asarray(ids)
    if ids.max(initial=0) >= params["emb.token"].shape[0]:
        raise ValueError("token id out of embedding range")
    if positions is None:
        positions = np.arange(ids.shape[-1])
    tok = ad.take_rows(params["emb.token"], ids)
    pos = ad.take_rows(params["emb.position"], np.asarray(positions))
    seg = ad.take_rows(params["emb.segment"], np.asarray(segs))
    return tok + pos + seg


def encode(
    embedded: Tensor,
    attention_mask,
    params: Parameters,
    config: EncoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Transformer stack over [L, hidden] or [B, L, hidden] inputs."""
    single = embedded.ndim == 2
    x = embedded.reshape((1,) + embedded.shape) if single else embedded
    mask = np.asarray(attention_mask, dtype=x.value.dtype)
    if mask.ndim == 1:
        mask = mask[None, :]
    bias = Tensor((1.0 - mask)[:, None, None, :] * _MASK_OFF)

    drop_rng = rng if train else None
    x = layer_norm(x, params["emb.ln.g"], params["emb.ln.b"])
    x = _dropout(x, config.dropout, drop_rng)
    B, L, H = x.shape
    heads, dh = config.heads, H // config.heads
    scale = 1.0 / np.sqrt(dh)

    for i in range(config.layers):
        base = f"layer{i}"

        def split_heads(t):
            return t.reshape((B, L, heads, dh)).swapaxes(1, 2)

        q = split_heads(linear(x, params[f"{base}.attn.wq"], params[f"{base}.attn.bq"]))
        k = split_heads(linear(x, params[f"{base}.attn.wk"], params[f"{base}.attn.bk"]))
        v = split_heads(linear(x, params[f"{base}.attn.wv"], params[f"{base}.attn.bv"]))
        scores = q @ k.swapaxes(-1, -2) * scale + bias
        probs = _dropout(ad.softmax(scores, axis=-1), config.dropout, drop_rng)
        ctx = (probs @ v).swapaxes(1, 2).reshape((B, L, H))
        att = linear(ctx, params[f"{base}.attn.wo"], params[f"{base}.attn.bo"])
        att = _dropout(att, config.dropout, drop_rng)
        x = layer_norm(x + att, params[f"{base}.ln1.g"], params[f"{base}.ln1.b"])

        inner = ad.gelu(linear(x, params[f"{base}.ffn.w1"], params[f"{base}.ffn.b1"]))
        ffn = linear(inner, params[f"{base}.ffn.w2"], params[f"{base}.ffn.b2"])
        ffn = _dropout(ffn, config.dropout, drop_rng)
        x = layer_norm(x + ffn, params[f"{base}.ln2.g"], params[f"{base}.ln2.b"])

    return x.reshape((L, H)) if single else x


def cls_pool(hidden: Tensor) -> Tensor:
    """Row 0 of the final hidden states: the aggregated sequence vector."""
    if hidden.ndim == 2:
        return hidden[0]
    return hidden[:, 0, :]


def encode_inputs(
    inputs: list[EncodedInput],
    params: Parameters,
    config: EncoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, dict]:
    """Pad, embed and encode a list of inputs; returns hidden states and batch."""
    batch = pad_batch(inputs)
    hidden = encode(
        embed_batch(batch, params), batch["attention_mask"], params, config, train, rng
    )
    return hidden, batch


# ---------------------------------------------------------------------------
# prediction heads


def _gather_rows(matrix: Tensor, row_ids: np.ndarray) -> Tensor:
    """matrix[i, row_ids[i]] for each row as a flat-index gather."""
    n, width = matrix.shape
    flat = matrix.reshape((n * width, 1))
    picked = ad.take_rows(flat, np.arange(n) * width + np.asarray(row_ids))
    return picked.reshape((n,))


def mlm_head(hidden: Tensor, positions, params: Parameters) -> Tensor:
    """Per-position probability rows over the vocabulary.

    `hidden` is [L, hidden] with int positions, or [B, L, hidden] with
    (batch, position) index pairs.
    """
    if hidden.ndim == 2:
        rows = ad.take_rows(hidden, np.asarray(positions))
    else:
        B, L, H = hidden.shape
        pairs = np.asarray(positions)
        flat = hidden.reshape((B * L, H))
        rows = ad.take_rows(flat, pairs[:, 0] * L + pairs[:, 1])
    return ad.softmax(linear(rows, params["mlm.w"], params["mlm.b"]), axis=-1)


def classify_head(cls_vec: Tensor, params: Parameters, n_classes: int, prefix: str = "cls") -> Tensor:
    w = params[f"{prefix}.w"]
    if w.shape[1] != n_classes:
        raise ValueError(f"head {prefix} has {w.shape[1]} classes, wanted {n_classes}")
    single = cls_vec.ndim == 1
    x = cls_vec.reshape((1,) + cls_vec.shape) if single else cls_vec
    probs = ad.softmax(linear(x, w, params[f"{prefix}.b"]), axis=-1)
    return probs[0] if single else probs


def classify_loss(
    cls_vecs: Tensor, labels, params: Parameters, prefix: str = "cls"
) -> Tensor:
    logits = linear(cls_vecs, params[f"{prefix}.w"], params[f"{prefix}.b"])
    logp = ad.log_softmax(logits, axis=-1)
    picked = _gather_rows(logp, np.asarray(labels))
    return -picked.sum()


def rii_head(cls_vec: Tensor, params: Parameters) -> Tensor:
    """Probability that the instruction order was tampered with."""
    single = cls_vec.ndim == 1
    x = cls_vec.reshape((1,) + cls_vec.shape) if single else cls_vec
    probs = ad.softmax(linear(x, params["rii.w"], params["rii.b"]), axis=-1)
    p = probs[:, 1]
    return p[0] if single else p


def rii_head_and_loss(cls_vec: Tensor, labels, params: Parameters) -> tuple[Tensor, Tensor]:
    """Binary cross-entropy on the reordering probability, computed stably."""
    single = cls_vec.ndim == 1
    x = cls_vec.reshape((1,) + cls_vec.shape) if single else cls_vec
    labels_arr = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    logits = linear(x, params["rii.w"], params["rii.b"])
    logp = ad.log_softmax(logits, axis=-1)
    loss = -_gather_rows(logp, labels_arr).sum()
    p = ad.exp(logp[:, 1])
    return (p[0] if single else p), loss


# ---------------------------------------------------------------------------
# losses


def m3lm_loss(distributions: Tensor, target_ids) -> Tensor:
    """Negative sum of log-probabilities of the original tokens."""
    targets = np.asarray(target_ids)
    if distributions.shape[0] != targets.shape[0]:
        raise ValueError("one distribution per target required")
    tiny = float(np.finfo(distributions.value.dtype).tiny)
    picked = _gather_rows(distributions, targets)
    return -(ad.log(picked + tiny)).sum()


def m3lm_loss_mean(distributions: Tensor, target_ids) -> Tensor:
    """Mean-per-token variant, for reporting."""
    return m3lm_loss(distributions, target_ids) * (1.0 / max(1, len(target_ids)))


def ssi_loss(
    anchors: Tensor,
    positives: Tensor,
    negatives: Tensor,
    neg_sets: list[list[int]] | None = None,
) -> Tensor:
    """Contrastive dot-product loss: -sum ln(e^{a.p} / (e^{a.p} + sum e^{a.n}))."""
    M = anchors.shape[0]
    P = negatives.shape[0]
    if P == 0:
        raise ValueError("no negatives available")
    if neg_sets is None:
        neg_sets = [list(range(P))] * M
    allow = np.zeros((M, P))
    for i, idxs in enumerate(neg_sets):
        if not idxs:
            raise ValueError(f"anchor {i} has an empty negative set")
        allow[i, idxs] = 1.0

    s_pos = (anchors * positives).sum(axis=1)
    s_neg = anchors @ negatives.swapaxes(0, 1)
    masked = s_neg + Tensor((1.0 - allow) * _MASK_OFF)
    scores = ad.concat([s_pos.reshape((M, 1)), masked], axis=1)
    return (ad.logsumexp(scores, axis=1) - s_pos).sum()


def ssi_loss_inbatch(v1: Tensor, v2: Tensor, source_ids: list) -> Tensor:
    """Symmetric in-batch form: every row of both views anchors once."""
    n = v1.shape[0]
    if n != v2.shape[0] or n != len(source_ids):
        raise ValueError("paired views must align")
    if n < 2:
        raise ValueError("need at least two rows for in-batch negatives")
    anchors = ad.concat([v1, v2], axis=0)
    positives = ad.concat([v2, v1], axis=0)
    sources = list(source_ids) + list(source_ids)
    neg_sets = [
        [j for j in range(2 * n) if sources[j] != sources[i]] for i in range(2 * n)
    ]
    return ssi_loss(anchors, positives, anchors, neg_sets)


def binary_cross_entropy(p: float, label: int) -> float:
    """Scalar reference form of the reorder-detection loss."""
    tiny = np.finfo(np.float64).tiny
    p = float(p)
    return -(label * np.log(max(p, tiny)) + (1 - label) * np.log(max(1.0 - p, tiny)))


_PENALTY_EXEMPT = re.compile(r"^emb\.|\.ln\d\.")


def penalty_eligible(name: str) -> bool:
    return _PENALTY_EXEMPT.search(name) is None


def l2_penalty(params: Parameters) -> Tensor:
    total = None
    for name, t in params.items():
        if not penalty_eligible(name):
            continue
        term = (t * t).sum()
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no penalty-eligible parameters")
    return total


def total_pretrain_loss(
    l_m3lm: Tensor, l_ssi: Tensor, l_rii: Tensor, params: Parameters, lam: float = 0.0
) -> Tensor:
    loss = l_m3lm + l_ssi + l_rii
    if lam:
        loss = loss + lam * l2_penalty(params)
    return loss


# ---------------------------------------------------------------------------
# gradients


def gradients(loss: Tensor, params: Parameters) -> dict[str, np.ndarray]:
    """Exact gradient for every parameter tensor; zeros when untouched."""
    if not np.all(np.isfinite(loss.value)):
        raise FloatingPointError("loss is not finite")
    table = ad.backward(loss)
    out = {}
    for name, tensor in params.items():
        grad = table.get(id(tensor))
        if grad is None:
            grad = np.zeros_like(tensor.value)
        elif not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        out[name] = grad
    return out


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(
    path: str, params: Parameters, config: EncoderConfig, extra_meta: dict | None = None
) -> None:
    meta = config.to_meta()
    meta.update(extra_meta or {})
    tensors = {k: v.astype(np.float32) for k, v in params.arrays().items()}
    container.save_container(path, tensors, meta)


def load_checkpoint(path: str, dtype=np.float32) -> tuple[Parameters, EncoderConfig, dict]:
    tensors, meta = container.load_container(path)
    config = EncoderConfig.from_meta(meta)
    params = Parameters(dtype)
    for name, arr in tensors.items():
        params.add(name, arr)
    extra = {k: v for k, v in meta.items() if not k.startswith("config.")}
    return params, config, extra
