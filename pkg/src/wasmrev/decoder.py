"""Two-layer recurrent decoder with additive attention and beam search.

Generation is autoregressive, so the recurrence runs forward only; the state
is initialized from a projection of the aggregated [CLS] encoder vector and
every step attends over all encoder outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import Parameters, _xavier, linear

_MASK_OFF = -1e9


@dataclass
class DecoderConfig:
    vocab_size: int
    layers: int = 2
    hidden: int = 128
    attn_dim: int = 64

    def to_meta(self, prefix: str = "dec") -> dict:
        return {f"{prefix}config.{k}": v for k, v in asdict(self).items()}

    @classmethod
    def from_meta(cls, meta: dict, prefix: str = "dec") -> "DecoderConfig":
        key = f"{prefix}config."
        return cls(**{k[len(key) :]: int(v) for k, v in meta.items() if k.startswith(key)})


def init_decoder_params(
    params: Parameters,
    enc_hidden: int,
    config: DecoderConfig,
    seed: int = 0,
    prefix: str = "dec",
) -> None:
    rng = np.random.default_rng(seed)
    R, A, V = config.hidden, config.attn_dim, config.vocab_size
    params.add(f"{prefix}.embed", _xavier(rng, V, R))
    for k in range(config.layers):
        params.add(f"{prefix}.l{k}.wx", _xavier(rng, R, 4 * R))
        params.add(f"{prefix}.l{k}.wh", _xavier(rng, R, 4 * R))
        params.add(f"{prefix}.l{k}.b", np.zeros(4 * R))
    params.add(f"{prefix}.init.w", _xavier(rng, enc_hidden, config.layers * 2 * R))
    params.add(f"{prefix}.init.b", np.zeros(config.layers * 2 * R))
    params.add(f"{prefix}.attn.we", _xavier(rng, enc_hidden, A))
    params.add(f"{prefix}.attn.wd", _xavier(rng, R, A))
    params.add(f"{prefix}.attn.b", np.zeros(A))
    params.add(f"{prefix}.attn.v", _xavier(rng, A, 1))
    params.add(f"{prefix}.out.w", _xavier(rng, R + enc_hidden, V))
    params.add(f"{prefix}.out.b", np.zeros(V))


def init_decoder_state(
    cls_vec: Tensor, params: Parameters, config: DecoderConfig, prefix: str = "dec"
) -> list[tuple[Tensor, Tensor]]:
    x = cls_vec.reshape((1,) + cls_vec.shape) if cls_vec.ndim == 1 else cls_vec
    s = ad.tanh(linear(x, params[f"{prefix}.init.w"], params[f"{prefix}.init.b"]))
    R = config.hidden
    state = []
    for k in range(config.layers):
        off = k * 2 * R
        state.append((s[:, off : off + R], s[:, off + R : off + 2 * R]))
    return state


def _lstm_cell(x, h, c, wx, wh, b, R):
    gates = x @ wx + h @ wh + b
    i = ad.sigmoid(gates[:, :R])
    f = ad.sigmoid(gates[:, R : 2 * R])
    g = ad.tanh(gates[:, 2 * R : 3 * R])
    o = ad.sigmoid(gates[:, 3 * R :])
    c_new = f * c + i * g
    h_new = o * ad.tanh(c_new)
    return h_new, c_new


def attention_context(
    h_top: Tensor,
    enc_out: Tensor,
    params: Parameters,
    enc_mask=None,
    prefix: str = "dec",
) -> tuple[Tensor, Tensor]:
    """Additive attention; returns (context [B,H], weights [B,L])."""
    B, L, H = enc_out.shape
    proj_enc = enc_out @ params[f"{prefix}.attn.we"]
    proj_dec = (h_top @ params[f"{prefix}.attn.wd"]).reshape((B, 1, -1))
    scores = ad.tanh(proj_enc + proj_dec + params[f"{prefix}.attn.b"]) @ params[f"{prefix}.attn.v"]
    scores = scores.reshape((B, L))
    if enc_mask is not None:
        mask = np.asarray(enc_mask, dtype=scores.value.dtype)
        if mask.ndim == 1:
            mask = mask[None, :]
        scores = scores + Tensor((1.0 - mask) * _MASK_OFF)
    alpha = ad.softmax(scores, axis=-1)
    ctx = (alpha.reshape((B, L, 1)) * enc_out).sum(axis=1)
    return ctx, alpha


def _step_logprobs(
    prev_ids,
    state,
    enc_out: Tensor,
    params: Parameters,
    config: DecoderConfig,
    enc_mask=None,
    prefix: str = "dec",
):
    x = ad.take_rows(params[f"{prefix}.embed"], np.asarray(prev_ids))
    new_state = []
    R = config.hidden
    for k, (h, c) in enumerate(state):
        h_new, c_new = _lstm_cell(
            x, h, c,
            params[f"{prefix}.l{k}.wx"], params[f"{prefix}.l{k}.wh"], params[f"{prefix}.l{k}.b"],
            R,
        )
        new_state.append((h_new, c_new))
        x = h_new
    ctx, _ = attention_context(x, enc_out, params, enc_mask, prefix)
    logits = linear(ad.concat([x, ctx], axis=1), params[f"{prefix}.out.w"], params[f"{prefix}.out.b"])
    return ad.log_softmax(logits, axis=-1), new_state


def decode_step(
    prev_ids,
    state,
    enc_out: Tensor,
    params: Parameters,
    config: DecoderConfig,
    enc_mask=None,
    prefix: str = "dec",
):
    """One generation step; returns (next-token distribution, new state)."""
    logp, new_state = _step_logprobs(prev_ids, state, enc_out, params, config, enc_mask, prefix)
    return ad.exp(logp), new_state


def sequence_loss(
    enc_out: Tensor,
    enc_mask,
    init_vec: Tensor,
    targets: list[list[int]],
    params: Parameters,
    config: DecoderConfig,
    bos_id: int,
    prefix: str = "dec",
) -> Tensor:
    """Teacher-forced negative log-likelihood, summed over target tokens."""
    B = len(targets)
    T = max(len(t) for t in targets)
    ids = np.zeros((B, T), dtype=np.int64)
    weight = np.zeros((B, T))
    for r, seq in enumerate(targets):
        ids[r, : len(seq)] = seq
        weight[r, : len(seq)] = 1.0

    state = init_decoder_state(init_vec, params, config, prefix)
    loss = None
    prev = np.full(B, bos_id, dtype=np.int64)
    for t in range(T):
        logp, state = _step_logprobs(prev, state, enc_out, params, config, enc_mask, prefix)
        n, width = logp.shape
        flat = logp.reshape((n * width, 1))
        picked = ad.take_rows(flat, np.arange(n) * width + ids[:, t]).reshape((n,))
        step_loss = -(picked * Tensor(weight[:, t].astype(logp.value.dtype))).sum()
        loss = step_loss if loss is None else loss + step_loss
        prev = ids[:, t]
    return loss


def beam_search(
    enc_out: Tensor,
    beam_width: int,
    max_steps: int,
    params: Parameters,
    config: DecoderConfig,
    bos_id: int,
    eos_id: int | None = None,
    enc_mask=None,
    prefix: str = "dec",
) -> list[tuple[list[int], float]]:
    """Top-k sequences ranked by length-normalized log-probability."""
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    if enc_out.ndim == 2:
        enc_out = enc_out.reshape((1,) + enc_out.shape)
    init_vec = enc_out[:, 0, :]
    state0 = init_decoder_state(init_vec, params, config, prefix)

    beams = [(0.0, [], state0, False)]
    for _ in range(max_steps):
        if all(done for _, _, _, done in beams):
            break
        candidates = []
        for logp_sum, tokens, state, done in beams:
            if done:
                candidates.append((logp_sum, tokens, state, True))
                continue
            prev = bos_id if not tokens else tokens[-1]
            logp, new_state = _step_logprobs(
                np.array([prev]), state, enc_out, params, config, enc_mask, prefix
            )
            row = logp.value[0]
            top = np.argsort(-row, kind="stable")[:beam_width]
            for t in top:
                t = int(t)
                candidates.append(
                    (
                        logp_sum + float(row[t]),
                        tokens + [t],
                        new_state,
                        eos_id is not None and t == eos_id,
                    )
                )
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beams = candidates[:beam_width]

    scored = [
        (tokens, logp_sum / max(1, len(tokens))) for logp_sum, tokens, _, _ in beams
    ]
    scored.sort(key=lambda s: (-s[1], s[0]))
    return scored[:beam_width]
