"""Optimization: adaptive-moment updates with linear decay, the joint
pre-training loop over the three objectives, and fine-tuning with early
stopping. Every step derives its randomness from (seed, step), so runs are
exactly reproducible and resumable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import container
from . import model as M
from . import pretrain as P
from .corpus import MultiModalSample
from .model import EncoderConfig, Parameters
from .tokenizer import Vocabulary, encode_multimodal

CURVE_HEADER = "step,l_m3lm,l_ssi,l_rii,total,lr"


@dataclass
class TrainConfig:
    batch_size: int = 32
    pretrain_epochs: int = 5
    finetune_epochs: int = 2
    lr_pretrain: float = 5e-4
    lr_finetune: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    lam: float = 0.0
    seed: int = 0
    early_stopping_patience: int = 2
    max_len: int = 512
    joint_tasks: bool = True  # False: round-robin one objective per step

    def __post_init__(self):
        if self.lr_pretrain <= 0 or self.lr_finetune <= 0:
            raise ValueError("learning rates must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("moment decay rates must lie in (0, 1)")


def _rng(seed: int, *lane: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *lane]))


def linear_lr(base: float, step: int, total_steps: int) -> float:
    return base * max(0.0, 1.0 - step / max(1, total_steps))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: Parameters) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.arrays().items()},
            v={k: np.zeros_like(a) for k, a in params.arrays().items()},
        )

    def ensure(self, params: Parameters) -> None:
        for k, a in params.arrays().items():
            self.m.setdefault(k, np.zeros_like(a))
            self.v.setdefault(k, np.zeros_like(a))

    def save(self, path: str) -> None:
        tensors = {}
        for k, a in self.m.items():
            tensors[f"m.{k}"] = a.astype(np.float32)
        for k, a in self.v.items():
            tensors[f"v.{k}"] = a.astype(np.float32)
        container.save_container(path, tensors, {"step": self.step})

    @classmethod
    def load(cls, path: str) -> "AdamState":
        tensors, meta = container.load_container(path)
        m = {k[2:]: a for k, a in tensors.items() if k.startswith("m.")}
        v = {k[2:]: a for k, a in tensors.items() if k.startswith("v.")}
        return cls(m=m, v=v, step=int(meta["step"]))


def adam_step(
    params: Parameters,
    grads: dict[str, np.ndarray],
    state: AdamState,
    step_index: int,
    config: TrainConfig,
    lr_base: float,
    total_steps: int,
    update_filter=None,
) -> None:
    """First/second-moment update with bias correction and decoupled decay."""
    t = step_index + 1
    lr_t = linear_lr(lr_base, step_index, total_steps)
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name, tensor in params.items():
        if update_filter is not None and not update_filter(name):
            continue
        # moments kept in the parameter dtype so state files round-trip exactly
        g = grads[name]
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * (g * g)
        update = lr_t * (m / bias1) / (np.sqrt(v / bias2) + config.eps)
        new_value = tensor.value * (
            1.0 - (lr_t * config.weight_decay if M.penalty_eligible(name) else 0.0)
        ) - update.astype(tensor.value.dtype)
        if not np.all(np.isfinite(new_value)):
            raise FloatingPointError(f"non-finite update for parameter {name}")
        tensor.value = new_value.astype(params.dtype)
    state.step = t


# ---------------------------------------------------------------------------
# pre-training


@dataclass
class PretrainResult:
    curves: list[tuple]
    params: Parameters
    state: AdamState
    checkpoints: list[str] = field(default_factory=list)


def write_curves(path: str, rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CURVE_HEADER + "\n")
        for step, l1, l2, l3, total, lr in rows:
            fh.write(f"{step},{l1:.10g},{l2:.10g},{l3:.10g},{total:.10g},{lr:.10g}\n")


def _epoch_chunks(n: int, batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    order = list(range(n))
    _rng(seed, 1, epoch).shuffle(order)
    chunks = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2].extend(chunks.pop())
    return chunks


def _ssi_rows(chunk_samples, train_samples):
    """Guarantee two distinct source functions in the contrastive rows."""
    sources = {P.source_id(s) for s in chunk_samples}
    if len(sources) >= 2:
        return chunk_samples
    anchor_sid = P.source_id(chunk_samples[0])
    for s in train_samples:
        if P.source_id(s) != anchor_sid:
            return chunk_samples[:-1] + [s]
    raise ValueError("corpus contains a single source function; cannot form pairs")


def pretrain_step_losses(
    batch_samples: list[MultiModalSample],
    train_samples: list[MultiModalSample],
    vocab: Vocabulary,
    params: Parameters,
    enc_config: EncoderConfig,
    config: TrainConfig,
    step: int,
):
    """Build the three task batches from one sample draw and compute losses."""
    max_len = config.max_len

    # masked multi-modal reconstruction
    encoded = [
        encode_multimodal(s.doc_tokens, s.source_tokens, s.wasm_tokens, vocab, max_len)
        for s in batch_samples
    ]
    m3lm = P.build_m3lm_batch(encoded, _rng(config.seed, 2, step), len(vocab))
    hidden, _ = M.encode_inputs(
        m3lm.corrupted_inputs, params, enc_config, train=True, rng=_rng(config.seed, 5, step)
    )
    pairs = [
        (row, pos) for row, positions in enumerate(m3lm.mask_positions) for pos in positions
    ]
    targets = [t for ts in m3lm.target_ids for t in ts]
    dists = M.mlm_head(hidden, np.array(pairs), params)
    l_m3lm = M.m3lm_loss(dists, targets)

    # similar-semantics identification
    ssi = P.build_ssi_batch(
        _ssi_rows(batch_samples, train_samples),
        None,
        _rng(config.seed, 3, step),
        vocab,
        max_len,
        pool=train_samples,
    )
    n = len(ssi.anchors)
    both, _ = M.encode_inputs(
        ssi.anchors + ssi.positives, params, enc_config, train=True,
        rng=_rng(config.seed, 6, step),
    )
    cls_all = M.cls_pool(both)
    l_ssi = M.ssi_loss_inbatch(cls_all[:n], cls_all[n:], ssi.source_ids)

    # reordered-instructions identification
    rii = P.build_rii_batch(batch_samples, _rng(config.seed, 4, step), vocab, max_len)
    rii_hidden, _ = M.encode_inputs(
        rii.inputs, params, enc_config, train=True, rng=_rng(config.seed, 7, step)
    )
    _, l_rii = M.rii_head_and_loss(M.cls_pool(rii_hidden), rii.labels, params)
    return l_m3lm, l_ssi, l_rii


def pretrain_loop(
    train_samples: list[MultiModalSample],
    vocab: Vocabulary,
    params: Parameters,
    enc_config: EncoderConfig,
    config: TrainConfig,
    out_dir: str | None = None,
    state: AdamState | None = None,
    start_step: int = 0,
    stop_after_steps: int | None = None,
) -> PretrainResult:
    """Joint optimization of the combined objective, one step per batch.

    The decay horizon always comes from the configured epoch count, so a run
    interrupted via `stop_after_steps` and resumed via `start_step`/`state`
    reproduces the uninterrupted run exactly. With ``config.joint_tasks``
    false the objectives rotate per step and the curve carries the last
    computed value of the idle objectives forward.
    """
    if not train_samples:
        raise ValueError("empty training set")
    if state is None:
        state = AdamState.init(params)

    n = len(train_samples)
    chunks_per_epoch = len(_epoch_chunks(n, config.batch_size, config.seed, 0))
    total_steps = config.pretrain_epochs * chunks_per_epoch
    end_step = total_steps if stop_after_steps is None else min(total_steps, stop_after_steps)

    result = PretrainResult(curves=[], params=params, state=state)
    last = {"m3lm": 0.0, "ssi": 0.0, "rii": 0.0}
    for step in range(start_step, end_step):
        epoch, slot = divmod(step, chunks_per_epoch)
        chunk = _epoch_chunks(n, config.batch_size, config.seed, epoch)[slot]
        batch_samples = [train_samples[i] for i in chunk]

        l_m3lm, l_ssi, l_rii = pretrain_step_losses(
            batch_samples, train_samples, vocab, params, enc_config, config, step
        )
        if config.joint_tasks:
            loss = M.total_pretrain_loss(l_m3lm, l_ssi, l_rii, params, config.lam)
            last = {
                "m3lm": float(l_m3lm.value),
                "ssi": float(l_ssi.value),
                "rii": float(l_rii.value),
            }
        else:
            pick = ("m3lm", "ssi", "rii")[step % 3]
            chosen = {"m3lm": l_m3lm, "ssi": l_ssi, "rii": l_rii}[pick]
            loss = (
                chosen + config.lam * M.l2_penalty(params) if config.lam else chosen
            )
            last[pick] = float(chosen.value)

        grads = M.gradients(loss, params)
        lr_now = linear_lr(config.lr_pretrain, step, total_steps)
        adam_step(params, grads, state, step, config, config.lr_pretrain, total_steps)
        result.curves.append(
            (step, last["m3lm"], last["ssi"], last["rii"], float(loss.value), lr_now)
        )

        if out_dir and (step + 1) % chunks_per_epoch == 0:
            path = os.path.join(out_dir, f"checkpoint-epoch{epoch}.ckpt")
            M.save_checkpoint(path, params, enc_config, {"step": step + 1})
            state.save(os.path.join(out_dir, "optimizer.ckpt"))
            result.checkpoints.append(path)

    if out_dir:
        final = os.path.join(out_dir, "model.ckpt")
        M.save_checkpoint(final, params, enc_config, {"step": end_step})
        state.save(os.path.join(out_dir, "optimizer.ckpt"))
        write_curves(os.path.join(out_dir, "curves.csv"), result.curves)
        result.checkpoints.append(final)
    return result


# ---------------------------------------------------------------------------
# fine-tuning


@dataclass
class FinetuneResult:
    params: Parameters
    best_metric: float
    history: list[tuple]  # (epoch, mean_train_loss, val_metric)


def finetune_loop(
    params: Parameters,
    enc_config: EncoderConfig,
    task,
    train_set,
    val_set,
    config: TrainConfig,
    freeze_encoder: bool = False,
) -> FinetuneResult:
    """Head on top of a (pre-trained or fresh) encoder; keeps the best
    validation checkpoint and stops once patience is exhausted."""
    task.init_head(params, enc_config, seed=config.seed)
    state = AdamState.init(params)
    n = len(train_set)
    if n == 0:
        raise ValueError("empty fine-tuning set")
    chunks_per_epoch = max(1, (n + config.batch_size - 1) // config.batch_size)
    total_steps = config.finetune_epochs * chunks_per_epoch

    update_filter = None
    if freeze_encoder:
        prefixes = tuple(task.head_prefixes)
        update_filter = lambda name: name.startswith(prefixes)

    best_params = params.copy()
    best_metric = -np.inf
    history = []
    passes_since_best = 0
    step = 0
    for epoch in range(config.finetune_epochs):
        order = list(range(n))
        _rng(config.seed, 11, epoch).shuffle(order)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            batch = [train_set[i] for i in order[lo : lo + config.batch_size]]
            loss = task.batch_loss(
                params, enc_config, batch, _rng(config.seed, 12, step), train=True
            )
            grads = M.gradients(loss, params)
            adam_step(
                params, grads, state, step, config, config.lr_finetune, total_steps,
                update_filter=update_filter,
            )
            epoch_losses.append(float(loss.value) / max(1, len(batch)))
            step += 1

        metric = task.metric(params, enc_config, val_set)
        history.append((epoch, float(np.mean(epoch_losses)), metric))
        if metric > best_metric:
            best_metric = metric
            best_params = params.copy()
            passes_since_best = 0
        else:
            passes_since_best += 1
        if passes_since_best >= config.early_stopping_patience:
            break
    return FinetuneResult(params=best_params, best_metric=best_metric, history=history)
