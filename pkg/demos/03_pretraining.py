"""Pre-train the encoder on a synthetic corpus and watch the three losses.

Uses a deliberately tiny configuration so the run finishes in about a minute;
the CLI exposes the full-size defaults (8 layers, 128 hidden, ...).
"""

import numpy as np

from wasmrev import corpus, model, pretrain, training
from wasmrev.model import EncoderConfig
from wasmrev.tokenizer import Vocabulary, encode_multimodal
from wasmrev.training import TrainConfig

samples = corpus.gen_synthetic_corpus(64, seed=0)
vocab = Vocabulary.build(
    [s.doc_tokens for s in samples],
    [s.source_tokens for s in samples],
    [s.wasm_tokens for s in samples],
    nl_cap=500, pl_cap=400, wasm_cap=300,
)
print(f"corpus: {len(samples)} samples, vocabulary: {len(vocab)} tokens")

# what one corrupted training example looks like
enc = encode_multimodal(
    samples[0].doc_tokens, samples[0].source_tokens, samples[0].wasm_tokens, vocab, 192
)
corrupted, targets, positions = pretrain.corrupt_m3lm(
    enc, np.random.default_rng(0), len(vocab)
)
print(f"masked-reconstruction view: {len(positions)} of {len(enc)} positions corrupted")

cfg = EncoderConfig(
    vocab_size=len(vocab), layers=2, hidden=32, heads=4, max_positions=192, dropout=0.0
)
tcfg = TrainConfig(batch_size=16, pretrain_epochs=25, lr_pretrain=5e-3, seed=1, max_len=192)
params = model.init_encoder_params(cfg, seed=1)
print(f"encoder: {cfg.layers} layers, hidden {cfg.hidden}, {params.n_values()} parameters")

result = training.pretrain_loop(samples, vocab, params, cfg, tcfg)
print(f"\n{'step':>5} {'m3lm':>9} {'ssi':>8} {'rii':>7} {'total':>9} {'lr':>9}")
for row in result.curves[:: max(1, len(result.curves) // 10)]:
    print(f"{row[0]:5d} {row[1]:9.2f} {row[2]:8.2f} {row[3]:7.2f} {row[4]:9.2f} {row[5]:9.6f}")
first, last = result.curves[0], result.curves[-1]
print(f"\ncombined loss: {first[4]:.1f} -> {last[4]:.1f} "
      f"({100 * last[4] / first[4]:.1f}% of the initial value)")
