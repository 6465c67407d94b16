"""Downstream reverse-engineering tools: function-purpose classification,
type recovery, and summarization, plus their evaluation runners.

All three consume a wasm-only encoding (segment id 2, so pre-trained segment
embeddings transfer) and are produced by fine-tuning an encoder checkpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import corpus as C
from . import decoder as D
from . import metrics as MX
from . import model as M
from .decoder import DecoderConfig
from .model import EncoderConfig, Parameters
from .tokenizer import (
    CLS_ID,
    SEG_WASM,
    SEP_ID,
    SPECIALS,
    Vocabulary,
    encode_streams,
)

BOS_ID, EOS_ID = CLS_ID, SEP_ID  # sequence heads reuse the shared special ids

DEFAULT_FPI_CLASSES = 12

# the simplified high-level type language used by the synthetic corpus
DEFAULT_TYPE_TOKENS = ("primitive", "pointer", "int32", "char", "void")


@dataclass
class FPIExample:
    wasm_tokens: list[str]
    label: int


@dataclass
class SequenceExample:
    wasm_tokens: list[str]
    target_tokens: list[str]


def encode_wasm_only(wasm_tokens, vocab: Vocabulary, max_len: int):
    if not wasm_tokens:
        raise ValueError("empty wasm token stream")
    return encode_streams([(vocab.encode_tokens(wasm_tokens), SEG_WASM)], max_len=max_len)


def default_type_vocab() -> Vocabulary:
    return Vocabulary(list(SPECIALS) + list(DEFAULT_TYPE_TOKENS))


def load_type_vocab(path: str) -> Vocabulary:
    return Vocabulary.load(path)


# ---------------------------------------------------------------------------
# task adapters consumed by training.finetune_loop


class ClassificationTask:
    """Purpose identification: [CLS] vector -> class distribution."""

    def __init__(self, vocab: Vocabulary, n_classes: int, max_len: int = 512, prefix: str = "fpi"):
        self.vocab = vocab
        self.n_classes = n_classes
        self.max_len = max_len
        self.prefix = prefix
        self.head_prefixes = (prefix + ".",)

    def init_head(self, params: Parameters, enc_config: EncoderConfig, seed: int = 0):
        if f"{self.prefix}.w" not in params:
            M.init_classifier_head(
                params, enc_config.hidden, self.n_classes, seed=seed, prefix=self.prefix
            )

    def _encode(self, examples):
        return [encode_wasm_only(ex.wasm_tokens, self.vocab, self.max_len) for ex in examples]

    def batch_loss(self, params, enc_config, batch, rng, train=True):
        hidden, _ = M.encode_inputs(
            self._encode(batch), params, enc_config, train=train, rng=rng
        )
        labels = [ex.label for ex in batch]
        return M.classify_loss(M.cls_pool(hidden), labels, params, prefix=self.prefix)

    def metric(self, params, enc_config, dataset) -> float:
        if not dataset:
            return 0.0
        pred = [
            fpi_predict(ex.wasm_tokens, params, enc_config, self.vocab,
                        self.n_classes, self.max_len, prefix=self.prefix)[0]
            for ex in dataset
        ]
        return float(np.mean([p == ex.label for p, ex in zip(pred, dataset)]))


class SequenceTask:
    """Wasm-to-sequence generation with the recurrent attention decoder."""

    def __init__(
        self,
        vocab: Vocabulary,
        out_vocab: Vocabulary,
        dec_config: DecoderConfig | None = None,
        max_len: int = 512,
        prefix: str = "dec",
        metric_kind: str = "exact",  # "exact" (type recovery) or "bleu" (summaries)
    ):
        self.vocab = vocab
        self.out_vocab = out_vocab
        self.dec_config = dec_config or DecoderConfig(vocab_size=len(out_vocab))
        if self.dec_config.vocab_size != len(out_vocab):
            raise ValueError("decoder vocab size must match the output vocabulary")
        self.max_len = max_len
        self.prefix = prefix
        self.metric_kind = metric_kind
        self.head_prefixes = (prefix + ".",)

    def init_head(self, params: Parameters, enc_config: EncoderConfig, seed: int = 0):
        if f"{self.prefix}.embed" not in params:
            D.init_decoder_params(
                params, enc_config.hidden, self.dec_config, seed=seed, prefix=self.prefix
            )

    def _targets(self, examples):
        return [
            self.out_vocab.encode_tokens(ex.target_tokens) + [EOS_ID] for ex in examples
        ]

    def batch_loss(self, params, enc_config, batch, rng, train=True):
        encoded = [encode_wasm_only(ex.wasm_tokens, self.vocab, self.max_len) for ex in batch]
        hidden, padded = M.encode_inputs(encoded, params, enc_config, train=train, rng=rng)
        return D.sequence_loss(
            hidden,
            padded["attention_mask"],
            M.cls_pool(hidden),
            self._targets(batch),
            params,
            self.dec_config,
            bos_id=BOS_ID,
            prefix=self.prefix,
        )

    def predict(self, params, enc_config, wasm_tokens, beam_width=1, max_steps=24):
        ranked = sequence_predict(
            wasm_tokens, params, enc_config, self.vocab, self.out_vocab,
            self.dec_config, beam_width, max_steps, self.max_len, self.prefix,
        )
        return ranked

    def metric(self, params, enc_config, dataset) -> float:
        if not dataset:
            return 0.0
        if self.metric_kind == "bleu":
            pairs = []
            for ex in dataset:
                pred = self.predict(params, enc_config, ex.wasm_tokens, beam_width=1)
                pairs.append((pred[0][0], ex.target_tokens))
            return MX.corpus_bleu4(pairs)
        hits = [
            MX.topk_exact_match(
                [p for p, _ in self.predict(params, enc_config, ex.wasm_tokens, 1)],
                ex.target_tokens,
                1,
            )
            for ex in dataset
        ]
        return float(np.mean(hits))


# ---------------------------------------------------------------------------
# prediction entry points


def fpi_predict(
    wasm_tokens,
    params: Parameters,
    enc_config: EncoderConfig,
    vocab: Vocabulary,
    n_classes: int,
    max_len: int = 512,
    prefix: str = "fpi",
):
    """Classify one wasm function; returns (class id, distribution)."""
    enc = encode_wasm_only(wasm_tokens, vocab, max_len)
    hidden = M.encode(M.embed(enc, params), np.ones(len(enc)), params, enc_config)
    dist = M.classify_head(M.cls_pool(hidden), params, n_classes, prefix=prefix).value
    return int(np.argmax(dist)), dist


def sequence_predict(
    wasm_tokens,
    params: Parameters,
    enc_config: EncoderConfig,
    vocab: Vocabulary,
    out_vocab: Vocabulary,
    dec_config: DecoderConfig,
    beam_width: int = 5,
    max_steps: int = 24,
    max_len: int = 512,
    prefix: str = "dec",
):
    """Beam-decoded output sequences as (tokens, score), best first."""
    enc = encode_wasm_only(wasm_tokens, vocab, max_len)
    hidden = M.encode(M.embed(enc, params), np.ones(len(enc)), params, enc_config)
    hyps = D.beam_search(
        hidden, beam_width, max_steps, params, dec_config,
        bos_id=BOS_ID, eos_id=EOS_ID, prefix=prefix,
    )
    out = []
    for ids, score in hyps:
        ids = [i for i in ids if i != EOS_ID]
        out.append(([out_vocab.token_of[i] for i in ids], score))
    return out


def tr_predict(wasm_tokens, params, enc_config, vocab, type_vocab, dec_config,
               beam_width: int = 5, max_steps: int = 12, prefix: str = "dec"):
    """Ranked high-level type sequences for one function."""
    return sequence_predict(
        wasm_tokens, params, enc_config, vocab, type_vocab, dec_config,
        beam_width, max_steps, prefix=prefix,
    )


def ws_predict(wasm_tokens, params, enc_config, vocab, dec_config,
               beam_width: int = 4, max_steps: int = 24, prefix: str = "dec"):
    """Natural-language summary tokens (subword pieces merged into words)."""
    from .tokenizer import decode as vocab_decode

    enc = encode_wasm_only(wasm_tokens, vocab, 512)
    hidden = M.encode(M.embed(enc, params), np.ones(len(enc)), params, enc_config)
    hyps = D.beam_search(
        hidden, beam_width, max_steps, params, dec_config,
        bos_id=BOS_ID, eos_id=EOS_ID, prefix=prefix,
    )
    ids = [i for i in hyps[0][0] if i != EOS_ID]
    return vocab_decode(ids, vocab)


# ---------------------------------------------------------------------------
# synthetic labeled datasets (template family is the class/type oracle)


def synthetic_fpi_dataset(n: int, seed: int, n_classes: int = 4) -> list[FPIExample]:
    families = C.SYNTHETIC_FAMILIES[:n_classes]
    samples = C.gen_synthetic_corpus(n, seed, families=families)
    return [
        FPIExample(s.wasm_tokens, families.index(C.sample_family(s))) for s in samples
    ]


def synthetic_tr_dataset(n_funcs: int, seed: int, which: str = "param") -> list[SequenceExample]:
    """One example per parameter (or one per function for return types)."""
    from .wat import normalize_tokens

    specs = C.generate_function_specs(n_funcs, seed)
    out = []
    for i, spec in enumerate(specs):
        opt = "O2" if i % 2 == 0 else "O0"
        tokens = normalize_tokens(spec.instructions(opt))
        if which == "param":
            for ptype in spec.param_types:
                out.append(SequenceExample(tokens, list(ptype)))
        elif which == "return":
            out.append(SequenceExample(tokens, list(spec.return_type)))
        else:
            raise ValueError("which must be 'param' or 'return'")
    return out


def synthetic_ws_dataset(n: int, seed: int) -> list[SequenceExample]:
    samples = C.gen_synthetic_corpus(n, seed)
    return [SequenceExample(s.wasm_tokens, s.doc_tokens) for s in samples]


# ---------------------------------------------------------------------------
# evaluation runners; line-delimited records with fixed field order


def evaluate_fpi(dataset, params, enc_config, vocab, n_classes, prefix="fpi"):
    lines = []
    preds = []
    for idx, ex in enumerate(dataset):
        pred, dist = fpi_predict(ex.wasm_tokens, params, enc_config, vocab, n_classes,
                                 prefix=prefix)
        preds.append(pred)
        lines.append(
            {
                "task": "fpi",
                "id": idx,
                "prediction": pred,
                "truth": ex.label,
                "correct": bool(pred == ex.label),
                "confidence": round(float(dist[pred]), 6),
            }
        )
    report = MX.classification_metrics(preds, [ex.label for ex in dataset])
    summary = {
        "task": "fpi",
        "n": len(dataset),
        "accuracy": report.accuracy,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "micro_precision": report.micro_precision,
        "micro_recall": report.micro_recall,
        "micro_f1": report.micro_f1,
    }
    return lines, summary


def evaluate_tr(dataset, params, enc_config, vocab, type_vocab, dec_config,
                beam_width=5, prefix="dec"):
    lines = []
    top1 = top5 = 0
    tps_sum = 0
    for idx, ex in enumerate(dataset):
        ranked = tr_predict(
            ex.wasm_tokens, params, enc_config, vocab, type_vocab, dec_config,
            beam_width=beam_width, prefix=prefix,
        )
        sequences = [toks for toks, _ in ranked]
        hit1 = MX.topk_exact_match(sequences, ex.target_tokens, 1)
        hitk = MX.topk_exact_match(sequences, ex.target_tokens, beam_width)
        tps = MX.type_prefix_score(sequences[0] or ["[UNK]"], ex.target_tokens)
        top1 += hit1
        top5 += hitk
        tps_sum += tps
        lines.append(
            {
                "task": "tr",
                "id": idx,
                "prediction": sequences[0],
                "topk": sequences,
                "truth": ex.target_tokens,
                "top1": bool(hit1),
                f"top{beam_width}": bool(hitk),
                "tps": tps,
            }
        )
    n = max(1, len(dataset))
    summary = {
        "task": "tr",
        "n": len(dataset),
        "top1_accuracy": top1 / n,
        f"top{beam_width}_accuracy": top5 / n,
        "mean_type_prefix_score": tps_sum / n,
    }
    return lines, summary


def evaluate_ws(dataset, params, enc_config, vocab, dec_config, beam_width=4, prefix="dec"):
    lines = []
    pairs = []
    for idx, ex in enumerate(dataset):
        pred_words = ws_predict(
            ex.wasm_tokens, params, enc_config, vocab, dec_config,
            beam_width=beam_width, prefix=prefix,
        )
        pairs.append((pred_words, ex.target_tokens))
        lines.append(
            {
                "task": "ws",
                "id": idx,
                "prediction": pred_words,
                "truth": ex.target_tokens,
                "bleu4": round(MX.bleu4(pred_words, ex.target_tokens), 6),
            }
        )
    summary = {
        "task": "ws",
        "n": len(dataset),
        "corpus_bleu4": MX.corpus_bleu4(pairs) if pairs else 0.0,
        "bertscore": "unavailable",
    }
    return lines, summary


def write_report(path: str, lines, summary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in lines:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        fh.write(json.dumps({"summary": summary}, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# task dataset files (line-delimited, one example per line)

_TASK_FIELDS = {"fpi": "label", "tr": "types", "ws": "summary"}


def save_task_data(path: str, task: str, examples) -> None:
    key = _TASK_FIELDS[task]
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            value = ex.label if task == "fpi" else ex.target_tokens
            fh.write(json.dumps({"wasm": ex.wasm_tokens, key: value}, ensure_ascii=False) + "\n")


def load_task_data(path: str, task: str):
    key = _TASK_FIELDS[task]
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                wasm = list(row["wasm"])
                if task == "fpi":
                    out.append(FPIExample(wasm, int(row[key])))
                else:
                    out.append(SequenceExample(wasm, list(row[key])))
            except (KeyError, ValueError) as err:
                raise ValueError(f"{path}:{lineno}: corrupt task line ({err})") from err
    return out
