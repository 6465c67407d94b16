"""Command-line surface: corpus building, vocabulary, pre-training,
fine-tuning, evaluation, single-shot inference and the aggregated
reverse-engineering report.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import corpus as C
from . import model as M
from . import tasks as T
from . import training, wat
from .corpus import ToolchainConfig, ToolchainError
from .decoder import DecoderConfig
from .tokenizer import Vocabulary
from .training import TrainConfig

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

TASKS = ("fpi", "tr", "ws")


class UsageError(RuntimeError):
    """Configuration problems that warrant exit code 2."""


def _out_dir(args) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


# ---------------------------------------------------------------------------
# build-corpus


def cmd_build_corpus(args) -> int:
    out = _out_dir(args)
    removed = 0
    if args.synthetic is not None:
        samples = C.gen_synthetic_corpus(args.synthetic, seed=args.seed)
    elif args.from_sources:
        toolchain = ToolchainConfig.resolve(args.cc, args.wasm2text)
        records = _load_records(args.from_sources)
        kept = C.near_dedup(records)
        removed = len(records) - len(kept)
        opt_levels = tuple(args.opt_levels.split(","))
        samples = C.compile_records(kept, opt_levels, toolchain, workers=args.workers)
        samples = C.filter_short_docs(samples)
    else:
        raise UsageError("build-corpus needs --synthetic N or --from-sources FILE")

    corpus_path = os.path.join(out, "corpus.jsonl")
    C.save_corpus(samples, corpus_path)
    split = C.split_by_project(samples, seed=args.seed)
    C.save_split(split, os.path.join(out, "splits.json"))

    per_opt = {}
    for s in samples:
        per_opt[s.opt_level] = per_opt.get(s.opt_level, 0) + 1
    print(f"[wasmrev build-corpus] samples={len(samples)} dedup_removed={removed}")
    for opt in C.OPT_LEVELS:
        if opt in per_opt:
            print(f"  {opt}: {per_opt[opt]}")
    print(
        f"  split: train={len(split.train)} validation={len(split.validation)}"
        f" test={len(split.test)}"
    )
    print(f"  wrote {corpus_path}")
    return EXIT_OK


def _load_records(path: str) -> list[C.RawFunctionRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                records.append(
                    C.RawFunctionRecord(
                        project_id=row["project_id"],
                        function_name=row["function_name"],
                        doc_text=row["doc"],
                        source_text=row["source"],
                    )
                )
            except (KeyError, ValueError) as err:
                raise ValueError(f"{path}:{lineno}: corrupt source record ({err})") from err
    return records


# ---------------------------------------------------------------------------
# build-vocab


def cmd_build_vocab(args) -> int:
    out = _out_dir(args)
    samples = C.load_corpus(args.corpus)
    vocab = Vocabulary.build(
        [s.doc_tokens for s in samples],
        [s.source_tokens for s in samples],
        [s.wasm_tokens for s in samples],
        nl_cap=args.nl_cap,
        pl_cap=args.pl_cap,
        wasm_cap=args.wasm_cap,
        min_freq=args.min_freq,
    )
    path = os.path.join(out, "vocab.txt")
    vocab.save(path)
    print(f"[wasmrev build-vocab] tokens={len(vocab)} wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# pretrain


def _train_config(args, **overrides) -> TrainConfig:
    cfg = TrainConfig(seed=args.seed)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def pretrain_header(args) -> str:
    return (
        f"[wasmrev pretrain] layers={args.layers} hidden={args.hidden}"
        f" heads={args.heads} lr={args.lr:g} batch={args.batch} epochs={args.epochs}"
        f" lambda={getattr(args, 'lambda'):g} seed={args.seed}"
    )


def cmd_pretrain(args) -> int:
    out = _out_dir(args)
    samples = C.load_corpus(args.corpus)
    split_path = args.split or os.path.join(os.path.dirname(args.corpus), "splits.json")
    if os.path.exists(split_path):
        split = C.load_split(split_path)
        train_samples = [samples[i] for i in sorted(split.train)]
    else:
        train_samples = samples
    vocab = Vocabulary.load(args.vocab)

    enc_config = M.EncoderConfig(
        vocab_size=len(vocab),
        layers=args.layers,
        hidden=args.hidden,
        heads=args.heads,
        max_positions=args.max_len,
        dropout=args.dropout,
    )
    tcfg = _train_config(
        args,
        batch_size=args.batch,
        pretrain_epochs=args.epochs,
        lr_pretrain=args.lr,
        lam=getattr(args, "lambda"),
        max_len=args.max_len,
        joint_tasks=not args.round_robin,
    )
    print(pretrain_header(args) + f" train_samples={len(train_samples)}")
    params = M.init_encoder_params(enc_config, seed=args.seed)
    result = training.pretrain_loop(
        train_samples, vocab, params, enc_config, tcfg, out_dir=out
    )
    final = result.curves[-1]
    print(
        f"  steps={len(result.curves)} final_total={final[4]:.4f}"
        f" wrote {os.path.join(out, 'model.ckpt')}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# fine-tuning data plumbing


def _task_sets(args, task: str):
    """(train, validation, test) examples from --data or --synthetic."""
    if args.data:
        examples = T.load_task_data(args.data, task)
    elif args.synthetic:
        if task == "fpi":
            examples = T.synthetic_fpi_dataset(args.synthetic, args.seed, args.n_classes)
        elif task == "tr":
            examples = T.synthetic_tr_dataset(args.synthetic, args.seed, args.target)
        else:
            examples = T.synthetic_ws_dataset(args.synthetic, args.seed)
    else:
        raise UsageError(f"{task} needs --data FILE or --synthetic N")
    order = list(range(len(examples)))
    np.random.default_rng(args.seed).shuffle(order)
    n = len(order)
    n_train, n_val = int(0.8 * n), int(0.1 * n)
    pick = lambda idxs: [examples[i] for i in idxs]
    return (
        pick(order[:n_train]),
        pick(order[n_train : n_train + n_val]) or pick(order[:1]),
        pick(order[n_train + n_val :]) or pick(order[:1]),
    )


def _build_task(args, task: str, vocab: Vocabulary, enc_config):
    if task == "fpi":
        return T.ClassificationTask(vocab, args.n_classes, max_len=enc_config.max_positions)
    if task == "tr":
        type_vocab = (
            T.load_type_vocab(args.type_vocab) if args.type_vocab else T.default_type_vocab()
        )
        dec = DecoderConfig(vocab_size=len(type_vocab), hidden=enc_config.hidden)
        return T.SequenceTask(
            vocab, type_vocab, dec, max_len=enc_config.max_positions, metric_kind="exact"
        )
    dec = DecoderConfig(vocab_size=len(vocab), hidden=enc_config.hidden)
    return T.SequenceTask(vocab, vocab, dec, max_len=enc_config.max_positions,
                          metric_kind="bleu")


def cmd_finetune(args) -> int:
    out = _out_dir(args)
    task_name = args.task
    if args.from_scratch:
        vocab = Vocabulary.load(args.vocab)
        enc_config = M.EncoderConfig(
            vocab_size=len(vocab), layers=args.layers, hidden=args.hidden,
            heads=args.heads, max_positions=args.max_len, dropout=args.dropout,
        )
        params = M.init_encoder_params(enc_config, seed=args.seed)
        vocab_src = args.vocab
    else:
        if not args.checkpoint:
            raise UsageError("finetune needs --checkpoint (or --from-scratch with --vocab)")
        params, enc_config, _ = M.load_checkpoint(args.checkpoint)
        vocab_src = args.vocab or os.path.join(os.path.dirname(args.checkpoint), "vocab.txt")
        vocab = Vocabulary.load(vocab_src)

    task = _build_task(args, task_name, vocab, enc_config)
    train_set, val_set, test_set = _task_sets(args, task_name)
    tcfg = _train_config(
        args,
        batch_size=args.batch,
        finetune_epochs=args.epochs,
        lr_finetune=args.lr,
        early_stopping_patience=args.patience,
        max_len=enc_config.max_positions,
    )
    print(
        f"[wasmrev finetune] task={task_name} lr={args.lr:g} batch={args.batch}"
        f" epochs={args.epochs} from_scratch={args.from_scratch} seed={args.seed}"
        f" train={len(train_set)} val={len(val_set)}"
    )
    result = training.finetune_loop(
        params, enc_config, task, train_set, val_set, tcfg,
        freeze_encoder=args.freeze_encoder,
    )
    meta = {"task": task_name, "val_metric": f"{result.best_metric:.6f}"}
    if task_name == "fpi":
        meta["n_classes"] = args.n_classes
    if task_name == "tr":
        meta.update(task.dec_config.to_meta())
        task.out_vocab.save(os.path.join(out, "types.txt"))
    if task_name == "ws":
        meta.update(task.dec_config.to_meta())
    vocab.save(os.path.join(out, "vocab.txt"))
    ckpt = os.path.join(out, f"task-{task_name}.ckpt")
    M.save_checkpoint(ckpt, result.params, enc_config, meta)
    T.save_task_data(os.path.join(out, f"{task_name}-test.jsonl"), task_name, test_set)
    print(f"  best_val_metric={result.best_metric:.4f} wrote {ckpt}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / infer


def _load_task_model(ckpt_path: str):
    params, enc_config, meta = M.load_checkpoint(ckpt_path)
    task_name = meta.get("task")
    if task_name not in TASKS:
        raise UsageError(f"{ckpt_path} is not a task checkpoint")
    base = os.path.dirname(ckpt_path)
    vocab = Vocabulary.load(os.path.join(base, "vocab.txt"))
    type_vocab = None
    dec_config = None
    if task_name == "tr":
        type_vocab = Vocabulary.load(os.path.join(base, "types.txt"))
        dec_config = DecoderConfig.from_meta(meta)
    if task_name == "ws":
        dec_config = DecoderConfig.from_meta(meta)
    return params, enc_config, meta, vocab, type_vocab, dec_config


def cmd_eval(args) -> int:
    out = _out_dir(args)
    params, enc_config, meta, vocab, type_vocab, dec_config = _load_task_model(args.checkpoint)
    task_name = meta["task"]
    if args.data:
        dataset = T.load_task_data(args.data, task_name)
    else:
        raise UsageError("eval needs --data FILE (e.g. the finetune test split)")
    if task_name == "fpi":
        lines, summary = T.evaluate_fpi(
            dataset, params, enc_config, vocab, int(meta["n_classes"])
        )
    elif task_name == "tr":
        lines, summary = T.evaluate_tr(
            dataset, params, enc_config, vocab, type_vocab, dec_config,
            beam_width=args.beam,
        )
    else:
        lines, summary = T.evaluate_ws(
            dataset, params, enc_config, vocab, dec_config, beam_width=args.beam
        )
    path = os.path.join(out, f"eval-{task_name}.jsonl")
    T.write_report(path, lines, summary)
    print(f"[wasmrev eval] task={task_name} n={summary['n']}")
    for key, value in summary.items():
        if key not in ("task", "n"):
            print(f"  {key}: {value}")
    print(f"  wrote {path}")
    return EXIT_OK


def _functions_from_wat(path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    funcs = wat.extract_functions(text)
    out = []
    for f in funcs:
        if not f.body_lines:
            continue
        tokens = wat.normalize_tokens(wat.segment_instructions(f))
        out.append((f.name_or_index, tokens))
    return out


def cmd_infer(args) -> int:
    params, enc_config, meta, vocab, type_vocab, dec_config = _load_task_model(args.checkpoint)
    task_name = meta["task"]
    for name, tokens in _functions_from_wat(args.wat):
        if task_name == "fpi":
            label, dist = T.fpi_predict(
                tokens, params, enc_config, vocab, int(meta["n_classes"])
            )
            print(f"{name}\tclass={label}\tconfidence={dist[label]:.4f}")
        elif task_name == "tr":
            ranked = T.tr_predict(
                tokens, params, enc_config, vocab, type_vocab, dec_config, args.beam
            )
            shown = " | ".join(" ".join(toks) for toks, _ in ranked)
            print(f"{name}\ttypes: {shown}")
        else:
            words = T.ws_predict(tokens, params, enc_config, vocab, dec_config, args.beam)
            print(f"{name}\tsummary: {' '.join(words)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# aggregated report


@dataclass
class ReportEntry:
    function_id: str
    fpi: dict | str = "skipped"
    tr_params: dict | str = "skipped"
    tr_return: dict | str = "skipped"
    summary: dict | str = "skipped"
    error: str | None = None


def _render_entry(entry: ReportEntry) -> str:
    lines = [f"function {entry.function_id}"]
    if entry.error:
        lines.append(f"  error: {entry.error}")
        return "\n".join(lines)
    if isinstance(entry.fpi, dict):
        lines.append(
            f"  purpose: class {entry.fpi['label']}"
            f" (confidence {entry.fpi['confidence']:.3f})"
        )
    else:
        lines.append("  purpose: skipped")
    for title, field in (("parameter types", entry.tr_params), ("return type", entry.tr_return)):
        if isinstance(field, dict):
            lines.append(f"  {title}: {' '.join(field['top1'])}")
            lines.append(
                f"    top-{len(field['topk'])}: "
                + " | ".join(" ".join(t) for t in field["topk"])
            )
        else:
            lines.append(f"  {title}: skipped")
    if isinstance(entry.summary, dict):
        lines.append(f"  summary: {entry.summary['text']}")
    else:
        lines.append("  summary: skipped")
    return "\n".join(lines)


def cmd_report(args) -> int:
    out = _out_dir(args)
    models = {}
    for key, path in (
        ("fpi", args.fpi),
        ("tr_params", args.tr_params or args.tr),
        ("tr_return", args.tr_return),
        ("ws", args.ws),
    ):
        if path:
            models[key] = _load_task_model(path)
    if not models:
        raise UsageError("report needs at least one task checkpoint")

    try:
        functions = _functions_from_wat(args.wat)
    except (OSError, wat.WatParseError) as err:
        print(f"error: cannot read {args.wat}: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    entries = []
    failures = 0
    for name, tokens in functions:
        entry = ReportEntry(function_id=name)
        try:
            if "fpi" in models:
                params, enc_config, meta, vocab, _, _ = models["fpi"]
                label, dist = T.fpi_predict(
                    tokens, params, enc_config, vocab, int(meta["n_classes"])
                )
                entry.fpi = {"label": label, "confidence": float(dist[label])}
            for key, attr in (("tr_params", "tr_params"), ("tr_return", "tr_return")):
                if key in models:
                    params, enc_config, meta, vocab, type_vocab, dec_config = models[key]
                    ranked = T.tr_predict(
                        tokens, params, enc_config, vocab, type_vocab, dec_config, args.beam
                    )
                    setattr(entry, attr, {
                        "top1": ranked[0][0],
                        "topk": [toks for toks, _ in ranked],
                    })
            if "ws" in models:
                params, enc_config, meta, vocab, _, dec_config = models["ws"]
                words = T.ws_predict(tokens, params, enc_config, vocab, dec_config, args.beam)
                entry.summary = {"text": " ".join(words)}
        except Exception as err:  # per-function failure, keep reporting
            entry.error = str(err)
            failures += 1
        entries.append(entry)

    report_path = os.path.join(out, "report.jsonl")
    with open(report_path, "w", encoding="utf-8") as fh:
        for entry in entries:
            row = {
                "function": entry.function_id,
                "fpi": entry.fpi,
                "tr_params": entry.tr_params,
                "tr_return": entry.tr_return,
                "summary": entry.summary,
                "error": entry.error,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    for entry in entries:
        print(_render_entry(entry))
    print(f"[wasmrev report] functions={len(entries)} wrote {report_path}")
    if entries and failures == len(entries):
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wasmrev",
        description="Multi-modal representation learning for WebAssembly reverse engineering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="key=value file of default flags")
        p.add_argument("--out-dir", default="out")

    p = sub.add_parser("build-corpus", help="build a corpus from sources or templates")
    common(p)
    p.add_argument("--synthetic", type=int, help="generate N synthetic samples")
    p.add_argument("--from-sources", help="JSONL of raw function records")
    p.add_argument("--cc", help="compiler executable (or WASMREV_CC)")
    p.add_argument("--wasm2text", help="binary-to-text converter (or WASMREV_WASM2TEXT)")
    p.add_argument("--opt-levels", default=",".join(C.OPT_LEVELS))
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("build-vocab", help="build the shared vocabulary")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--nl-cap", type=int, default=8000)
    p.add_argument("--pl-cap", type=int, default=8000)
    p.add_argument("--wasm-cap", type=int, default=4000)
    p.add_argument("--min-freq", type=int, default=1)

    p = sub.add_parser("pretrain", help="run the three-objective pre-training")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--split", help="splits.json (defaults next to the corpus)")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--lambda", dest="lambda", type=float, default=0.0)
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--round-robin", action="store_true",
                   help="rotate objectives per step instead of summing")

    p = sub.add_parser("finetune", help="fine-tune a task head on a checkpoint")
    common(p)
    p.add_argument("task", choices=TASKS)
    p.add_argument("--checkpoint")
    p.add_argument("--from-scratch", action="store_true",
                   help="train the supervised baseline without pre-training")
    p.add_argument("--vocab", help="vocabulary file (required with --from-scratch)")
    p.add_argument("--data", help="task data JSONL")
    p.add_argument("--synthetic", type=int, help="generate N synthetic task examples")
    p.add_argument("--n-classes", type=int, default=4)
    p.add_argument("--target", choices=("param", "return"), default="param")
    p.add_argument("--type-vocab")
    p.add_argument("--lr", type=float, default=3e-5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--patience", type=int, default=2)
    p.add_argument("--freeze-encoder", action="store_true")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=512)

    p = sub.add_parser("eval", help="evaluate a task checkpoint on a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--beam", type=int, default=5)

    p = sub.add_parser("infer", help="run one task on every function of a wat file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wat", required=True)
    p.add_argument("--beam", type=int, default=5)

    p = sub.add_parser("report", help="aggregate all task results for a wat file")
    common(p)
    p.add_argument("--wat", required=True)
    p.add_argument("--fpi")
    p.add_argument("--tr", help="alias for --tr-params")
    p.add_argument("--tr-params")
    p.add_argument("--tr-return")
    p.add_argument("--ws")
    p.add_argument("--beam", type=int, default=5)
    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config key=value files into flags (explicit flags win)."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    path = argv[at + 1]
    flags = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            flag = "--" + key.strip().replace("_", "-")
            if flag in argv:
                continue  # explicit flag wins
            if value.strip().lower() in ("true", "false"):
                if value.strip().lower() == "true":
                    flags.append(flag)
            else:
                flags.extend([flag, value.strip()])
    # insert right after the subcommand token
    return argv[:1] + flags + argv[1:]


DISPATCH = {
    "build-corpus": cmd_build_corpus,
    "build-vocab": cmd_build_vocab,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and not argv[0].startswith("-"):
            argv = _inject_config(argv)
        args = build_parser().parse_args(argv)
        return DISPATCH[args.command](args)
    except (UsageError, ToolchainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:  # argparse uses 2 for usage errors already
        return int(err.code or 0)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
