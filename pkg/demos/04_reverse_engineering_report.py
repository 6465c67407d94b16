"""End-to-end reverse engineering: pre-train, fine-tune all three tools,
and emit the aggregated report for a fresh `.wat` module.

Everything runs through the same CLI used from the shell; expect a couple of
minutes. Outputs land in ./demo-out.
"""

import pathlib

from wasmrev import cli, corpus

OUT = pathlib.Path("demo-out")
OUT.mkdir(exist_ok=True)

TINY = ["--layers", "2", "--hidden", "32", "--heads", "4",
        "--max-len", "192", "--dropout", "0.0"]


def run(argv):
    print(f"\n$ wasmrev {' '.join(argv)}")
    rc = cli.main(argv)
    assert rc == 0, f"exit code {rc}"


run(["build-corpus", "--synthetic", "64", "--seed", "0", "--out-dir", str(OUT / "corpus")])
run(["build-vocab", "--corpus", str(OUT / "corpus/corpus.jsonl"),
     "--out-dir", str(OUT / "corpus"),
     "--nl-cap", "500", "--pl-cap", "400", "--wasm-cap", "300"])
run(["pretrain", "--corpus", str(OUT / "corpus/corpus.jsonl"),
     "--vocab", str(OUT / "corpus/vocab.txt"), "--out-dir", str(OUT / "pre"),
     "--batch", "16", "--epochs", "25", "--lr", "5e-3", *TINY])

common = ["--checkpoint", str(OUT / "pre/model.ckpt"), "--batch", "16",
          "--lr", "2e-3", "--epochs", "12", "--patience", "12"]
run(["finetune", "fpi", *common, "--synthetic", "96", "--n-classes", "4",
     "--out-dir", str(OUT / "fpi")])
run(["finetune", "tr", *common, "--synthetic", "48", "--target", "param",
     "--out-dir", str(OUT / "tr")])
run(["finetune", "ws", *common, "--synthetic", "96", "--out-dir", str(OUT / "ws")])

run(["eval", "--checkpoint", str(OUT / "fpi/task-fpi.ckpt"),
     "--data", str(OUT / "fpi/fpi-test.jsonl"), "--out-dir", str(OUT / "eval")])

wat_path = OUT / "unknown.wat"
wat_path.write_text(corpus.render_synthetic_module(4, seed=123))
print(f"\nwrote a fresh module to {wat_path}")

run(["report", "--wat", str(wat_path),
     "--fpi", str(OUT / "fpi/task-fpi.ckpt"),
     "--tr", str(OUT / "tr/task-tr.ckpt"),
     "--ws", str(OUT / "ws/task-ws.ckpt"),
     "--beam", "5", "--out-dir", str(OUT / "report")])
