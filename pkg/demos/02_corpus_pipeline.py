"""Build a corpus end to end: dedup, doc truncation, filtering, splitting.

Runs entirely from synthetic templates, so no external toolchain is needed;
the same pipeline drives a real compiler via corpus.compile_records when
--cc/--wasm2text (or WASMREV_CC / WASMREV_WASM2TEXT) point at one.
"""

from collections import Counter

from wasmrev import corpus

# 1. documentation is cut to its first paragraph and short docs are dropped
doc = "Returns the sum of two values.\n\n@param a first operand\n@param b second"
print("truncate_doc:", repr(corpus.truncate_doc(doc)))

records = [
    corpus.RawFunctionRecord("libdemo", "add", doc, "int add(int a,int b){return a+b;}"),
    corpus.RawFunctionRecord("libdemo", "add2", doc, "int add ( int a , int b ) { return a + b ; }"),
    corpus.RawFunctionRecord("libdemo", "scan", "Counts bytes until NUL.", "int scan(char*p){int n=0;while(p[n])n++;return n;}"),
]
kept = corpus.near_dedup(records)
print(f"near_dedup: {len(records)} records -> {len(kept)} (whitespace twin removed)\n")

# 2. synthetic corpus: (doc, source, wasm) triplets over six template families
samples = corpus.gen_synthetic_corpus(64, seed=7)
families = Counter(corpus.sample_family(s) for s in samples)
opts = Counter(s.opt_level for s in samples)
print(f"synthetic corpus: {len(samples)} samples")
print("  families:", dict(sorted(families.items())))
print("  optimization levels:", dict(sorted(opts.items())))

sample = samples[0]
print("\none sample:")
print("  project:", sample.project_id, " opt:", sample.opt_level)
print("  doc:   ", " ".join(sample.doc_tokens))
print("  source:", " ".join(sample.source_tokens))
print("  wasm:  ", " ".join(sample.wasm_tokens[:18]), "...")

# 3. project-granularity split: all samples of a project stay together
split = corpus.split_by_project(samples, ratios=(0.8, 0.1, 0.1), seed=7)
print(
    f"\nsplit sizes: train={len(split.train)}"
    f" validation={len(split.validation)} test={len(split.test)}"
)
for name, ids in (("train", split.train), ("validation", split.validation), ("test", split.test)):
    projects = sorted({samples[i].project_id for i in ids})
    print(f"  {name}: projects {projects}")
