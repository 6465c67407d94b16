"""Corpus construction: ingestion, dedup, compilation driving, splits, synthesis.

A corpus row is one (documentation, source, wasm) triplet; the same source
function may appear once per optimization level.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import wat
from .wat import Instruction

log = logging.getLogger(__name__)

OPT_LEVELS = ("O0", "O1", "O2", "O3", "Os", "Oz")

CORPUS_FIELDS = ("project_id", "doc", "source", "wasm", "opt_level")


@dataclass
class RawFunctionRecord:
    project_id: str
    function_name: str
    doc_text: str
    source_text: str


@dataclass
class MultiModalSample:
    project_id: str
    doc_tokens: list[str]
    source_tokens: list[str]
    wasm_tokens: list[str]
    opt_level: str

    def validate(self) -> None:
        if len(self.doc_tokens) < 3:
            raise ValueError("doc_tokens shorter than three tokens")
        if not self.wasm_tokens:
            raise ValueError("wasm_tokens empty")
        if self.opt_level not in OPT_LEVELS:
            raise ValueError(f"unknown opt_level {self.opt_level!r}")
        if not self.project_id:
            raise ValueError("empty project_id")


@dataclass
class CorpusSplit:
    train: set[int]
    validation: set[int]
    test: set[int]

    def validate(self) -> None:
        if self.train & self.validation or self.train & self.test or self.validation & self.test:
            raise ValueError("splits overlap")


# ---------------------------------------------------------------------------
# text helpers

_WORD_RE = re.compile(r"[A-Za-z0-9]+|[^\sA-Za-z0-9]")
_SRC_RE = re.compile(
    r'"(?:\\.|[^"\\])*"'
    r"|'(?:\\.|[^'\\])*'"
    r"|[A-Za-z_][A-Za-z_0-9]*"
    r"|0[xX][0-9a-fA-F]+"
    r"|\d+\.\d+|\d+"
    r"|->|\+\+|--|<<|>>|<=|>=|==|!=|&&|\|\|"
    r"|[^\sA-Za-z_0-9]"
)


def nl_word_tokens(text: str) -> list[str]:
    return [t.lower() for t in _WORD_RE.findall(text)]


def source_tokens(text: str) -> list[str]:
    return _SRC_RE.findall(text)


def truncate_doc(doc: str) -> str:
    """Keep the first blank-line-delimited paragraph; normalize newlines to LF."""
    doc = doc.replace("\r\n", "\n").replace("\r", "\n").strip()
    if not doc:
        return ""
    return re.split(r"\n[ \t]*\n", doc, maxsplit=1)[0].rstrip()


def filter_short_docs(samples: list[MultiModalSample]) -> list[MultiModalSample]:
    return [s for s in samples if len(s.doc_tokens) >= 3]


# ---------------------------------------------------------------------------
# near-duplicate removal


def _shingles(tokens: list[str], n: int) -> frozenset:
    if len(tokens) >= n:
        return frozenset(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return frozenset([tuple(tokens)])


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def near_dedup(
    records: list[RawFunctionRecord], threshold: float = 0.8, ngram: int = 5
) -> list[RawFunctionRecord]:
    """Keep one representative (first in stable order) per near-duplicate group.

    Groups are the transitive closure of pairs whose source-token shingle sets
    have Jaccard similarity >= threshold.
    """
    sets = [_shingles(source_tokens(r.source_text), ngram) for r in records]
    parent = list(range(len(records)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            if jaccard(sets[i], sets[j]) >= threshold:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    return [r for i, r in enumerate(records) if find(i) == i]


# ---------------------------------------------------------------------------
# external toolchain adapter


class ToolchainError(RuntimeError):
    """Toolchain is missing or misconfigured."""


class CompileError(RuntimeError):
    """One sample failed to compile or convert; the sample is dropped."""


@dataclass
class ToolchainConfig:
    cc: str
    wasm2text: str
    cc_args: tuple[str, ...] = ()
    wasm2text_args: tuple[str, ...] = ()
    timeout: float = 120.0

    @classmethod
    def resolve(cls, cc: str | None = None, wasm2text: str | None = None) -> "ToolchainConfig":
        cc = cc or os.environ.get("WASMREV_CC")
        wasm2text = wasm2text or os.environ.get("WASMREV_WASM2TEXT")
        if not cc or not wasm2text:
            raise ToolchainError(
                "toolchain not configured: pass --cc/--wasm2text or set "
                "WASMREV_CC and WASMREV_WASM2TEXT"
            )
        return cls(cc=cc, wasm2text=wasm2text)


def _run_tool(argv: list[str], timeout: float) -> None:
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=timeout)
    except FileNotFoundError as err:
        raise ToolchainError(f"tool not found: {argv[0]}") from err
    except subprocess.TimeoutExpired as err:
        raise CompileError(f"tool timed out: {' '.join(argv)}") from err
    if proc.returncode != 0:
        tail = proc.stderr.decode("utf-8", "replace").strip().splitlines()[-3:]
        raise CompileError(f"{argv[0]} failed (rc={proc.returncode}): {' | '.join(tail)}")


def compile_adapter(
    record: RawFunctionRecord, opt_level: str, toolchain: ToolchainConfig
) -> str:
    """Compile one source function to linear wasm text via external tools."""
    if opt_level not in OPT_LEVELS:
        raise ValueError(f"unknown opt_level {opt_level!r}")
    with tempfile.TemporaryDirectory(prefix="wasmrev-cc-") as tmp:
        src = os.path.join(tmp, "input.c")
        obj = os.path.join(tmp, "output.wasm")
        txt = os.path.join(tmp, "output.wat")
        with open(src, "w", encoding="utf-8") as fh:
            fh.write(record.source_text)
        _run_tool(
            [toolchain.cc, src, "-o", obj, f"-{opt_level}", *toolchain.cc_args],
            toolchain.timeout,
        )
        _run_tool(
            [toolchain.wasm2text, obj, "-o", txt, *toolchain.wasm2text_args],
            toolchain.timeout,
        )
        with open(txt, encoding="utf-8") as fh:
            text = fh.read()
    try:
        funcs = wat.extract_functions(text)
    except wat.WatParseError as err:
        raise CompileError(f"converter produced unparseable text: {err}") from err
    func = _pick_function(funcs, record.function_name)
    if func is None:
        raise CompileError(f"function {record.function_name!r} not found in module")
    return wat.render_function(func)


def _pick_function(funcs: list[wat.WatFunction], name: str) -> wat.WatFunction | None:
    wanted = name.lstrip("$")
    with_bodies = [f for f in funcs if f.body_lines]
    for f in with_bodies:
        if f.name_or_index.lstrip("$") == wanted:
            return f
    if len(with_bodies) == 1:
        return with_bodies[0]
    return None


def compile_records(
    records: list[RawFunctionRecord],
    opt_levels: tuple[str, ...],
    toolchain: ToolchainConfig,
    workers: int = 1,
) -> list[MultiModalSample]:
    """Compile every record at every optimization level, dropping failures."""
    jobs = [(rec, opt) for rec in records for opt in opt_levels]

    def one(job):
        rec, opt = job
        try:
            text = compile_adapter(rec, opt, toolchain)
        except CompileError as err:
            log.info("dropping %s/%s at %s: %s", rec.project_id, rec.function_name, opt, err)
            return None
        func = wat.extract_functions("(module\n" + text + "\n)")[0]
        tokens = wat.normalize_tokens(wat.segment_instructions(func))
        if not tokens:
            log.info("dropping %s/%s at %s: empty body", rec.project_id, rec.function_name, opt)
            return None
        return MultiModalSample(
            project_id=rec.project_id,
            doc_tokens=nl_word_tokens(truncate_doc(rec.doc_text)),
            source_tokens=source_tokens(rec.source_text),
            wasm_tokens=tokens,
            opt_level=opt,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    return [r for r in results if r is not None]


# ---------------------------------------------------------------------------
# project-granularity splitting


def split_by_project(
    samples: list[MultiModalSample],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> CorpusSplit:
    """Deterministic train/validation/test split at project granularity."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    projects: list[str] = []
    seen = set()
    for s in samples:
        if s.project_id not in seen:
            seen.add(s.project_id)
            projects.append(s.project_id)
    if len(projects) < 3:
        raise ValueError("need at least 3 projects for three non-empty splits")

    order = list(projects)
    random.Random(seed).shuffle(order)

    counts = _allocate(len(projects), ratios)
    train_p = set(order[: counts[0]])
    val_p = set(order[counts[0] : counts[0] + counts[1]])

    split = CorpusSplit(train=set(), validation=set(), test=set())
    for idx, s in enumerate(samples):
        if s.project_id in train_p:
            split.train.add(idx)
        elif s.project_id in val_p:
            split.validation.add(idx)
        else:
            split.test.add(idx)
    split.validate()
    return split


def _allocate(total: int, ratios: tuple[float, ...]) -> list[int]:
    """Largest-remainder allocation with at least one unit per bucket."""
    ideal = [r * total for r in ratios]
    counts = [int(x) for x in ideal]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (ideal[i] - counts[i], -i), reverse=True
    )
    for i in range(total - sum(counts)):
        counts[remainders[i % len(ratios)]] += 1
    for i, c in enumerate(counts):
        while counts[i] == 0:
            donor = max(range(len(counts)), key=lambda j: counts[j])
            counts[donor] -= 1
            counts[i] += 1
    return counts


# ---------------------------------------------------------------------------
# corpus persistence (line-delimited, fixed field order, UTF-8)


def save_corpus(samples: list[MultiModalSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            row = {
                "project_id": s.project_id,
                "doc": s.doc_tokens,
                "source": s.source_tokens,
                "wasm": s.wasm_tokens,
                "opt_level": s.opt_level,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_corpus(path: str) -> list[MultiModalSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                sample = MultiModalSample(
                    project_id=row["project_id"],
                    doc_tokens=list(row["doc"]),
                    source_tokens=list(row["source"]),
                    wasm_tokens=list(row["wasm"]),
                    opt_level=row["opt_level"],
                )
            except (KeyError, ValueError) as err:
                raise ValueError(f"{path}:{lineno}: corrupt corpus line ({err})") from err
            samples.append(sample)
    return samples


def save_split(split: CorpusSplit, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "train": sorted(split.train),
                "validation": sorted(split.validation),
                "test": sorted(split.test),
            },
            fh,
        )
        fh.write("\n")


def load_split(path: str) -> CorpusSplit:
    with open(path, encoding="utf-8") as fh:
        row = json.load(fh)
    return CorpusSplit(
        train=set(row["train"]), validation=set(row["validation"]), test=set(row["test"])
    )


# ---------------------------------------------------------------------------
# synthetic corpus
#
# Six template families with rng-driven knobs (operator, constants, names,
# doc phrasing). Each generated function yields a verbose (O0/O1) and a
# compact (O2..Oz) instruction stream so one source function appears with
# genuinely different code under different flags.

SYNTHETIC_FAMILIES = ("arith", "cmp", "scan", "fold", "blit", "mix")

_FUNCS_PER_PROJECT = 4

_ARITH_OPS = (
    ("add", "sum", "+"),
    ("sub", "difference", "-"),
    ("mul", "product", "*"),
    ("and", "bitwise and", "&"),
    ("or", "bitwise or", "|"),
    ("xor", "bitwise xor", "^"),
)

_DOC_VERBS = ("returns", "computes", "calculates")

_I32 = ["primitive", "int32"]
_CHARP = ["pointer", "primitive", "char"]
_I32P = ["pointer", "primitive", "int32"]


@dataclass
class _FunctionSpec:
    family: str
    name: str
    doc_tokens: list[str]
    source_tokens: list[str]
    verbose: list[Instruction]
    compact: list[Instruction]
    param_types: list[list[str]]
    return_type: list[str]

    def instructions(self, opt_level: str) -> list[Instruction]:
        return self.verbose if opt_level in ("O0", "O1") else self.compact


def _ins(op: str, *operands: str) -> Instruction:
    return Instruction(op, list(operands))


def _gen_arith(rng: random.Random, name: str) -> _FunctionSpec:
    opname, word, sym = _ARITH_OPS[rng.randrange(len(_ARITH_OPS))]
    verb = _DOC_VERBS[rng.randrange(len(_DOC_VERBS))]
    doc = f"{verb} the {word} of the two integer arguments ."
    src = f"int {name} ( int a , int b ) {{ return a {sym} b ; }}"
    op = f"i32.{opname}"
    compact = [_ins("local.get", "0"), _ins("local.get", "1"), _ins(op)]
    verbose = [
        _ins("local.get", "0"),
        _ins("local.set", "2"),
        _ins("local.get", "1"),
        _ins("local.set", "3"),
        _ins("local.get", "2"),
        _ins("local.get", "3"),
        _ins(op),
        _ins("return"),
    ]
    return _FunctionSpec(
        "arith", name, doc.split(), src.split(), verbose, compact, [_I32, _I32], _I32
    )


def _gen_cmp(rng: random.Random, name: str) -> _FunctionSpec:
    bigger = rng.random() < 0.5
    word = "larger" if bigger else "smaller"
    cmp_op = "i32.gt_s" if bigger else "i32.lt_s"
    sym = ">" if bigger else "<"
    verb = _DOC_VERBS[rng.randrange(len(_DOC_VERBS))]
    doc = f"{verb} the {word} of two signed integers ."
    src = f"int {name} ( int a , int b ) {{ return a {sym} b ? a : b ; }}"
    compact = [
        _ins("local.get", "0"),
        _ins("local.get", "1"),
        _ins("local.get", "0"),
        _ins("local.get", "1"),
        _ins(cmp_op),
        _ins("select"),
    ]
    verbose = [
        _ins("local.get", "0"),
        _ins("local.get", "1"),
        _ins(cmp_op),
        _ins("if", "(result i32)"),
        _ins("local.get", "0"),
        _ins("else"),
        _ins("local.get", "1"),
        _ins("end"),
        _ins("return"),
    ]
    return _FunctionSpec(
        "cmp", name, doc.split(), src.split(), verbose, compact, [_I32, _I32], _I32
    )


def _gen_scan(rng: random.Random, name: str) -> _FunctionSpec:
    thing = ("string", "buffer")[rng.randrange(2)]
    doc = f"computes the length of a zero terminated {thing} ."
    src = f"int {name} ( char * p ) {{ int n = 0 ; while ( p [ n ] ) n ++ ; return n ; }}"
    step = str(rng.choice((1, 1, 1, 2)))
    verbose = [
        _ins("i32.const", "0"),
        _ins("local.set", "1"),
        _ins("block"),
        _ins("loop"),
        _ins("local.get", "0"),
        _ins("local.get", "1"),
        _ins("i32.add"),
        _ins("i32.load8_u"),
        _ins("i32.eqz"),
        _ins("br_if", "1"),
        _ins("local.get", "1"),
        _ins("i32.const", step),
        _ins("i32.add"),
        _ins("local.set", "1"),
        _ins("br", "0"),
        _ins("end"),
        _ins("end"),
        _ins("local.get", "1"),
        _ins("return"),
    ]
    compact = [
        _ins("i32.const", "0"),
        _ins("local.set", "1"),
        _ins("loop"),
        _ins("local.get", "0"),
        _ins("local.get", "1"),
        _ins("i32.add"),
        _ins("i32.load8_u"),
        _ins("if"),
        _ins("local.get", "1"),
        _ins("i32.const", step),
        _ins("i32.add"),
        _ins("local.tee", "1"),
        _ins("drop"),
        _ins("br", "1"),
        _ins("end"),
        _ins("end"),
        _ins("local.get", "1"),
    ]
    return _FunctionSpec("scan", name, doc.split(), src.split(), verbose, compact, [_CHARP], _I32)


def _gen_fold(rng: random.Random, name: str) -> _FunctionSpec:
    word = ("sum", "total")[rng.randrange(2)]
    doc = f"computes the {word} of the values in an integer array ."
    src = (
        f"int {name} ( int * a , int n ) {{ int s = 0 ; "
        "for ( int i = 0 ; i < n ; i ++ ) s += a [ i ] ; return s ; }"
    )
    offset = rng.choice(("offset=0", "offset=4"))
    verbose = [
        _ins("i32.const", "0"),
        _ins("local.set", "2"),
        _ins("i32.const", "0"),
        _ins("local.set", "3"),
        _ins("block"),
        _ins("loop"),
        _ins("local.get", "3"),
        _ins("local.get", "1"),
        _ins("i32.ge_s"),
        _ins("br_if", "1"),
        _ins("local.get", "2"),
        _ins("local.get", "0"),
        _ins("local.get", "3"),
        _ins("i32.const", "2"),
        _ins("i32.shl"),
        _ins("i32.add"),
        _ins("i32.load", offset),
        _ins("i32.add"),
        _ins("local.set", "2"),
        _ins("local.get", "3"),
        _ins("i32.const", "1"),
        _ins("i32.add"),
        _ins("local.set", "3"),
        _ins("br", "0"),
        _ins("end"),
        _ins("end"),
        _ins("local.get", "2"),
        _ins("return"),
    ]
    compact = [
        _ins("i32.const", "0"),
        _ins("local.set", "2"),
        _ins("local.get", "1"),
        _ins("if"),
        _ins("loop"),
        _ins("local.get", "2"),
        _ins("local.get", "0"),
        _ins("i32.load", offset),
        _ins("i32.add"),
        _ins("local.set", "2"),
        _ins("local.get", "0"),
        _ins("i32.const", "4"),
        _ins("i32.add"),
        _ins("local.set", "0"),
        _ins("local.get", "1"),
        _ins("i32.const", "1"),
        _ins("i32.sub"),
        _ins("local.tee", "1"),
        _ins("br_if", "0"),
        _ins("end"),
        _ins("end"),
        _ins("local.get", "2"),
    ]
    return _FunctionSpec(
        "fold", name, doc.split(), src.split(), verbose, compact, [_I32P, _I32], _I32
    )


def _gen_blit(rng: random.Random, name: str) -> _FunctionSpec:
    doc = "copies a block of bytes from the source buffer to the destination ."
    src = (
        f"void {name} ( char * d , char * s , int n ) "
        "{ for ( int i = 0 ; i < n ; i ++ ) d [ i ] = s [ i ] ; }"
    )
    base = str(rng.choice((1048576, 65536 + rng.randrange(1, 1000), 131072)))
    verbose = [
        _ins("i32.const", "0"),
        _ins("local.set", "3"),
        _ins("block"),
        _ins("loop"),
        _ins("local.get", "3"),
        _ins("local.get", "2"),
        _ins("i32.ge_s"),
        _ins("br_if", "1"),
        _ins("local.get", "0"),
        _ins("local.get", "3"),
        _ins("i32.add"),
        _ins("local.get", "1"),
        _ins("local.get", "3"),
        _ins("i32.add"),
        _ins("i32.load8_u"),
        _ins("i32.store8"),
        _ins("local.get", "3"),
        _ins("i32.const", "1"),
        _ins("i32.add"),
        _ins("local.set", "3"),
        _ins("br", "0"),
        _ins("end"),
        _ins("end"),
        _ins("return"),
    ]
    compact = [
        _ins("local.get", "2"),
        _ins("i32.eqz"),
        _ins("if"),
        _ins("return"),
        _ins("end"),
        _ins("i32.const", base),
        _ins("local.set", "3"),
        _ins("loop"),
        _ins("local.get", "0"),
        _ins("local.get", "1"),
        _ins("i32.load8_u"),
        _ins("i32.store8"),
        _ins("local.get", "2"),
        _ins("i32.const", "1"),
        _ins("i32.sub"),
        _ins("local.tee", "2"),
        _ins("br_if", "0"),
        _ins("end"),
    ]
    return _FunctionSpec(
        "blit", name, doc.split(), src.split(), verbose, compact, [_CHARP, _CHARP, _I32], ["void"]
    )


def _gen_mix(rng: random.Random, name: str) -> _FunctionSpec:
    doc = "computes a hash value for the given integer seed ."
    big1 = str(rng.randrange(0x10000, 0x7FFFFFFF))
    big2 = "16777619"
    shift = str(rng.choice((5, 7, 13)))
    src = f"int {name} ( int x ) {{ return ( x ^ {big1} ) * {big2} >> {shift} ; }}"
    compact = [
        _ins("local.get", "0"),
        _ins("i32.const", big1),
        _ins("i32.xor"),
        _ins("i32.const", big2),
        _ins("i32.mul"),
        _ins("i32.const", shift),
        _ins("i32.shr_u"),
    ]
    verbose = [
        _ins("local.get", "0"),
        _ins("local.set", "1"),
        _ins("local.get", "1"),
        _ins("i32.const", big1),
        _ins("i32.xor"),
        _ins("local.set", "1"),
        _ins("local.get", "1"),
        _ins("i32.const", big2),
        _ins("i32.mul"),
        _ins("i32.const", shift),
        _ins("i32.shr_u"),
        _ins("return"),
    ]
    return _FunctionSpec("mix", name, doc.split(), src.split(), verbose, compact, [_I32], _I32)


_GENERATORS = {
    "arith": _gen_arith,
    "cmp": _gen_cmp,
    "scan": _gen_scan,
    "fold": _gen_fold,
    "blit": _gen_blit,
    "mix": _gen_mix,
}


def generate_function_specs(
    count: int, seed: int, families: tuple[str, ...] = SYNTHETIC_FAMILIES
) -> list[_FunctionSpec]:
    """Deterministic sequence of synthetic functions, cycling over families."""
    rng = random.Random(seed)
    specs = []
    for i in range(count):
        family = families[i % len(families)]
        specs.append(_GENERATORS[family](rng, f"{family}{i}"))
    return specs


def sample_family(sample: MultiModalSample) -> str:
    """Recover the template family from a synthetic sample's function name."""
    for tok in sample.source_tokens:
        m = re.fullmatch(r"([a-z]+)\d+", tok)
        if m and m.group(1) in SYNTHETIC_FAMILIES:
            return m.group(1)
    raise ValueError("not a synthetic sample")


def gen_synthetic_corpus(
    n: int, seed: int, families: tuple[str, ...] = SYNTHETIC_FAMILIES
) -> list[MultiModalSample]:
    """n mutually consistent (doc, source, wasm) triplets from templates.

    Functions are emitted in pairs of optimization-level variants so the
    corpus contains same-source samples under different flags.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed * 1000003 + 17)
    specs = generate_function_specs((n + 1) // 2, seed, families)
    samples: list[MultiModalSample] = []
    for i, spec in enumerate(specs):
        project = f"proj{i // _FUNCS_PER_PROJECT:03d}"
        verbose_opt = rng.choice(("O0", "O1"))
        compact_opt = rng.choice(("O2", "O3", "Os", "Oz"))
        for opt in (verbose_opt, compact_opt):
            if len(samples) == n:
                break
            sample = MultiModalSample(
                project_id=project,
                doc_tokens=list(spec.doc_tokens),
                source_tokens=list(spec.source_tokens),
                wasm_tokens=wat.normalize_tokens(spec.instructions(opt)),
                opt_level=opt,
            )
            sample.validate()
            samples.append(sample)
    return samples


def spec_to_wat_function(spec: _FunctionSpec, opt_level: str = "O2") -> wat.WatFunction:
    params = " ".join(["i32"] * len(spec.param_types))
    sig = f"(param {params})" if params else ""
    if spec.return_type != ["void"]:
        sig = (sig + " (result i32)").strip()
    return wat.WatFunction(
        name_or_index=f"${spec.name}",
        body_lines=[ins.text() for ins in spec.instructions(opt_level)],
        signature_text=sig,
    )


def render_synthetic_module(n_funcs: int, seed: int, opt_level: str = "O2") -> str:
    """A synthetic `.wat` module fixture with n_funcs template functions."""
    specs = generate_function_specs(n_funcs, seed)
    return wat.render_module([spec_to_wat_function(s, opt_level) for s in specs])
