"""WebAssembly text format: function extraction, instruction segmentation, normalization.

Works on `.wat` text only; decoding binary `.wasm` is left to an external
converter (see `wasmrev.corpus.compile_adapter`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# Constants whose magnitude exceeds this are treated as likely addresses.
ADDR_THRESHOLD = 0xFFFF

STR_TOKEN = "[STR]"
ADDR_TOKEN = "[ADDR]"

_INT_RE = re.compile(r"[+-]?(?:0[xX][0-9a-fA-F][0-9a-fA-F_]*|\d[\d_]*)\Z")
_FLOATISH_RE = re.compile(
    r"[+-]?(?:\d[\d_]*\.[\d_]*(?:[eE][+-]?\d+)?"
    r"|\d[\d_]*[eE][+-]?\d+"
    r"|0[xX][0-9a-fA-F_]*\.?[0-9a-fA-F_]*[pP][+-]?\d+"
    r"|inf|nan(?::0[xX][0-9a-fA-F]+)?)\Z"
)


class WatParseError(ValueError):
    """Malformed text-format input; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Instruction:
    opcode: str
    operands: list[str] = field(default_factory=list)

    def tokens(self) -> list[str]:
        return [self.opcode, *self.operands]

    def text(self) -> str:
        return " ".join(self.tokens())


@dataclass
class WatFunction:
    name_or_index: str
    body_lines: list[str]
    signature_text: str


# ---------------------------------------------------------------------------
# s-expression reader


def _tokenize(text: str):
    """Yield (token, line) pairs; strips ;; line comments and (; ;) block comments."""
    i, line, n = 0, 1, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch in " \t\r":
            i += 1
        elif text.startswith(";;", i):
            j = text.find("\n", i)
            i = n if j < 0 else j
        elif text.startswith("(;", i):
            depth, i = 1, i + 2
            while i < n and depth:
                if text.startswith("(;", i):
                    depth, i = depth + 1, i + 2
                elif text.startswith(";)", i):
                    depth, i = depth - 1, i + 2
                else:
                    line += text[i] == "\n"
                    i += 1
            if depth:
                raise WatParseError("unterminated block comment", line)
        elif ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            if j >= n:
                raise WatParseError("unterminated string literal", line)
            yield text[i : j + 1], line
            i = j + 1
        elif ch in "()":
            yield ch, line
            i += 1
        else:
            j = i
            while j < n and text[j] not in ' \t\r\n();"':
                j += 1
            yield text[i:j], line
            i = j

    yield None, line  # sentinel carrying the final line number


def parse_sexprs(text: str) -> list:
    """Parse wat text into nested lists of atom strings."""
    stack: list[list] = [[]]
    open_lines: list[int] = []
    for tok, line in _tokenize(text):
        if tok is None:
            if open_lines:
                raise WatParseError("unbalanced '('", open_lines[-1])
            return stack[0]
        if tok == "(":
            stack.append([])
            open_lines.append(line)
        elif tok == ")":
            if not open_lines:
                raise WatParseError("unbalanced ')'", line)
            form = stack.pop()
            open_lines.pop()
            stack[-1].append(form)
        else:
            stack[-1].append(tok)
    raise AssertionError("tokenizer did not emit sentinel")


# ---------------------------------------------------------------------------
# function extraction and linearization

_SIG_CLAUSES = ("param", "result")
_SKIP_CLAUSES = ("export", "import", "type")


def _is_operand_atom(tok: str) -> bool:
    """Immediate operands: numbers, $ids, mem args, strings, inline clauses,
    and normalization placeholders such as [ADDR]."""
    return (
        tok.startswith(("$", '"', "offset=", "align=", "(", "["))
        or _INT_RE.match(tok) is not None
        or _FLOATISH_RE.match(tok) is not None
    )


def _clause_token(form: list) -> str:
    """Render an inline clause such as (result i32) as a single operand token."""
    return "(" + " ".join(_clause_token(f) if isinstance(f, list) else f for f in form) + ")"


def _unfold(form: list, out: list[Instruction]) -> None:
    """Flatten one folded instruction form into `out` in stack evaluation order."""
    head = form[0]
    immediates: list[str] = []
    children: list[list] = []
    rest = form[1:]
    # `if` keeps its folded condition/then/else structure
    if head == "if":
        then_form = else_form = None
        cond_forms: list[list] = []
        for item in rest:
            if isinstance(item, list) and item and item[0] == "then":
                then_form = item
            elif isinstance(item, list) and item and item[0] == "else":
                else_form = item
            elif isinstance(item, list) and item and item[0] in _SIG_CLAUSES:
                immediates.append(_clause_token(item))
            elif isinstance(item, list):
                cond_forms.append(item)
            else:
                immediates.append(item)
        for sub in cond_forms:
            _unfold(sub, out)
        out.append(Instruction("if", immediates))
        if then_form is not None:
            _unfold_body(then_form[1:], out)
        if else_form is not None and len(else_form) > 1:
            out.append(Instruction("else", []))
            _unfold_body(else_form[1:], out)
        out.append(Instruction("end", []))
        return

    for item in rest:
        if isinstance(item, list):
            if item and item[0] in _SIG_CLAUSES + ("type",):
                immediates.append(_clause_token(item))
            else:
                children.append(item)
        else:
            immediates.append(item)

    if head in ("block", "loop"):
        out.append(Instruction(head, immediates))
        for sub in children:
            _unfold(sub, out)
        out.append(Instruction("end", []))
    else:
        # plain folded op: operands are evaluated first (post-order)
        for sub in children:
            _unfold(sub, out)
        out.append(Instruction(head, immediates))


def _unfold_body(items: list, out: list[Instruction]) -> None:
    """Linearize a mixed sequence of plain atoms and folded sub-forms."""
    pending: Instruction | None = None
    for item in items:
        if isinstance(item, list):
            if pending is not None:
                out.append(pending)
                pending = None
            if item and isinstance(item[0], str):
                if item[0] in _SIG_CLAUSES + ("type",):
                    # inline clause attached to the preceding structured opcode
                    if out and out[-1].opcode in ("block", "loop", "if", "select", "call_indirect"):
                        out[-1].operands.append(_clause_token(item))
                    continue
                _unfold(item, out)
        elif pending is None:
            pending = Instruction(item, [])
        elif _is_operand_atom(item):
            pending.operands.append(item)
        else:
            out.append(pending)
            pending = Instruction(item, [])
    if pending is not None:
        out.append(pending)


def _iter_func_forms(forms: list):
    for form in forms:
        if isinstance(form, list):
            if form and form[0] == "func":
                yield form
            else:
                yield from _iter_func_forms(form)


def extract_functions(wat: str) -> list[WatFunction]:
    """One WatFunction per ``(func ...)`` form, bodies linearized."""
    forms = parse_sexprs(wat)
    functions = []
    for index, form in enumerate(_iter_func_forms(forms)):
        rest = form[1:]
        name = f"{index}"
        if rest and isinstance(rest[0], str) and rest[0].startswith("$"):
            name = rest[0]
            rest = rest[1:]
        sig_parts: list[str] = []
        body_items: list = []
        in_header = True
        for item in rest:
            head = item[0] if isinstance(item, list) and item else None
            if in_header and head in _SIG_CLAUSES:
                sig_parts.append(_clause_token(item))
                continue
            if in_header and head in _SKIP_CLAUSES + ("local",):
                continue
            in_header = False
            body_items.append(item)
        instrs: list[Instruction] = []
        _unfold_body(body_items, instrs)
        functions.append(
            WatFunction(
                name_or_index=name,
                body_lines=[ins.text() for ins in instrs],
                signature_text=" ".join(sig_parts),
            )
        )
    return functions


def segment_instructions(func: WatFunction) -> list[Instruction]:
    """Split linear body lines into opcode + immediate-operand groups."""
    instructions = []
    for raw in func.body_lines:
        for ins in _segment_line(raw):
            instructions.append(ins)
    return instructions


def segment_token_stream(tokens: list[str]) -> list[Instruction]:
    """Recover instruction boundaries from a flattened (normalized) stream."""
    out: list[Instruction] = []
    for tok in tokens:
        if out and _is_operand_atom(tok):
            out[-1].operands.append(tok)
        else:
            out.append(Instruction(tok, []))
    return out


def _segment_line(raw: str) -> list[Instruction]:
    toks = _line_tokens(raw)
    out: list[Instruction] = []
    for tok in toks:
        if out and _is_operand_atom(tok):
            out[-1].operands.append(tok)
        else:
            out.append(Instruction(tok, []))
    return out


def _line_tokens(raw: str) -> list[str]:
    """Whitespace split that keeps quoted strings and (...) clauses intact."""
    toks, i, n = [], 0, len(raw)
    while i < n:
        ch = raw[i]
        if ch.isspace():
            i += 1
        elif ch == '"':
            j = i + 1
            while j < n and raw[j] != '"':
                j += 2 if raw[j] == "\\" else 1
            toks.append(raw[i : j + 1])
            i = j + 1
        elif ch == "(":
            depth, j = 1, i + 1
            while j < n and depth:
                depth += raw[j] == "("
                depth -= raw[j] == ")"
                j += 1
            toks.append(raw[i:j])
            i = j
        else:
            j = i
            while j < n and not raw[j].isspace() and raw[j] != '"':
                j += 1
            toks.append(raw[i:j])
            i = j
    return toks


# ---------------------------------------------------------------------------
# token normalization


def _int_literal_value(tok: str) -> int | None:
    if _INT_RE.match(tok) is None:
        return None
    return int(tok.replace("_", ""), 0)


def _normalize_operand(opcode: str, operand: str) -> str:
    if operand.startswith('"'):
        return STR_TOKEN
    if opcode in ("i32.const", "i64.const"):
        value = _int_literal_value(operand)
        if value is not None and abs(value) > ADDR_THRESHOLD:
            return ADDR_TOKEN
    if operand.startswith("offset="):
        value = _int_literal_value(operand[len("offset=") :])
        if value is not None and abs(value) > ADDR_THRESHOLD:
            return "offset=" + ADDR_TOKEN
    return operand


def normalize_instructions(instrs: list[Instruction]) -> list[Instruction]:
    """String literals -> [STR]; const/offset immediates beyond 0xffff -> [ADDR]."""
    return [
        Instruction(ins.opcode, [_normalize_operand(ins.opcode, op) for op in ins.operands])
        for ins in instrs
    ]


def normalize_tokens(instrs: list[Instruction]) -> list[str]:
    """Flattened normalized token stream; opcodes are never rewritten."""
    out: list[str] = []
    for ins in normalize_instructions(instrs):
        out.extend(ins.tokens())
    return out


# ---------------------------------------------------------------------------
# rendering (round-trip support and fixtures)


def render_function(func: WatFunction) -> str:
    sig = f" {func.signature_text}" if func.signature_text else ""
    name = func.name_or_index if func.name_or_index.startswith("$") else ""
    head = f"  (func {name}{sig}".rstrip() if name else f"  (func{sig}".rstrip()
    lines = [head] + [f"    {line}" for line in func.body_lines]
    return "\n".join(lines) + ")"


def render_module(funcs: list[WatFunction]) -> str:
    body = "\n".join(render_function(f) for f in funcs)
    return f"(module\n{body}\n)" if funcs else "(module)"
