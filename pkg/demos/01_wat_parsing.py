"""Walk through the WebAssembly text-format front end.

Parses a module, linearizes folded bodies, segments instructions, and applies
token normalization (string literals -> [STR], large constants -> [ADDR]).
"""

from wasmrev import wat

MODULE = """
(module
  ;; folded form: operands are evaluated before the operator
  (func $checksum (param i32 i32) (result i32)
    (i32.add (i32.load offset=4 (local.get 0))
             (i32.const 1048576)))
  (func $pick (param i32 i32) (result i32)
    local.get 0
    local.get 1
    local.get 0
    local.get 1
    i32.gt_s
    select)
)
"""

functions = wat.extract_functions(MODULE)
print(f"module has {len(functions)} functions\n")

for func in functions:
    print(f"function {func.name_or_index}  {func.signature_text}")
    print("  linear body:")
    for line in func.body_lines:
        print(f"    {line}")
    instructions = wat.segment_instructions(func)
    print("  instructions (opcode / immediates):")
    for ins in instructions:
        print(f"    {ins.opcode:14s} {ins.operands}")
    print("  normalized tokens:")
    print(f"    {wat.normalize_tokens(instructions)}")
    print()

print("address-threshold boundary:")
for value in (65535, 65536, -70000):
    toks = wat.normalize_tokens([wat.Instruction("i32.const", [str(value)])])
    print(f"  i32.const {value:7d} -> {toks}")
