"""Multi-modal representation learning toolkit for WebAssembly reverse engineering.

The package covers the full workflow: corpus construction (compilation
driving, dedup, project-granularity splits), wasm text parsing and token
normalization, a shared multi-modal vocabulary, three self-supervised
pre-training objectives over a from-scratch Transformer encoder with exact
gradients, and three fine-tuned downstream tools (purpose identification,
type recovery, summarization) with their evaluation metrics.
"""

from .corpus import (
    CorpusSplit,
    MultiModalSample,
    RawFunctionRecord,
    ToolchainConfig,
    gen_synthetic_corpus,
    near_dedup,
    split_by_project,
    truncate_doc,
)
from .decoder import DecoderConfig, beam_search, decode_step
from .metrics import bleu4, classification_metrics, topk_exact_match, type_prefix_score
from .model import EncoderConfig, Parameters, gradients, load_checkpoint, save_checkpoint
from .pretrain import M3LMBatch, PairKind, RIIBatch, SSIBatch, corrupt_m3lm, swap_rii
from .tokenizer import EncodedInput, Vocabulary, decode, encode_multimodal
from .training import AdamState, TrainConfig, adam_step, finetune_loop, pretrain_loop
from .wat import (
    Instruction,
    WatFunction,
    extract_functions,
    normalize_tokens,
    segment_instructions,
)

__version__ = "0.1.0"
