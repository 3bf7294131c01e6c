"""Query-conditioned entity extraction with 2D span-probability decoding.

A desk-scale extraction stack: BPE subword tokenization with character
offset alignment, a small trainable transformer encoder (or ingestion of
precomputed embeddings), boundary-pointer and 2D span-matrix prediction
heads, a structural mask and thresholded candidate selection, a weighted
binary cross-entropy training objective, and strict-match micro/macro
evaluation. The ``span2d`` CLI wires it into train / eval / extract /
bpe-train workflows.
"""

__version__ = "0.1.0"

from .subword import MergeTable, TokenSeq, decode_span, encode, train_bpe
from .encoder import EncodedSeq, encode_seq, load_embeddings, write_embeddings
from .heads import HeadOutputs, forward as heads_forward, pointer_forward, twodp_forward
from .training import (
    GoldLabels,
    LossConfig,
    StructuralMask,
    bce,
    build_structural_mask,
    combined_loss,
    select_candidates,
    train,
)
from .inference import (
    DecodeConfig,
    EvalReport,
    SpanPrediction,
    decode_spans,
    decode_spans_1d,
    evaluate,
    to_entities,
)
from .model import Model, ModelConfig, init_model

__all__ = [
    "__version__",
    "MergeTable",
    "TokenSeq",
    "train_bpe",
    "encode",
    "decode_span",
    "EncodedSeq",
    "encode_seq",
    "load_embeddings",
    "write_embeddings",
    "HeadOutputs",
    "pointer_forward",
    "twodp_forward",
    "heads_forward",
    "StructuralMask",
    "GoldLabels",
    "LossConfig",
    "build_structural_mask",
    "select_candidates",
    "bce",
    "combined_loss",
    "train",
    "DecodeConfig",
    "SpanPrediction",
    "EvalReport",
    "decode_spans",
    "decode_spans_1d",
    "to_entities",
    "evaluate",
    "Model",
    "ModelConfig",
    "init_model",
]
