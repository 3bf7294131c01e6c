"""Model bundle: tokenizer + encoder + heads behind one object.

Parameters live in nested dataclasses; ``iter_arrays`` flattens them to
canonical dotted names for the optimizer, checkpoints, and gradient
checks, and ``map_arrays`` rebuilds the same structure with substituted
values (tape nodes during training, loaded tensors from a checkpoint).
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .encoder import EncoderConfig, EncodedSeq, ToyEncoderParams, encode_seq, init_encoder
from .heads import HeadOutputs, HeadsParams, forward as heads_forward, init_heads
from .inference import DecodeConfig, decode_spans, decode_spans_1d
from .subword import MergeTable, TokenSeq, merges_to_lines
from .training import (
    MaskedSelection,
    StructuralMask,
    build_structural_mask,
    mask_boundary,
    mask_matrix,
    select_candidates,
)

__all__ = ["ModelConfig", "Model", "BoundParams", "init_model", "iter_arrays", "map_arrays"]


def iter_arrays(obj, prefix: str = ""):
    """Yield (dotted name, ndarray) for every array in a parameter tree."""
    if isinstance(obj, np.ndarray):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, (np.ndarray, list)) or dataclasses.is_dataclass(value):
                yield from iter_arrays(value, f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, list):
        for k, item in enumerate(obj):
            yield from iter_arrays(item, f"{prefix}.{k}")


def map_arrays(obj, fn, prefix: str = ""):
    """Rebuild a parameter tree, replacing each array with fn(name, array).

    Non-array dataclass fields (configs, flags) are carried over as-is.
    """
    if isinstance(obj, np.ndarray):
        return fn(prefix, obj)
    if dataclasses.is_dataclass(obj):
        changes = {}
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, (np.ndarray, list)) or dataclasses.is_dataclass(value):
                name = f"{prefix}.{f.name}" if prefix else f.name
                changes[f.name] = map_arrays(value, fn, name)
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, list):
        return [map_arrays(item, fn, f"{prefix}.{k}") for k, item in enumerate(obj)]
    return obj


@dataclass
class ModelConfig:
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff: int = 128
    cap: int = 64
    dropout: float = 0.3
    interactive: bool = True
    use_2dp: bool = True
    t_train: float = 0.5

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            d=self.d,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ff=self.ff,
            cap=self.cap,
            vocab_size=vocab_size,
            dropout=self.dropout,
        )


@dataclass
class BoundParams:
    encoder: ToyEncoderParams
    heads: HeadsParams


@dataclass
class ExtractionResult:
    spans: list  # (start_piece, end_piece, score)
    outputs: HeadOutputs  # masked s, e, m plus raw interaction matrix
    mask: StructuralMask
    selection: MaskedSelection | None


class Model:
    """A trained (or trainable) extraction model plus its tokenizer."""

    def __init__(self, config: ModelConfig, table: MergeTable,
                 encoder: ToyEncoderParams, heads: HeadsParams):
        self.config = config
        self.table = table
        self.encoder = encoder
        self.heads = heads

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = dict(iter_arrays(self.encoder, "encoder"))
        out.update(iter_arrays(self.heads, "heads"))
        return out

    def bind(self, tape: nk.GradTape) -> BoundParams:
        """Register every parameter on a tape and return node-valued copies."""
        enc = map_arrays(self.encoder, lambda n, a: tape.param(n, a), "encoder")
        hds = map_arrays(self.heads, lambda n, a: tape.param(n, a), "heads")
        return BoundParams(encoder=enc, heads=hds)

    def load_param_values(self, values: dict[str, np.ndarray]) -> None:
        """Replace parameters from a flat name -> array mapping."""
        own = self.params()
        if set(own) != set(values):
            missing = sorted(set(own) - set(values))
            extra = sorted(set(values) - set(own))
            raise ValueError(f"parameter name mismatch: missing={missing}, unexpected={extra}")
        for name, arr in own.items():
            new = np.asarray(values[name], dtype=np.float64)
            if new.shape != arr.shape:
                raise ValueError(
                    f"shape mismatch for {name}: expected {arr.shape}, found {new.shape}"
                )
            arr[...] = new

    def vocab_hash(self) -> str:
        payload = "\n".join(merges_to_lines(self.table)).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    # -- forward ------------------------------------------------------------

    def forward(self, seq: TokenSeq, *, training: bool = False,
                rng: np.random.Generator | None = None,
                bound: BoundParams | None = None,
                enc: EncodedSeq | None = None) -> HeadOutputs:
        """Encode a sequence and run the heads.

        ``enc`` short-circuits the encoder with externally supplied
        vectors (they are treated as frozen). During training a dropout
        mask is applied to H before the heads.
        """
        if enc is None:
            enc = encode_seq(
                self.encoder,
                seq,
                training=training,
                rng=rng,
                node_params=bound.encoder if bound is not None else None,
            )
        if training and self.config.dropout > 0 and rng is not None:
            H = nk.dropout(enc.H, self.config.dropout, rng)
            enc = EncodedSeq(H=H, cls=nk.take_row(H, 0), l=enc.l, d=enc.d)
        return heads_forward(enc, bound.heads if bound is not None else self.heads)

    def extract(self, seq: TokenSeq, decode_cfg: DecodeConfig,
                enc: EncodedSeq | None = None) -> ExtractionResult:
        """Inference pipeline: forward, mask, select, decode.

        With the 2D head active, candidate boundaries are selected at the
        training threshold and the screened cells are then decoded at
        ``decode_cfg.t_eval``; with the head ablated, the 1D fallback
        matcher runs directly at ``decode_cfg.t_eval``.
        """
        out = self.forward(seq, training=False, enc=enc)
        mask = build_structural_mask(seq)
        s = mask_boundary(out.s, mask)
        e = mask_boundary(out.e, mask)
        if out.m is not None:
            m = mask_matrix(out.m, mask)
            selection = select_candidates(s, e, m, self.config.t_train, mask, gold=None)
            spans = decode_spans(selection, decode_cfg)
        else:
            m = None
            selection = None
            pairs = decode_spans_1d(s, e, decode_cfg.t_eval, mask)
            spans = [(i, j, float(min(s[i], e[j]))) for i, j in pairs]
        masked = HeadOutputs(s=s, e=e, m=m, attention=out.attention)
        return ExtractionResult(spans=spans, outputs=masked, mask=mask, selection=selection)


def init_model(rng: np.random.Generator, table: MergeTable, config: ModelConfig) -> Model:
    enc_cfg = config.encoder_config(table.vocab_size)
    return Model(
        config=config,
        table=table,
        encoder=init_encoder(rng, enc_cfg),
        heads=init_heads(rng, config.d, interactive=config.interactive, use_2dp=config.use_2dp),
    )
