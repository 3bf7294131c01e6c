"""Per-position sequence encoding.

Two interchangeable sources for the representation matrix H and its
global [CLS] vector: a small trainable post-norm transformer (suitable
for overfitting desk-scale corpora on CPU) or verbatim ingestion of
precomputed embeddings from a binary file, for users who bring vectors
from a larger pretrained model. Loaded embeddings are treated as frozen;
the toy encoder is fine-tuned together with the heads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .subword import TokenSeq

__all__ = [
    "EncoderConfig",
    "EncodedSeq",
    "LayerParams",
    "ToyEncoderParams",
    "init_encoder",
    "encode_seq",
    "write_embeddings",
    "load_embeddings",
    "EMBEDDING_MAGIC",
]

EMBEDDING_MAGIC = b"S2DE"
EMBEDDING_VERSION = 1


@dataclass
class EncoderConfig:
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff: int = 128
    cap: int = 64
    vocab_size: int = 0
    dropout: float = 0.3

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} not divisible by n_heads={self.n_heads}")


@dataclass
class EncodedSeq:
    """Representation matrix H (l, d) with its global vector cls = H[0]."""

    H: object  # (l, d) ndarray, or a tape node during training
    cls: object  # (d,)
    l: int
    d: int

    @classmethod
    def from_matrix(cls, H: np.ndarray) -> "EncodedSeq":
        H = np.asarray(H, dtype=np.float64)
        if H.ndim != 2:
            raise ValueError(f"expected (l, d) matrix, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ValueError("encoded matrix contains non-finite values")
        return cls(H=H, cls=H[0], l=H.shape[0], d=H.shape[1])


@dataclass
class LayerParams:
    Wq: np.ndarray
    bq: np.ndarray
    Wk: np.ndarray
    bk: np.ndarray
    Wv: np.ndarray
    bv: np.ndarray
    Wo: np.ndarray
    bo: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass
class ToyEncoderParams:
    config: EncoderConfig
    emb: np.ndarray  # (vocab, d) piece embeddings
    pos: np.ndarray  # (cap, d) learned position embeddings
    layers: list[LayerParams] = field(default_factory=list)


def _uniform(rng: np.random.Generator, rows: int, cols: int, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(rows, cols))


def init_encoder(rng: np.random.Generator, cfg: EncoderConfig) -> ToyEncoderParams:
    """Uniform +-1/sqrt(d) matrices, zero biases, unit layer-norm gains."""
    d, ff = cfg.d, cfg.ff
    s = 1.0 / np.sqrt(d)
    layers = []
    for _ in range(cfg.n_layers):
        layers.append(
            LayerParams(
                Wq=_uniform(rng, d, d, s), bq=np.zeros(d),
                Wk=_uniform(rng, d, d, s), bk=np.zeros(d),
                Wv=_uniform(rng, d, d, s), bv=np.zeros(d),
                Wo=_uniform(rng, d, d, s), bo=np.zeros(d),
                ln1_g=np.ones(d), ln1_b=np.zeros(d),
                W1=_uniform(rng, ff, d, s), b1=np.zeros(ff),
                W2=_uniform(rng, d, ff, 1.0 / np.sqrt(ff)), b2=np.zeros(d),
                ln2_g=np.ones(d), ln2_b=np.zeros(d),
            )
        )
    return ToyEncoderParams(
        config=cfg,
        emb=_uniform(rng, cfg.vocab_size, d, s),
        pos=_uniform(rng, cfg.cap, d, s),
        layers=layers,
    )


def _layer_norm(x, gain, bias, eps: float = 1e-5):
    mu = nk.mean_rows(x)
    centered = x - mu
    var = nk.mean_rows(centered * centered)
    inv = nk.power(var + eps, -0.5)
    return centered * inv * gain + bias


def _attention(x, p: LayerParams, n_heads: int, d: int):
    q = nk.affine(x, p.Wq, p.bq)
    k = nk.affine(x, p.Wk, p.bk)
    v = nk.affine(x, p.Wv, p.bv)
    dh = d // n_heads
    scale = 1.0 / np.sqrt(dh)
    ctx_parts = []
    for h in range(n_heads):
        j0, j1 = h * dh, (h + 1) * dh
        qh = nk.slice_cols(q, j0, j1)
        kh = nk.slice_cols(k, j0, j1)
        vh = nk.slice_cols(v, j0, j1)
        scores = nk.matmul(qh, nk.transpose(kh)) * scale
        weights = nk.softmax_rows(scores)
        ctx_parts.append(nk.matmul(weights, vh))
    ctx = ctx_parts[0] if n_heads == 1 else nk.concat_cols(ctx_parts)
    return nk.affine(ctx, p.Wo, p.bo)


def encode_seq(
    params: ToyEncoderParams,
    seq: TokenSeq,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
    node_params: ToyEncoderParams | None = None,
) -> EncodedSeq:
    """Run the transformer stack over a token sequence.

    Returns the last layer's output as H with cls = H[0]. Deterministic
    in inference mode; dropout (on the embedding sum) is applied only
    when ``training`` is set and an ``rng`` is supplied. When
    ``node_params`` is given, the forward runs on those tape nodes and a
    gradient can be taken; otherwise it runs on raw arrays.
    """
    cfg = params.config
    ids = np.asarray(seq.ids, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("empty token sequence")
    if ids.max() >= cfg.vocab_size or ids.min() < 0:
        raise ValueError(
            f"piece id {int(ids.max())} out of range for vocab size {cfg.vocab_size}"
        )
    l = len(ids)
    if l > cfg.cap:
        raise ValueError(f"sequence length {l} exceeds cap {cfg.cap}")

    p = node_params if node_params is not None else params
    x = nk.gather_rows(p.emb, ids) + nk.gather_rows(p.pos, np.arange(l))
    if training:
        x = nk.dropout(x, cfg.dropout, rng)
    for layer in p.layers:
        x = _layer_norm(x + _attention(x, layer, cfg.n_heads, cfg.d), layer.ln1_g, layer.ln1_b)
        ff = nk.affine(nk.gelu_approx(nk.affine(x, layer.W1, layer.b1)), layer.W2, layer.b2)
        x = _layer_norm(x + ff, layer.ln2_g, layer.ln2_b)
    cls = nk.take_row(x, 0)
    return EncodedSeq(H=x, cls=cls, l=l, d=cfg.d)


def write_embeddings(path, H: np.ndarray) -> None:
    """Store an (l, d) matrix as little-endian float32 rows."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise ValueError(f"expected (l, d) matrix, got shape {H.shape}")
    l, d = H.shape
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<III", EMBEDDING_VERSION, l, d))
        fh.write(H.astype("<f4").tobytes(order="C"))


def load_embeddings(path, seq: TokenSeq, expected_d: int | None = None) -> EncodedSeq:
    """Read stored vectors for ``seq``, widened to float64.

    The file's sequence length must match ``seq`` exactly, and its width
    must match ``expected_d`` when one is given. cls is row 0, as for
    the trainable encoder.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDING_MAGIC:
            raise ValueError(f"bad embedding file magic: {magic!r}")
        version, l, d = struct.unpack("<III", fh.read(12))
        if version != EMBEDDING_VERSION:
            raise ValueError(f"unsupported embedding file version {version}")
        payload = fh.read()
    expected = l * d * 4
    if len(payload) != expected:
        raise ValueError(f"truncated embedding file: expected {expected} payload bytes, found {len(payload)}")
    if l != len(seq):
        raise ValueError(f"embedding length mismatch: expected l={len(seq)}, file has l={l}")
    if expected_d is not None and d != expected_d:
        raise ValueError(f"embedding width mismatch: expected d={expected_d}, file has d={d}")
    H = np.frombuffer(payload, dtype="<f4").reshape(l, d).astype(np.float64)
    return EncodedSeq.from_matrix(H)
