"""Boundary-pointer and 2D span-matrix prediction heads.

The pointer head scores each position as a span start (or end)
probability; the 2D head scores every (start, end) coordinate pair in
one l-by-l matrix through a gated mixture of the raw representation and
a learned transform. Both heads blend a global-vector interaction term
with plain per-position linear terms and normalize through ``talu``, so
every output lies strictly in (0, 1).

Ablation variants swap the interaction terms for a single linear layer
over concatenated position and global vectors (pointer: [H_i ; cls],
2D head: [H_i ; H_j ; cls]), or drop the 2D head entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .encoder import EncodedSeq

__all__ = [
    "PointerParams",
    "ConcatPointerParams",
    "TwoDPParams",
    "ConcatTwoDPParams",
    "HeadsParams",
    "HeadOutputs",
    "init_pointer",
    "init_twodp",
    "init_heads",
    "pointer_forward",
    "pointer_forward_concat",
    "twodp_forward",
    "twodp_forward_concat",
    "forward",
]


@dataclass
class PointerParams:
    """One boundary head: a d->d transform for the global-interaction
    term plus a d->1 compression for the per-position term."""

    W: np.ndarray  # (d, d)
    b_w: np.ndarray  # (d,)
    v: np.ndarray  # (d,)
    b_v: np.ndarray  # scalar, stored as shape-() array


@dataclass
class ConcatPointerParams:
    """Ablated boundary head: one linear layer over [H_i ; cls]."""

    w_pos: np.ndarray  # (d,)
    w_cls: np.ndarray  # (d,)
    b: np.ndarray  # ()


@dataclass
class TwoDPParams:
    W_g: np.ndarray  # (d, d) gate transform
    b_g: np.ndarray
    W_2D: np.ndarray  # (d, d) pair transform
    b_2D: np.ndarray
    v_row: np.ndarray  # (d,)
    b_row: np.ndarray  # ()
    v_col: np.ndarray  # (d,)
    b_col: np.ndarray  # ()


@dataclass
class ConcatTwoDPParams:
    """Ablated 2D head: one linear layer over [H_i ; H_j ; cls]."""

    w_start: np.ndarray  # (d,)
    w_end: np.ndarray  # (d,)
    w_cls: np.ndarray  # (d,)
    b: np.ndarray  # ()


@dataclass
class HeadsParams:
    """Parameter bundle for the active head configuration."""

    interactive: bool
    use_2dp: bool
    start: object
    end: object
    twodp: object | None

    def validate(self) -> None:
        want_ptr = PointerParams if self.interactive else ConcatPointerParams
        for name, p in (("start", self.start), ("end", self.end)):
            if not isinstance(p, want_ptr):
                raise ValueError(
                    f"{name} head params are {type(p).__name__}, "
                    f"but interactive={self.interactive} requires {want_ptr.__name__}"
                )
        if self.use_2dp:
            want_2d = TwoDPParams if self.interactive else ConcatTwoDPParams
            if not isinstance(self.twodp, want_2d):
                raise ValueError(
                    f"2D head params are {type(self.twodp).__name__}, "
                    f"but this configuration requires {want_2d.__name__}"
                )
        elif self.twodp is not None:
            raise ValueError("2D head params supplied but use_2dp is off")


@dataclass
class HeadOutputs:
    """Raw (pre-mask) head outputs: start/end vectors, the 2D matrix,
    and the pairwise interaction matrix when the full 2D head ran."""

    s: object  # (l,)
    e: object  # (l,)
    m: object | None  # (l, l) or None when the 2D head is ablated
    attention: object | None  # (l, l) pairwise interaction term, if any


def init_pointer(rng: np.random.Generator, d: int) -> PointerParams:
    s = 1.0 / np.sqrt(d)
    return PointerParams(
        W=rng.uniform(-s, s, size=(d, d)),
        b_w=np.zeros(d),
        v=rng.uniform(-s, s, size=d),
        b_v=np.zeros(()),
    )


def init_twodp(rng: np.random.Generator, d: int) -> TwoDPParams:
    s = 1.0 / np.sqrt(d)
    return TwoDPParams(
        W_g=rng.uniform(-s, s, size=(d, d)),
        b_g=np.zeros(d),
        W_2D=rng.uniform(-s, s, size=(d, d)),
        b_2D=np.zeros(d),
        v_row=rng.uniform(-s, s, size=d),
        b_row=np.zeros(()),
        v_col=rng.uniform(-s, s, size=d),
        b_col=np.zeros(()),
    )


def _init_concat_pointer(rng: np.random.Generator, d: int) -> ConcatPointerParams:
    s = 1.0 / np.sqrt(d)
    return ConcatPointerParams(
        w_pos=rng.uniform(-s, s, size=d),
        w_cls=rng.uniform(-s, s, size=d),
        b=np.zeros(()),
    )


def _init_concat_twodp(rng: np.random.Generator, d: int) -> ConcatTwoDPParams:
    s = 1.0 / np.sqrt(d)
    return ConcatTwoDPParams(
        w_start=rng.uniform(-s, s, size=d),
        w_end=rng.uniform(-s, s, size=d),
        w_cls=rng.uniform(-s, s, size=d),
        b=np.zeros(()),
    )


def init_heads(
    rng: np.random.Generator, d: int, interactive: bool = True, use_2dp: bool = True
) -> HeadsParams:
    if interactive:
        start, end = init_pointer(rng, d), init_pointer(rng, d)
        twodp = init_twodp(rng, d) if use_2dp else None
    else:
        start, end = _init_concat_pointer(rng, d), _init_concat_pointer(rng, d)
        twodp = _init_concat_twodp(rng, d) if use_2dp else None
    return HeadsParams(interactive=interactive, use_2dp=use_2dp, start=start, end=end, twodp=twodp)


def pointer_forward(enc: EncodedSeq, params: PointerParams):
    """Boundary probabilities: mean of the global-interaction term
    talu(gelu(H W^T + b) . cls) and the compression term talu(H v + b)."""
    H, cls = enc.H, enc.cls
    h = nk.gelu_approx(nk.affine(H, params.W, params.b_w))
    p_h = nk.talu(nk.matvec(h, cls))
    p_c = nk.talu(nk.matvec(H, params.v) + params.b_v)
    return (p_h + p_c) / 2.0


def pointer_forward_concat(enc: EncodedSeq, params: ConcatPointerParams):
    """Interaction-ablated boundary head: talu of a single linear layer
    over the concatenation of each position vector with cls."""
    H, cls = enc.H, enc.cls
    z = nk.matvec(H, params.w_pos) + nk.dot(cls, params.w_cls) + params.b
    return nk.talu(z)


def twodp_forward(enc: EncodedSeq, params: TwoDPParams):
    """The 2D coordinate matrix, with its pairwise interaction term.

    Gate and pair transforms of H are blended (gate * H + (1-gate) *
    pair) and scored against the pair transform for the interaction
    matrix; a global term and per-row/per-column linear terms are
    broadcast to full matrices; the output is the mean of the four.
    Returns (m, interaction_matrix).
    """
    H, cls = enc.H, enc.cls
    h_gate = nk.gelu_approx(nk.affine(H, params.W_g, params.b_g))
    h_pair = nk.gelu_approx(nk.affine(H, params.W_2D, params.b_2D))
    gate = nk.logistic(h_gate)
    h_mix = gate * H + (1.0 - gate) * h_pair
    m_pair = nk.talu(nk.matmul(h_pair, nk.transpose(h_mix)))
    glob = nk.talu(nk.matvec(h_gate + h_pair, cls))
    m_glob = nk.col_plus_row(glob, glob) / 2.0
    rows = nk.talu(nk.matvec(h_gate, params.v_row) + params.b_row)
    cols = nk.talu(nk.matvec(h_gate, params.v_col) + params.b_col)
    zeros = np.zeros(enc.l)
    m_rows = nk.col_plus_row(rows, zeros)
    m_cols = nk.col_plus_row(zeros, cols)
    m = (m_pair + m_glob + m_rows + m_cols) / 4.0
    return m, m_pair


def twodp_forward_concat(enc: EncodedSeq, params: ConcatTwoDPParams):
    """Interaction-ablated 2D head: talu of one linear layer over
    [H_i ; H_j ; cls] per cell, computed by broadcasting."""
    H, cls = enc.H, enc.cls
    row_term = nk.matvec(H, params.w_start)
    col_term = nk.matvec(H, params.w_end)
    z = nk.col_plus_row(row_term, col_term) + (nk.dot(cls, params.w_cls) + params.b)
    return nk.talu(z)


def forward(enc: EncodedSeq, params: HeadsParams) -> HeadOutputs:
    """Run the configured heads over an encoded sequence."""
    params.validate()
    if params.interactive:
        s = pointer_forward(enc, params.start)
        e = pointer_forward(enc, params.end)
        if params.use_2dp:
            m, attn = twodp_forward(enc, params.twodp)
        else:
            m, attn = None, None
    else:
        s = pointer_forward_concat(enc, params.start)
        e = pointer_forward_concat(enc, params.end)
        m = twodp_forward_concat(enc, params.twodp) if params.use_2dp else None
        attn = None
    return HeadOutputs(s=s, e=e, m=m, attention=attn)
