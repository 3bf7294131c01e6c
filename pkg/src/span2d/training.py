"""Structural masking, candidate selection, the training objective, and
the optimization loop.

The structural mask zeroes boundary probabilities on special tokens,
query-region pieces, and continuation pieces, and zeroes every 2D cell
outside the valid upper triangle. Candidate selection keeps boundary
positions above a threshold (unioned with gold positions during
training, so the 2D term never silently loses supervision early on) and
screens the 2D matrix down to the selected cells. The loss is a
weighted sum of binary cross-entropies over the start vector, the end
vector, and the screened cells:

    loss = (1 - lam)/2 * (f_s + f_e) + lam * f_m

Optimization is mini-batch AdamW with decoupled weight decay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .subword import TokenSeq

__all__ = [
    "BCE_EPS",
    "StructuralMask",
    "GoldLabels",
    "LossConfig",
    "LossParts",
    "MaskedSelection",
    "Hyper",
    "EpochStats",
    "AdamW",
    "TrainingDiverged",
    "build_structural_mask",
    "mask_boundary",
    "mask_matrix",
    "select_candidates",
    "bce",
    "combined_loss",
    "train",
]

BCE_EPS = 1e-7


@dataclass
class StructuralMask:
    """Validity flags for boundary positions and 2D cells.

    A position is valid when it lies in the text region and is not a
    continuation piece; a cell (i, j) is valid when both ends are valid
    and j >= i.
    """

    valid: np.ndarray  # bool (l,)
    valid2d: np.ndarray  # bool (l, l)


def build_structural_mask(seq: TokenSeq) -> StructuralMask:
    l = len(seq)
    valid = np.zeros(l, dtype=bool)
    for i in range(seq.text_start, seq.text_end):
        valid[i] = not seq.continuation[i]
    upper = np.triu(np.ones((l, l), dtype=bool))
    valid2d = valid[:, None] & valid[None, :] & upper
    return StructuralMask(valid=valid, valid2d=valid2d)


def mask_boundary(x, mask: StructuralMask):
    """Zero a boundary probability vector on invalid positions."""
    return x * mask.valid.astype(np.float64)


def mask_matrix(m, mask: StructuralMask):
    """Zero a 2D probability matrix on invalid cells."""
    return m * mask.valid2d.astype(np.float64)


@dataclass
class GoldLabels:
    """0/1 boundary labels and the labeled (start, end) piece pairs."""

    y_s: np.ndarray
    y_e: np.ndarray
    pairs: frozenset

    @classmethod
    def from_pairs(cls, pairs, l: int) -> "GoldLabels":
        y_s = np.zeros(l)
        y_e = np.zeros(l)
        for i, j in pairs:
            if j < i:
                raise ValueError(f"gold pair ({i}, {j}) has end before start")
            y_s[i] = 1.0
            y_e[j] = 1.0
        return cls(y_s=y_s, y_e=y_e, pairs=frozenset((int(i), int(j)) for i, j in pairs))

    def pair_matrix(self, l: int) -> np.ndarray:
        y = np.zeros((l, l))
        for i, j in self.pairs:
            y[i, j] = 1.0
        return y


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.1
    t_train: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.t_train < 1.0:
            raise ValueError(f"t_train must lie in (0, 1), got {self.t_train}")


@dataclass
class MaskedSelection:
    """Selected start/end indexes and the screened 2D cells."""

    p_s: tuple
    p_e: tuple
    cells: dict  # (i, j) -> probability
    threshold: float


def select_candidates(
    s: np.ndarray,
    e: np.ndarray,
    m: np.ndarray | None,
    t_r: float,
    mask: StructuralMask,
    gold: GoldLabels | None = None,
) -> MaskedSelection:
    """Threshold the (already masked) boundary vectors and screen m.

    p_s and p_e keep strictly-above-threshold positions; when ``gold``
    is supplied (training mode) the gold starts/ends are unioned in.
    Cells are every (i, j) in p_s x p_e landing on a valid upper-triangle
    position.
    """
    s = np.asarray(s, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    p_s = set(np.flatnonzero(s > t_r).tolist())
    p_e = set(np.flatnonzero(e > t_r).tolist())
    if gold is not None:
        p_s |= set(np.flatnonzero(gold.y_s > 0).tolist())
        p_e |= set(np.flatnonzero(gold.y_e > 0).tolist())
    cells: dict = {}
    if m is not None:
        m = np.asarray(m, dtype=np.float64)
        for i in sorted(p_s):
            for j in sorted(p_e):
                if j >= i and mask.valid2d[i, j]:
                    cells[(i, j)] = float(m[i, j])
    return MaskedSelection(p_s=tuple(sorted(p_s)), p_e=tuple(sorted(p_e)), cells=cells, threshold=t_r)


def _bce_terms(x, y, eps: float):
    # Affine squash of [0, 1] into [eps, 1 - eps]. A hard clip would also
    # bound the logs, but it kills the gradient of confidently-wrong
    # saturated predictions, which then can never recover.
    xc = eps + (1.0 - 2.0 * eps) * x
    return -(y * nk.log(xc) + (1.0 - y) * nk.log(1.0 - xc))


def bce(x, y, eps: float = BCE_EPS):
    """Mean binary cross-entropy over the supplied values.

    ``x`` is squashed into [eps, 1 - eps] first, so the result is finite
    even at exact 0/1 predictions. An empty input carries no supervision
    and scores 0.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    xs = x.data.shape if isinstance(x, nk.Node) else np.shape(x)
    if tuple(xs) != y.shape:
        raise ValueError(f"bce shape mismatch: predictions {tuple(xs)}, labels {y.shape}")
    if n == 0:
        return 0.0
    return nk.sum_all(_bce_terms(x, y, eps)) / n


@dataclass
class LossParts:
    f_s: float
    f_e: float
    f_m: float
    n_cells: int
    m_supervised: bool


def _scalar(x) -> float:
    return float(x.data) if isinstance(x, nk.Node) else float(x)


def combined_loss(s, e, m, mask: StructuralMask, selection: MaskedSelection | None,
                  gold: GoldLabels, cfg: LossConfig):
    """Weighted objective over masked outputs.

    The boundary terms average over valid positions only; the 2D term
    averages over the selected cells (zero, flagged, when none were
    selected). ``m`` may be None when the 2D head is ablated, in which
    case the loss is the plain boundary average.

    Returns (loss, LossParts); the loss is a tape node when the inputs
    are tape nodes.
    """
    valid = mask.valid.astype(np.float64)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid text positions to supervise")
    f_s = nk.sum_all(_bce_terms(s, gold.y_s, BCE_EPS) * valid) / n_valid
    f_e = nk.sum_all(_bce_terms(e, gold.y_e, BCE_EPS) * valid) / n_valid
    if m is None:
        loss = (f_s + f_e) / 2.0
        parts = LossParts(_scalar(f_s), _scalar(f_e), 0.0, 0, False)
        return loss, parts
    if selection is None:
        raise ValueError("selection is required when a 2D matrix is supplied")
    l = gold.y_s.shape[0]
    n_cells = len(selection.cells)
    if n_cells == 0:
        f_m = 0.0
    else:
        cell_mask = np.zeros((l, l))
        for i, j in selection.cells:
            cell_mask[i, j] = 1.0
        f_m = nk.sum_all(_bce_terms(m, gold.pair_matrix(l), BCE_EPS) * cell_mask) / n_cells
    loss = (1.0 - cfg.lam) / 2.0 * (f_s + f_e) + cfg.lam * f_m
    parts = LossParts(_scalar(f_s), _scalar(f_e), _scalar(f_m), n_cells, n_cells > 0)
    return loss, parts


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Hyper:
    epochs: int
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class AdamW:
    """Adaptive moments with decoupled weight decay, updating in place."""

    def __init__(self, lr: float, weight_decay: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name in sorted(params):
            p = params[name]
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            np.subtract(p, self.lr * (update + self.weight_decay * p), out=p)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    f_s: float
    f_e: float
    f_m: float

    def csv_line(self) -> str:
        return f"{self.epoch},{self.mean_loss:.10g},{self.f_s:.10g},{self.f_e:.10g},{self.f_m:.10g}"


LOSS_LOG_HEADER = "epoch,mean_loss,f_s,f_e,f_m"


def _vals(x):
    return x.data if isinstance(x, nk.Node) else np.asarray(x)


def unit_loss(model, unit, loss_cfg: LossConfig, *, bound=None, rng=None, training=True):
    """Forward one (sequence, gold) unit through masking, selection, and
    the objective. Returns (loss, LossParts)."""
    out = model.forward(unit.seq, training=training, rng=rng, bound=bound)
    s = mask_boundary(out.s, unit.mask)
    e = mask_boundary(out.e, unit.mask)
    m = mask_matrix(out.m, unit.mask) if out.m is not None else None
    selection = None
    if m is not None:
        selection = select_candidates(
            _vals(s), _vals(e), _vals(m), loss_cfg.t_train, unit.mask,
            gold=unit.gold if training else None,
        )
    return combined_loss(s, e, m, unit.mask, selection, unit.gold, loss_cfg)


def train(model, units, hyper: Hyper, *, loss_cfg: LossConfig | None = None,
          log_stream=None, stop_fn=None) -> list[EpochStats]:
    """Mini-batch training over (sequence, query-type) units.

    Deterministic for a fixed seed: shuffling and dropout both draw from
    one generator seeded with ``hyper.seed``. Emits one CSV line per
    epoch to ``log_stream`` when given, and stops early when ``stop_fn``
    (called with (epoch, stats) after each epoch) returns True. Aborts
    on a non-finite loss.
    """
    if not units:
        raise ValueError("no training units")
    if loss_cfg is None:
        loss_cfg = LossConfig()
    rng = np.random.default_rng(hyper.seed)
    opt = AdamW(hyper.lr, hyper.weight_decay, hyper.beta1, hyper.beta2, hyper.eps)
    params = model.params()
    history: list[EpochStats] = []
    if log_stream is not None:
        print(LOSS_LOG_HEADER, file=log_stream)
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(units))
        sums = np.zeros(4)
        n_batches = 0
        for b0 in range(0, len(order), hyper.batch_size):
            batch = [units[k] for k in order[b0 : b0 + hyper.batch_size]]
            tape = nk.GradTape()
            bound = model.bind(tape)
            total = None
            part_sum = np.zeros(3)
            for unit in batch:
                loss, parts = unit_loss(model, unit, loss_cfg, bound=bound, rng=rng)
                total = loss if total is None else total + loss
                part_sum += (parts.f_s, parts.f_e, parts.f_m)
            total = total / len(batch)
            loss_val = float(total.data)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            grads = nk.grad_of(tape, total)
            opt.step(params, grads)
            sums += (loss_val, *(part_sum / len(batch)))
            n_batches += 1
        stats = EpochStats(
            epoch=epoch,
            mean_loss=sums[0] / n_batches,
            f_s=sums[1] / n_batches,
            f_e=sums[2] / n_batches,
            f_m=sums[3] / n_batches,
        )
        history.append(stats)
        if log_stream is not None:
            print(stats.csv_line(), file=log_stream)
        if stop_fn is not None and stop_fn(epoch, stats):
            break
    return history
