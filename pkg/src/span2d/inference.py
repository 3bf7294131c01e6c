"""Span decoding and strict-match evaluation.

Decoding filters the screened 2D cells by an evaluation threshold and a
maximum span length (in pieces), then recovers each span's surface text
through the token sequence's character offsets. The evaluator scores
exact (type, start char, end char) matches and reports precision,
recall, and F1 as percentages under micro (pooled counts) or macro
(per-type averaged) aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .subword import TokenSeq, decode_span
from .training import MaskedSelection, StructuralMask

__all__ = [
    "DecodeConfig",
    "SpanPrediction",
    "TypeScore",
    "EvalReport",
    "decode_spans",
    "decode_spans_1d",
    "to_entities",
    "evaluate",
    "prf",
]


@dataclass(frozen=True)
class DecodeConfig:
    """Evaluation threshold and optional span-length cap (pieces)."""

    t_eval: float = 0.5
    max_len: int | None = None

    def __post_init__(self):
        if not 0.0 < self.t_eval < 1.0:
            raise ValueError(f"t_eval must lie in (0, 1), got {self.t_eval}")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError(f"max_len must be >= 1 or None, got {self.max_len}")


def decode_spans(selection: MaskedSelection, cfg: DecodeConfig) -> list[tuple[int, int, float]]:
    """Keep screened cells with value > t_eval and j - i <= max_len.

    Returns (i, j, score) triples ordered by (i, j); the empty list is a
    valid result.
    """
    out = []
    for (i, j), score in selection.cells.items():
        if score > cfg.t_eval and (cfg.max_len is None or j - i <= cfg.max_len):
            out.append((i, j, score))
    out.sort(key=lambda t: (t[0], t[1]))
    return out


def decode_spans_1d(
    s: np.ndarray, e: np.ndarray, t: float, mask: StructuralMask
) -> list[tuple[int, int]]:
    """Fallback matcher when the 2D head is ablated.

    Pairs each start position above the threshold with the nearest end
    position above the threshold at or after it; ends are reusable
    across starts. A start with no following end yields nothing.
    """
    s = np.asarray(s, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    starts = [i for i in np.flatnonzero(s > t).tolist() if mask.valid[i]]
    ends = [j for j in np.flatnonzero(e > t).tolist() if mask.valid[j]]
    out = []
    for i in starts:
        following = [j for j in ends if j >= i]
        if following:
            out.append((i, min(following)))
    return sorted(set(out))


@dataclass(frozen=True)
class SpanPrediction:
    """A decoded entity: piece span, character span, surface, score."""

    entity_type: str
    start_piece: int
    end_piece: int
    start_char: int
    end_char: int
    text: str
    score: float


def to_entities(spans, seq: TokenSeq, entity_type: str) -> list[SpanPrediction]:
    """Recover surfaces and character offsets for (i, j[, score]) spans.

    Spans touching special or query positions are rejected; the
    structural mask makes those unreachable, so hitting one here signals
    a masking bug upstream.
    """
    out = []
    for span in spans:
        if len(span) == 3:
            i, j, score = span
        else:
            i, j = span
            score = float("nan")
        text = decode_span(seq, i, j)
        cs, ce = seq.char_spans[i][0], seq.char_spans[j][1]
        out.append(
            SpanPrediction(
                entity_type=entity_type,
                start_piece=i,
                end_piece=j,
                start_char=cs,
                end_char=ce,
                text=text,
                score=float(score),
            )
        )
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
    """Precision, recall, F1 as percentages from match counts."""
    p = 100.0 * correct / predicted if predicted else 0.0
    r = 100.0 * correct / gold if gold else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass
class TypeScore:
    predicted: int
    gold: int
    correct: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    """Per-type and aggregate strict-match scores (percentages)."""

    per_type: dict[str, TypeScore]
    predicted: int
    gold: int
    correct: int
    micro: tuple[float, float, float]
    macro: tuple[float, float, float]
    average: str = "micro"

    @property
    def precision(self) -> float:
        return (self.micro if self.average == "micro" else self.macro)[0]

    @property
    def recall(self) -> float:
        return (self.micro if self.average == "micro" else self.macro)[1]

    @property
    def f1(self) -> float:
        return (self.micro if self.average == "micro" else self.macro)[2]

    def table(self) -> str:
        rows = [f"{'type':<16}{'pred':>6}{'gold':>6}{'correct':>9}{'P':>8}{'R':>8}{'F1':>8}"]
        for name in sorted(self.per_type):
            t = self.per_type[name]
            rows.append(
                f"{name:<16}{t.predicted:>6}{t.gold:>6}{t.correct:>9}"
                f"{t.precision:>8.1f}{t.recall:>8.1f}{t.f1:>8.1f}"
            )
        rows.append(
            f"{self.average}: P={self.precision:.1f} R={self.recall:.1f} F1={self.f1:.1f}"
        )
        return "\n".join(rows)

    def csv_lines(self) -> list[str]:
        lines = ["type,predicted,gold,correct,precision,recall,f1"]
        for name in sorted(self.per_type):
            t = self.per_type[name]
            lines.append(
                f"{name},{t.predicted},{t.gold},{t.correct},"
                f"{t.precision:.10g},{t.recall:.10g},{t.f1:.10g}"
            )
        for label, (p, r, f1) in (("micro", self.micro), ("macro", self.macro)):
            lines.append(f"{label},{self.predicted},{self.gold},{self.correct},{p:.10g},{r:.10g},{f1:.10g}")
        return lines


def evaluate(pred, gold, average: str = "micro") -> EvalReport:
    """Score predictions against gold spans by exact match.

    Both inputs are iterables of (sample_id, entity_type, start_char,
    end_char) items; duplicates collapse. Micro pools counts over types
    before scoring; macro averages per-type scores.
    """
    if average not in ("micro", "macro"):
        raise ValueError(f"average must be 'micro' or 'macro', got {average!r}")
    pred_set = {tuple(item) for item in pred}
    gold_set = {tuple(item) for item in gold}
    types = sorted({item[1] for item in pred_set | gold_set})
    per_type: dict[str, TypeScore] = {}
    for t in types:
        p_t = {x for x in pred_set if x[1] == t}
        g_t = {x for x in gold_set if x[1] == t}
        c = len(p_t & g_t)
        prec, rec, f1 = prf(c, len(p_t), len(g_t))
        per_type[t] = TypeScore(len(p_t), len(g_t), c, prec, rec, f1)
    total_p = len(pred_set)
    total_g = len(gold_set)
    total_c = len(pred_set & gold_set)
    micro = prf(total_c, total_p, total_g)
    if per_type:
        macro = tuple(
            float(np.mean([getattr(t, k) for t in per_type.values()]))
            for k in ("precision", "recall", "f1")
        )
    else:
        macro = (0.0, 0.0, 0.0)
    return EvalReport(
        per_type=per_type,
        predicted=total_p,
        gold=total_g,
        correct=total_c,
        micro=micro,
        macro=macro,
        average=average,
    )
