"""Synthetic materials-science corpus generator.

Produces small labeled datasets with three entity types (Material,
Device, Process) and a controllable share of nested spans, including
same-type nests that share a start position (the case a 1D start/end
matcher structurally cannot resolve). Word inventories are disjoint
across roles so a desk-scale model can overfit the corpus exactly.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_corpus", "default_queries", "nesting_rate"]

MATERIALS = [
    ["zinc", "oxide"],
    ["gallium", "nitride"],
    ["titanium", "dioxide"],
    ["silicon"],
    ["graphene"],
    ["copper"],
    ["perovskite"],
]

DEVICE_NOUNS = ["sensor", "diode", "transistor", "membrane", "electrode"]

PROCESS_BASES = [
    ["laser", "annealing"],
    ["plasma", "etching"],
    ["vapor", "deposition"],
    ["spin", "coating"],
]
PROCESS_EXTENSIONS = ["cycle", "stage", "step"]

FILLER_OPENERS = ["the", "a", "this", "each"]
FILLER_VERBS = ["improved", "degraded", "stabilized", "altered", "dominated"]
FILLER_TAILS = [
    ["under", "vacuum"],
    ["at", "low", "temperature"],
    ["in", "our", "setup"],
    ["during", "testing"],
    ["across", "samples"],
]


def default_queries() -> dict[str, str]:
    return {
        "Material": "material compound alloy oxide film substance",
        "Device": "device sensor component instrument apparatus",
        "Process": "process method treatment procedure fabrication",
    }


class _SentenceBuilder:
    def __init__(self):
        self.words: list[str] = []
        self.entities: list[tuple[str, int, int]] = []  # (type, start char, end char)

    def _char_bounds(self, w0: int, w1: int) -> tuple[int, int]:
        start = sum(len(w) + 1 for w in self.words[:w0])
        end = start + len(" ".join(self.words[w0:w1]))
        return start, end

    def add_words(self, words: list[str]) -> None:
        self.words.extend(words)

    def add_entity(self, etype: str, words: list[str]) -> None:
        w0 = len(self.words)
        self.words.extend(words)
        self.entities.append((etype, *self._char_bounds(w0, w0 + len(words))))

    def add_nested_device(self, material: list[str], noun: str) -> None:
        """Device span containing a Material span that shares its start."""
        w0 = len(self.words)
        self.words.extend(material + [noun])
        self.entities.append(("Material", *self._char_bounds(w0, w0 + len(material))))
        self.entities.append(("Device", *self._char_bounds(w0, w0 + len(material) + 1)))

    def add_nested_process(self, base: list[str], extension: str) -> None:
        """Two Process spans sharing a start: the base and its extension."""
        w0 = len(self.words)
        self.words.extend(base + [extension])
        self.entities.append(("Process", *self._char_bounds(w0, w0 + len(base))))
        self.entities.append(("Process", *self._char_bounds(w0, w0 + len(base) + 1)))

    def finish(self) -> dict:
        self.words.append(".")
        text = " ".join(self.words)
        return {
            "text": text,
            "entities": [
                {"type": t, "start": s, "end": e} for t, s, e in sorted(set(self.entities))
            ],
        }


def make_corpus(n_sentences: int = 50, seed: int = 0) -> tuple[list[dict], dict[str, str]]:
    """Generate labeled sentences with roughly 40% nested-span sentences."""
    rng = np.random.default_rng(seed)

    def pick(items):
        return items[int(rng.integers(len(items)))]

    samples = []
    for k in range(n_sentences):
        b = _SentenceBuilder()
        b.add_words([pick(FILLER_OPENERS)])
        kind = k % 5
        if kind in (0, 1):  # cross-type nest: Device containing a Material
            b.add_nested_device(pick(MATERIALS), pick(DEVICE_NOUNS))
            b.add_words([pick(FILLER_VERBS), "the"])
            b.add_entity("Process", pick(PROCESS_BASES))
        elif kind == 2:  # same-type nest: two Process spans sharing a start
            b.add_entity("Material", pick(MATERIALS))
            b.add_words([pick(FILLER_VERBS), "the"])
            b.add_nested_process(pick(PROCESS_BASES), pick(PROCESS_EXTENSIONS))
        elif kind == 3:  # flat: material + device mention
            b.add_entity("Material", pick(MATERIALS))
            b.add_words([pick(FILLER_VERBS), "the", "bare"])
            b.add_entity("Device", [pick(DEVICE_NOUNS)])
        else:  # flat: process only
            b.add_entity("Process", pick(PROCESS_BASES))
            b.add_words([pick(FILLER_VERBS), "the"])
            b.add_entity("Material", pick(MATERIALS))
        b.add_words(pick(FILLER_TAILS))
        samples.append(b.finish())
    return samples, default_queries()


def nesting_rate(samples: list[dict]) -> float:
    """Fraction of gold spans that contain or are contained in another
    gold span of the same sentence."""
    nested = 0
    total = 0
    for sample in samples:
        spans = [(e["start"], e["end"]) for e in sample["entities"]]
        for a in spans:
            total += 1
            for c in spans:
                if a != c and ((c[0] <= a[0] and a[1] <= c[1]) or (a[0] <= c[0] and c[1] <= a[1])):
                    nested += 1
                    break
    return nested / total if total else 0.0
