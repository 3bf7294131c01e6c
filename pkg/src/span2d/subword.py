"""BPE subword tokenizer with offset alignment and continuation flags.

Words are pre-split on Unicode whitespace; punctuation characters become
standalone fragments so learned merges never cross an alphanumeric /
punctuation boundary (and never swallow bracketed reserved-token
strings). Merges are learned greedily by pair frequency and applied in
training order. Every emitted text piece carries its character span into
the original sentence, so span surfaces are recovered from offsets, not
by piece concatenation.

A piece is flagged as a continuation when it is not the first piece of
its fragment; continuation pieces are ineligible span boundaries
downstream.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

__all__ = [
    "CLS", "SEP", "PAD", "UNK",
    "CLS_ID", "SEP_ID", "PAD_ID", "UNK_ID",
    "MERGE_FILE_VERSION",
    "MergeTable", "TokenSeq",
    "train_bpe", "encode", "decode_span",
    "save_merges", "load_merges",
    "word_fragments",
]

CLS, SEP, PAD, UNK = "[CLS]", "[SEP]", "[PAD]", "[UNK]"
RESERVED = (CLS, SEP, PAD, UNK)
CLS_ID, SEP_ID, PAD_ID, UNK_ID = 0, 1, 2, 3

MERGE_FILE_VERSION = "span2d-merges-v1"

_WORD_RE = re.compile(r"\S+")
_SENTINEL = (-1, -1)


def word_fragments(word: str) -> list[str]:
    """Split a whitespace-delimited word into alphanumeric runs and
    single punctuation characters, preserving order."""
    frags: list[str] = []
    run = ""
    for ch in word:
        if ch.isalnum():
            run += ch
        else:
            if run:
                frags.append(run)
                run = ""
            frags.append(ch)
    if run:
        frags.append(run)
    return frags


class MergeTable:
    """An ordered merge list plus the piece vocabulary it induces.

    Immutable after construction; ``encode_fragment`` memoizes per
    fragment string, which is safe because the rules never change.
    """

    def __init__(self, merges: list[tuple[str, str]], alphabet: set[str] | None = None):
        self.merges: tuple[tuple[str, str], ...] = tuple(merges)
        vocab: dict[str, int] = {tok: i for i, tok in enumerate(RESERVED)}
        for left, right in self.merges:
            for piece in (left, right, left + right):
                if piece not in vocab:
                    vocab[piece] = len(vocab)
        if alphabet:
            for ch in sorted(alphabet):
                if ch not in vocab:
                    vocab[ch] = len(vocab)
        self.vocab: dict[str, int] = vocab
        self._cache: dict[str, list[str]] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def piece_id(self, piece: str) -> int:
        return self.vocab.get(piece, UNK_ID)

    def encode_fragment(self, fragment: str) -> list[str]:
        """Apply the merges in training order within one fragment."""
        cached = self._cache.get(fragment)
        if cached is not None:
            return cached
        pieces = list(fragment)
        for left, right in self.merges:
            if len(pieces) < 2:
                break
            out: list[str] = []
            i = 0
            n = len(pieces)
            while i < n:
                if i + 1 < n and pieces[i] == left and pieces[i + 1] == right:
                    out.append(left + right)
                    i += 2
                else:
                    out.append(pieces[i])
                    i += 1
            pieces = out
        self._cache[fragment] = pieces
        return pieces


@dataclass
class TokenSeq:
    """A tokenized [CLS] query [SEP] text [SEP] sequence.

    All lists share one length ``l``. ``char_spans`` holds (start, end)
    offsets into the original sentence for text pieces and (-1, -1)
    sentinels for special and query pieces. ``query_len`` counts the
    query pieces plus their closing [SEP].
    """

    ids: list[int]
    pieces: list[str]
    continuation: list[bool]
    char_spans: list[tuple[int, int]]
    query_len: int
    text: str
    query: str

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def text_start(self) -> int:
        """Index of the first text-region piece."""
        return 1 + self.query_len

    @property
    def text_end(self) -> int:
        """One past the last text-region piece (the final [SEP])."""
        return len(self.ids) - 1

    def is_text_position(self, i: int) -> bool:
        return self.text_start <= i < self.text_end


def _pair_counts(words: Counter) -> Counter:
    pairs: Counter = Counter()
    for pieces, count in words.items():
        for a, b in zip(pieces, pieces[1:]):
            pairs[(a, b)] += count
    return pairs


def train_bpe(corpus: list[str], num_merges: int) -> MergeTable:
    """Learn ``num_merges`` greedy highest-frequency pair merges.

    Frequency ties break by lexicographic order of (left, right), so
    training is deterministic. Stops early once no pair remains.
    """
    if not corpus or not any(line.strip() for line in corpus):
        raise ValueError("corpus is empty")
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    words: Counter = Counter()
    alphabet: set[str] = set()
    for line in corpus:
        for word in line.split():
            for frag in word_fragments(word):
                words[tuple(frag)] += 1
                alphabet.update(frag)
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pairs = _pair_counts(words)
        if not pairs:
            break
        best = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        left, right = best
        merged = left + right
        new_words: Counter = Counter()
        for pieces, count in words.items():
            out: list[str] = []
            i = 0
            n = len(pieces)
            while i < n:
                if i + 1 < n and pieces[i] == left and pieces[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(pieces[i])
                    i += 1
            new_words[tuple(out)] += count
        words = new_words
    return MergeTable(merges, alphabet=alphabet)


def save_merges(table: MergeTable, path) -> None:
    """Write the merge list: a version line, then one left<TAB>right per line."""
    lines = [MERGE_FILE_VERSION]
    lines += [f"{left}\t{right}" for left, right in table.merges]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_merges(path) -> MergeTable:
    """Rebuild a table from a merge file.

    The vocabulary is reconstructed from the merges plus the reserved
    tokens; characters that never took part in a merge therefore encode
    as [UNK] ids (their surface text and offsets are still preserved).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MERGE_FILE_VERSION:
        found = lines[0] if lines else "<empty file>"
        raise ValueError(f"unsupported merge file version: {found!r}")
    merges = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"malformed merge on line {lineno}: {line!r}")
        merges.append((parts[0], parts[1]))
    return MergeTable(merges)


def merges_to_lines(table: MergeTable) -> list[str]:
    """Serialized merge list, version line included (checkpoint embedding)."""
    return [MERGE_FILE_VERSION] + [f"{l}\t{r}" for l, r in table.merges]


def table_from_lines(lines: list[str]) -> MergeTable:
    if not lines or lines[0] != MERGE_FILE_VERSION:
        raise ValueError("unsupported merge data version")
    merges = []
    for line in lines[1:]:
        if not line:
            continue
        left, _, right = line.partition("\t")
        if not left or not right:
            raise ValueError(f"malformed merge rule: {line!r}")
        merges.append((left, right))
    return MergeTable(merges)


def _tokenize_text(table: MergeTable, text: str):
    """Tokenize raw text into (pieces, continuation flags, char spans)."""
    pieces: list[str] = []
    cont: list[bool] = []
    spans: list[tuple[int, int]] = []
    for match in _WORD_RE.finditer(text):
        word = match.group(0)
        base = match.start()
        offset = 0
        for frag in word_fragments(word):
            frag_pieces = table.encode_fragment(frag)
            for k, piece in enumerate(frag_pieces):
                pieces.append(piece)
                cont.append(k > 0)
                spans.append((base + offset, base + offset + len(piece)))
                offset += len(piece)
    return pieces, cont, spans


def encode(table: MergeTable, query: str, sentence: str, cap: int = 64) -> TokenSeq:
    """Assemble and tokenize [CLS] query [SEP] sentence [SEP].

    The text region is truncated so the total length stays within
    ``cap``; the query is never truncated. A query leaving no room for
    even one text piece is rejected.
    """
    if not query.strip():
        raise ValueError("query is empty")
    if not sentence.strip():
        raise ValueError("sentence is empty")
    q_pieces, q_cont, _ = _tokenize_text(table, query)
    t_pieces, t_cont, t_spans = _tokenize_text(table, sentence)

    query_len = len(q_pieces) + 1  # query pieces + their [SEP]
    # [CLS] + query region + text + final [SEP]
    room = cap - (1 + query_len) - 1
    if room < 1:
        raise ValueError(
            f"query occupies {1 + query_len} of {cap} positions, leaving no room for text"
        )
    if len(t_pieces) > room:
        t_pieces = t_pieces[:room]
        t_cont = t_cont[:room]
        t_spans = t_spans[:room]

    pieces = [CLS] + q_pieces + [SEP] + t_pieces + [SEP]
    ids = (
        [CLS_ID]
        + [table.piece_id(p) for p in q_pieces]
        + [SEP_ID]
        + [table.piece_id(p) for p in t_pieces]
        + [SEP_ID]
    )
    continuation = [False] + q_cont + [False] + t_cont + [False]
    spans = [_SENTINEL] + [_SENTINEL] * len(q_pieces) + [_SENTINEL] + t_spans + [_SENTINEL]
    return TokenSeq(
        ids=ids,
        pieces=pieces,
        continuation=continuation,
        char_spans=spans,
        query_len=query_len,
        text=sentence,
        query=query,
    )


def decode_span(seq: TokenSeq, start: int, end: int) -> str:
    """Recover the original characters covered by pieces start..end.

    Offset-based: the result is always a verbatim substring of the
    sentence, even when interior pieces were split oddly.
    """
    if start > end:
        raise ValueError(f"span start {start} exceeds end {end}")
    for idx in (start, end):
        if not seq.is_text_position(idx):
            raise ValueError(
                f"position {idx} is outside the text region "
                f"[{seq.text_start}, {seq.text_end})"
            )
    cs = seq.char_spans[start][0]
    ce = seq.char_spans[end][1]
    return seq.text[cs:ce]
