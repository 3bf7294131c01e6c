"""Dataset/query ingestion, checkpoint persistence, and the command line.

Files:

* dataset - JSON lines, one record per line:
  ``{"text": "...", "entities": [{"type": "...", "start": 0, "end": 4}]}``
  with character offsets into the raw text (end exclusive).
* queries - a JSON object mapping entity type to its keyword query.
* checkpoint - binary container (magic ``S2DC``): a JSON config block
  (architecture, ablation flags, embedded merge rules, vocabulary hash,
  training metadata) followed by named float64 tensors.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import load_embeddings
from .inference import DecodeConfig, SpanPrediction, evaluate, to_entities
from .model import Model, ModelConfig, init_model
from .subword import MergeTable, TokenSeq, encode, merges_to_lines, table_from_lines, train_bpe
from .synthdata import make_corpus, nesting_rate
from .training import (
    GoldLabels,
    Hyper,
    LossConfig,
    StructuralMask,
    TrainingDiverged,
    build_structural_mask,
    train,
)

__all__ = [
    "DataError",
    "DatasetSample",
    "Unit",
    "TokenizedUnit",
    "load_dataset",
    "save_dataset",
    "load_queries",
    "expand_samples",
    "align_char_span",
    "tokenize_units",
    "save_checkpoint",
    "load_checkpoint",
    "run_command",
    "main",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = b"S2DC"
CHECKPOINT_VERSION = 1


class DataError(ValueError):
    """Malformed input data; maps to exit code 2."""


# ---------------------------------------------------------------------------
# dataset and query files
# ---------------------------------------------------------------------------


@dataclass
class DatasetSample:
    text: str
    entities: list[tuple[str, int, int]]  # (type, start char, end char)


def load_dataset(path) -> list[DatasetSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            if not isinstance(rec, dict) or "text" not in rec:
                raise DataError(f"{path}:{lineno}: record must be an object with a 'text' field")
            text = rec["text"]
            if not isinstance(text, str) or not text.strip():
                raise DataError(f"{path}:{lineno}: empty or non-string text")
            entities = []
            for ent in rec.get("entities", []):
                try:
                    etype, start, end = ent["type"], int(ent["start"]), int(ent["end"])
                except (KeyError, TypeError, ValueError):
                    raise DataError(
                        f"{path}:{lineno}: entity must have type/start/end fields"
                    ) from None
                if not (0 <= start < end <= len(text)):
                    raise DataError(
                        f"{path}:{lineno}: entity {etype!r} offsets [{start}, {end}) "
                        f"invalid for text of length {len(text)}"
                    )
                entities.append((etype, start, end))
            samples.append(DatasetSample(text=text, entities=entities))
    return samples


def save_dataset(samples: list[DatasetSample] | list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            if isinstance(sample, DatasetSample):
                rec = {
                    "text": sample.text,
                    "entities": [
                        {"type": t, "start": s, "end": e} for t, s, e in sample.entities
                    ],
                }
            else:
                rec = sample
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_queries(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict) or not data:
        raise DataError(f"{path}: expected a non-empty object mapping type -> query")
    for etype, query in data.items():
        if not isinstance(query, str) or not query.strip():
            raise DataError(f"{path}: empty query for type {etype!r}")
    return dict(data)


# ---------------------------------------------------------------------------
# (sentence, entity type) units
# ---------------------------------------------------------------------------


@dataclass
class Unit:
    sample_idx: int
    sample: DatasetSample
    entity_type: str
    query: str
    spans: list[tuple[int, int]]  # gold char spans of this type (possibly empty)


def expand_samples(samples: list[DatasetSample], queries: dict[str, str]) -> list[Unit]:
    """One unit per (sentence, entity type); negative units are kept."""
    for k, sample in enumerate(samples):
        for etype, _, _ in sample.entities:
            if etype not in queries:
                raise DataError(
                    f"sample {k} has entity type {etype!r} with no query defined"
                )
    units = []
    for k, sample in enumerate(samples):
        for etype, query in queries.items():
            spans = sorted({(s, e) for t, s, e in sample.entities if t == etype})
            units.append(Unit(k, sample, etype, query, spans))
    return units


@dataclass
class TokenizedUnit:
    sample_idx: int
    entity_type: str
    seq: TokenSeq
    mask: StructuralMask
    gold: GoldLabels
    gold_char_spans: list[tuple[int, int]]  # spans that survived alignment


@dataclass
class AlignmentStats:
    kept: int = 0
    dropped_truncated: int = 0
    dropped_unaligned: int = 0


def align_char_span(seq: TokenSeq, start: int, end: int) -> tuple[int, int] | None:
    """Map a character span to boundary-eligible piece indexes.

    Requires an exact alignment: some valid (non-continuation) text
    piece starts at ``start`` and some valid text piece ends at ``end``.
    Returns None when no such pair exists (the span was truncated away
    or does not align to piece boundaries).
    """
    i = j = None
    for k in range(seq.text_start, seq.text_end):
        if seq.continuation[k]:
            continue
        cs, ce = seq.char_spans[k]
        if cs == start:
            i = k
        if ce == end:
            j = k
    if i is None or j is None or j < i:
        return None
    return i, j


def tokenize_units(
    units: list[Unit], table: MergeTable, cap: int
) -> tuple[list[TokenizedUnit], AlignmentStats]:
    stats = AlignmentStats()
    out = []
    for unit in units:
        seq = encode(table, unit.query, unit.sample.text, cap=cap)
        last_char = max(
            (seq.char_spans[k][1] for k in range(seq.text_start, seq.text_end)), default=0
        )
        pairs = []
        kept_spans = []
        for start, end in unit.spans:
            aligned = align_char_span(seq, start, end)
            if aligned is None:
                if end > last_char:
                    stats.dropped_truncated += 1
                else:
                    stats.dropped_unaligned += 1
                continue
            pairs.append(aligned)
            kept_spans.append((start, end))
            stats.kept += 1
        out.append(
            TokenizedUnit(
                sample_idx=unit.sample_idx,
                entity_type=unit.entity_type,
                seq=seq,
                mask=build_structural_mask(seq),
                gold=GoldLabels.from_pairs(pairs, len(seq)),
                gold_char_spans=kept_spans,
            )
        )
    return out, stats


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: Model, path, meta: dict | None = None) -> None:
    cfg = model.config
    config = {
        "d": cfg.d,
        "n_layers": cfg.n_layers,
        "n_heads": cfg.n_heads,
        "ff": cfg.ff,
        "cap": cfg.cap,
        "dropout": cfg.dropout,
        "interactive": cfg.interactive,
        "use_2dp": cfg.use_2dp,
        "t_train": cfg.t_train,
        "vocab_size": model.table.vocab_size,
        "vocab_hash": model.vocab_hash(),
        "merges": merges_to_lines(model.table),
        "meta": meta or {},
    }
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = model.params()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            # asarray (not ascontiguousarray): the latter promotes 0-d
            # scalars to shape (1,).
            arr = np.asarray(params[name], dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path, expected: dict | None = None) -> tuple[Model, dict]:
    """Rebuild a model from a checkpoint file.

    ``expected`` optionally pins config entries (for example a required
    dimension); any mismatch is rejected with both values named.
    """
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    try:
        if payload[:4] != CHECKPOINT_MAGIC:
            raise DataError(f"bad checkpoint magic: {payload[:4]!r}")
        off = 4
        (version,) = struct.unpack_from("<I", payload, off)
        off += 4
        if version != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack_from("<I", payload, off)
        off += 4
        config = json.loads(payload[off : off + blob_len].decode("utf-8"))
        off += blob_len
        (n_tensors,) = struct.unpack_from("<I", payload, off)
        off += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<I", payload, off)
            off += 4
            name = payload[off : off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<I", payload, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", payload, off)
            off += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            data = np.frombuffer(payload, dtype="<f8", count=count, offset=off)
            off += 8 * count
            tensors[name] = data.reshape(shape).astype(np.float64)
        if off != len(payload):
            raise DataError(f"checkpoint has {len(payload) - off} trailing bytes")
    except (struct.error, IndexError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"truncated or corrupt checkpoint: {exc}") from None
    if expected:
        for key, want in expected.items():
            found = config.get(key)
            if found != want:
                raise DataError(
                    f"checkpoint config mismatch for {key!r}: expected {want}, found {found}"
                )
    table = table_from_lines(config["merges"])
    model_cfg = ModelConfig(
        d=config["d"],
        n_layers=config["n_layers"],
        n_heads=config["n_heads"],
        ff=config["ff"],
        cap=config["cap"],
        dropout=config["dropout"],
        interactive=config["interactive"],
        use_2dp=config["use_2dp"],
        t_train=config["t_train"],
    )
    model = init_model(np.random.default_rng(0), table, model_cfg)
    if model.vocab_hash() != config["vocab_hash"]:
        raise DataError("checkpoint vocabulary hash does not match its merge rules")
    if table.vocab_size != config["vocab_size"]:
        raise DataError(
            f"checkpoint vocab size mismatch: expected {config['vocab_size']}, "
            f"rebuilt {table.vocab_size}"
        )
    try:
        model.load_param_values(tensors)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return model, config.get("meta", {})


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="span2d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bpe-train", help="learn BPE merges from a text corpus")
    p.add_argument("--corpus", required=True, help="plain text file, one line per line")
    p.add_argument("--merges", type=int, default=512, help="number of merges to learn")
    p.add_argument("--out", required=True, help="merge table output file")

    p = sub.add_parser("train", help="train a model on a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--bpe-merges", default=None, help="existing merge table file (default: train one from --data)")
    p.add_argument("--num-merges", type=int, default=512, help="merges to learn when no table is given")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="2D loss weight")
    p.add_argument("--t-train", type=float, default=0.5, help="training selection threshold")
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--ff", type=int, default=128)
    p.add_argument("--cap", type=int, default=64, help="max sequence length in pieces")
    p.add_argument("--no-interactive-attention", action="store_true")
    p.add_argument("--no-2dp", action="store_true")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--loss-log", default=None, help="loss CSV path (default: <out>.loss.csv)")
    p.add_argument("--loss-plot", default=None, help="loss figure path (default: <out>.loss.png)")

    p = sub.add_parser("eval", help="score a checkpoint against a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--t-eval", type=float, default=0.5)
    p.add_argument("--max-len", type=int, default=None, help="max span length in pieces (default: unbounded)")
    avg = p.add_mutually_exclusive_group()
    avg.add_argument("--micro", dest="average", action="store_const", const="micro")
    avg.add_argument("--macro", dest="average", action="store_const", const="macro")
    p.set_defaults(average="micro")
    p.add_argument("--report-csv", default=None, help="also write the report as CSV")

    p = sub.add_parser("extract", help="extract entities from text")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", default=None, help="a single sentence")
    src.add_argument("--data", default=None, help="a dataset file (gold labels ignored)")
    p.add_argument("--queries", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--t-eval", type=float, default=0.5)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--embeddings", default=None,
                   help="precomputed embedding file (S2DE); single --text mode with one query type only")
    p.add_argument("--dump-matrices", default=None, metavar="DIR",
                   help="write per-unit s/e/m and interaction-matrix CSVs and figures")
    p.add_argument("--out", default=None, help="write JSON-lines output here instead of stdout")

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--queries-out", required=True)
    p.add_argument("--sentences", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_bpe_train(args) -> int:
    from .subword import save_merges

    try:
        with open(args.corpus, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read corpus: {exc}") from None
    table = train_bpe(lines, args.merges)
    save_merges(table, args.out)
    print(f"learned {len(table.merges)} merges ({table.vocab_size} pieces) -> {args.out}")
    return 0


def _load_table_for_training(args, samples) -> MergeTable:
    if args.bpe_merges:
        from .subword import load_merges

        return load_merges(args.bpe_merges)
    table = train_bpe([s.text for s in samples], args.num_merges)
    # Canonicalize through the serialized form so the vocabulary always
    # matches what a checkpoint reader will rebuild from the merge lines.
    return table_from_lines(merges_to_lines(table))


def _cmd_train(args) -> int:
    samples = load_dataset(args.data)
    if not samples:
        raise DataError(f"{args.data}: dataset is empty")
    queries = load_queries(args.queries)
    table = _load_table_for_training(args, samples)
    units = expand_samples(samples, queries)
    tokenized, stats = tokenize_units(units, table, args.cap)
    if stats.dropped_truncated or stats.dropped_unaligned:
        print(
            f"warning: dropped gold spans: {stats.dropped_truncated} truncated, "
            f"{stats.dropped_unaligned} unaligned",
            file=sys.stderr,
        )
    config = ModelConfig(
        d=args.dim,
        n_layers=args.layers,
        n_heads=args.heads,
        ff=args.ff,
        cap=args.cap,
        dropout=args.dropout,
        interactive=not args.no_interactive_attention,
        use_2dp=not args.no_2dp,
        t_train=args.t_train,
    )
    model = init_model(np.random.default_rng(args.seed), table, config)
    hyper = Hyper(
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    loss_cfg = LossConfig(lam=args.lam, t_train=args.t_train)
    loss_log = args.loss_log or (args.out + ".loss.csv")
    with open(loss_log, "w", encoding="utf-8") as log:
        history = train(model, tokenized, hyper, loss_cfg=loss_cfg, log_stream=log)
    meta = {"epoch": len(history), "seed": args.seed, "lam": args.lam, "t_r": args.t_train}
    save_checkpoint(model, args.out, meta)
    loss_plot = args.loss_plot or (args.out + ".loss.png")
    from . import viz

    viz.loss_curve(history, loss_plot)
    print(
        f"trained {len(history)} epochs on {len(tokenized)} units; "
        f"final loss {history[-1].mean_loss:.6f}"
    )
    print(f"checkpoint -> {args.out}")
    print(f"loss log   -> {loss_log}")
    print(f"loss plot  -> {loss_plot}")
    return 0


def _predictions_for_units(model, tokenized, decode_cfg):
    """Run extraction over tokenized units, yielding per-unit entities."""
    for unit in tokenized:
        result = model.extract(unit.seq, decode_cfg)
        entities = to_entities(result.spans, unit.seq, unit.entity_type)
        yield unit, result, entities


def _cmd_eval(args) -> int:
    model, _meta = load_checkpoint(args.ckpt)
    samples = load_dataset(args.data)
    if not samples:
        raise DataError(f"{args.data}: dataset is empty")
    queries = load_queries(args.queries)
    units = expand_samples(samples, queries)
    tokenized, stats = tokenize_units(units, model.table, model.config.cap)
    if stats.dropped_truncated or stats.dropped_unaligned:
        print(
            f"warning: {stats.dropped_truncated + stats.dropped_unaligned} gold spans "
            "exceed the tokenization (scored as misses)",
            file=sys.stderr,
        )
    decode_cfg = DecodeConfig(t_eval=args.t_eval, max_len=args.max_len)
    pred = []
    for unit, _result, entities in _predictions_for_units(model, tokenized, decode_cfg):
        pred += [(unit.sample_idx, p.entity_type, p.start_char, p.end_char) for p in entities]
    gold = [
        (k, etype, start, end)
        for k, sample in enumerate(samples)
        for etype, start, end in sample.entities
    ]
    report = evaluate(pred, gold, average=args.average)
    print(report.table())
    if args.report_csv:
        with open(args.report_csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(report.csv_lines()) + "\n")
    return 0


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() else "-" for ch in text)


def _dump_unit_matrices(dump_dir: Path, unit, result, fmt: str = "%.17g") -> None:
    from . import viz

    prefix = dump_dir / f"{unit.sample_idx:04d}_{_slug(unit.entity_type)}"
    seq = unit.seq
    with open(f"{prefix}_tokens.csv", "w", encoding="utf-8") as fh:
        fh.write("index,piece,continuation,char_start,char_end,region\n")
        for k, piece in enumerate(seq.pieces):
            if seq.is_text_position(k):
                region = "text"
            elif k == 0 or k == len(seq) - 1 or k == seq.text_start - 1:
                region = "special"
            else:
                region = "query"
            cs, ce = seq.char_spans[k]
            fh.write(f"{k},{piece},{int(seq.continuation[k])},{cs},{ce},{region}\n")
    out = result.outputs
    np.savetxt(f"{prefix}_s.csv", np.asarray(out.s), fmt=fmt, delimiter=",")
    np.savetxt(f"{prefix}_e.csv", np.asarray(out.e), fmt=fmt, delimiter=",")
    viz.boundary_bars(out.s, seq.pieces, f"{prefix}_s.png", "start probabilities")
    viz.boundary_bars(out.e, seq.pieces, f"{prefix}_e.png", "end probabilities")
    if out.m is not None:
        np.savetxt(f"{prefix}_m.csv", np.asarray(out.m), fmt=fmt, delimiter=",")
        viz.heatmap(out.m, seq.pieces, f"{prefix}_m.png", "2D span probabilities (masked)")
    if out.attention is not None:
        np.savetxt(f"{prefix}_attention.csv", np.asarray(out.attention), fmt=fmt, delimiter=",")
        viz.heatmap(
            out.attention, seq.pieces, f"{prefix}_attention.png", "pairwise interaction matrix"
        )


def _cmd_extract(args) -> int:
    model, _meta = load_checkpoint(args.ckpt)
    queries = load_queries(args.queries)
    if args.text is not None:
        samples = [DatasetSample(text=args.text, entities=[])]
    else:
        samples = load_dataset(args.data)
        if not samples:
            raise DataError(f"{args.data}: dataset is empty")
    units = expand_samples(samples, queries)
    tokenized, _stats = tokenize_units(units, model.table, model.config.cap)

    enc_override = None
    if args.embeddings:
        if args.text is None or len(tokenized) != 1:
            raise DataError(
                "--embeddings requires --text and a single-type query file "
                f"(got {len(tokenized)} units)"
            )
        enc_override = load_embeddings(args.embeddings, tokenized[0].seq, expected_d=model.config.d)

    decode_cfg = DecodeConfig(t_eval=args.t_eval, max_len=args.max_len)
    dump_dir = None
    if args.dump_matrices:
        dump_dir = Path(args.dump_matrices)
        dump_dir.mkdir(parents=True, exist_ok=True)

    by_sample: dict[int, list[SpanPrediction]] = {k: [] for k in range(len(samples))}
    for unit in tokenized:
        result = model.extract(unit.seq, decode_cfg, enc=enc_override)
        entities = to_entities(result.spans, unit.seq, unit.entity_type)
        by_sample[unit.sample_idx] += entities
        if dump_dir is not None:
            _dump_unit_matrices(dump_dir, unit, result)

    out_fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for k, sample in enumerate(samples):
            ents = sorted(
                by_sample[k], key=lambda p: (p.start_char, p.end_char, p.entity_type)
            )
            rec = {
                "text": sample.text,
                "entities": [
                    {
                        "type": p.entity_type,
                        "start": p.start_char,
                        "end": p.end_char,
                        "text": p.text,
                        "score": round(p.score, 6),
                    }
                    for p in ents
                ],
            }
            print(json.dumps(rec, ensure_ascii=False), file=out_fh)
    finally:
        if out_fh is not sys.stdout:
            out_fh.close()
    return 0


def _cmd_synth(args) -> int:
    samples, queries = make_corpus(args.sentences, args.seed)
    save_dataset(samples, args.out)
    with open(args.queries_out, "w", encoding="utf-8") as fh:
        json.dump(queries, fh, indent=2)
        fh.write("\n")
    rate = nesting_rate(samples)
    print(f"wrote {len(samples)} sentences (nested-span rate {rate:.1%}) -> {args.out}")
    print(f"queries -> {args.queries_out}")
    return 0


_COMMANDS = {
    "bpe-train": _cmd_bpe_train,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "extract": _cmd_extract,
    "synth": _cmd_synth,
}


def run_command(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"span2d: data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"span2d: data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"span2d: numeric failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"span2d: data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
