"""Acceptance suite.

One test per acceptance criterion, each printing a pass line with its
runtime. Oracle constants were computed independently (mpmath, 50
digits) before implementation; brute-force checks re-derive expected
sets from first principles next to each assertion.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import subprocess
import sys
import time

import numpy as np

from span2d import numkernel as nk
from span2d.appcli import (
    expand_samples,
    load_checkpoint,
    load_dataset,
    load_queries,
    run_command,
    save_checkpoint,
    tokenize_units,
)
from span2d.inference import DecodeConfig, decode_spans, evaluate, to_entities
from span2d.model import ModelConfig, init_model
from span2d.subword import encode, load_merges, save_merges, train_bpe
from span2d.synthdata import nesting_rate
from span2d.training import (
    GoldLabels,
    LossConfig,
    build_structural_mask,
    combined_loss,
    mask_boundary,
    mask_matrix,
    select_candidates,
)

F1_HIGH = 88.19954648526077  # mpmath: harmonic mean of 88.4 and 88.0


def _report(name: str, started: float, budget: float):
    elapsed = time.perf_counter() - started
    assert elapsed < budget, f"{name} took {elapsed:.1f}s (budget {budget}s)"
    print(f"[acceptance] {name}: PASS ({elapsed:.2f}s)")


class TestActivationIdentities:
    def test_activation_identities(self):
        t0 = time.perf_counter()
        x = np.linspace(-20.0, 20.0, 10**4)
        assert np.max(np.abs(nk.talu(x) - nk.logistic(2.0 * x))) < 1e-12
        assert nk.talu(0.0) == 0.5
        rng = np.random.default_rng(0)
        xs = rng.uniform(-25, 25, size=10**4)
        assert np.max(np.abs(nk.talu(xs) + nk.talu(-xs) - 1.0)) < 1e-15
        h = 1e-6
        slope = (nk.talu(h) - nk.talu(-h)) / (2.0 * h)
        assert abs(slope - 0.5) < 1e-6
        _report("activation identities", t0, 1.0)


class TestGradientSuite:
    def test_full_model_gradients_100_seeds(self):
        """Analytic gradients of the lam=0.1 objective w.r.t. every
        pointer, 2D-head, and encoder coordinate against central finite
        differences (step 1e-5), for 100 random seeds."""
        t0 = time.perf_counter()
        corpus = ["ab cd ba dc", "abcd dcba ab", "cd ab abcd"]
        table = train_bpe(corpus, 12)
        sentences = ["ab cd abcd", "dcba ab cd", "abcd ba"]
        seqs = [encode(table, "ab dc", s, cap=16) for s in sentences]
        loss_cfg = LossConfig(lam=0.1, t_train=0.5)
        h = 1e-5
        worst = 0.0

        for seed in range(100):
            rng = np.random.default_rng(seed)
            cfg = ModelConfig(
                d=4, n_layers=2, n_heads=2, ff=8, cap=16, dropout=0.0, t_train=0.5
            )
            model = init_model(rng, table, cfg)
            seq = seqs[seed % len(seqs)]
            mask = build_structural_mask(seq)
            valid = np.flatnonzero(mask.valid)
            i = int(rng.choice(valid))
            j = int(rng.choice(valid[valid >= i]))
            gold = GoldLabels.from_pairs([(i, j)], len(seq))

            def loss_value(bound=None, selection=None):
                out = model.forward(seq, bound=bound)
                s = mask_boundary(out.s, mask)
                e = mask_boundary(out.e, mask)
                m = mask_matrix(out.m, mask)
                if selection is None:
                    selection = select_candidates(
                        s.data if isinstance(s, nk.Node) else s,
                        e.data if isinstance(e, nk.Node) else e,
                        m.data if isinstance(m, nk.Node) else m,
                        loss_cfg.t_train, mask, gold=gold,
                    )
                loss, _ = combined_loss(s, e, m, mask, selection, gold, loss_cfg)
                return loss, selection

            # Selection is piecewise constant in the parameters; freeze it
            # at the evaluation point so the finite differences probe the
            # same smooth branch the tape differentiates.
            _, selection = loss_value()
            tape = nk.GradTape()
            bound = model.bind(tape)
            loss, _ = loss_value(bound=bound, selection=selection)
            grads = nk.grad_of(tape, loss)

            for name, arr in model.params().items():
                view = arr.reshape(-1) if arr.ndim else arr.reshape(1)
                gview = grads[name].reshape(-1)
                for k in range(view.size):
                    orig = view[k]
                    view[k] = orig + h
                    up = float(loss_value(selection=selection)[0])
                    view[k] = orig - h
                    dn = float(loss_value(selection=selection)[0])
                    view[k] = orig
                    fd = (up - dn) / (2.0 * h)
                    rel = abs(gview[k] - fd) / max(1.0, abs(fd))
                    worst = max(worst, rel)
                    assert rel < 1e-4, f"seed {seed}, {name}[{k}]: rel err {rel}"
        print(f"  worst relative gradient error over 100 seeds: {worst:.3g}")
        _report("gradient suite", t0, 120.0)


class TestMaskInvariants:
    def test_selection_matches_brute_force_500(self):
        t0 = time.perf_counter()
        words = ["alpha", "beta", "gamma", "delta", "xyz", "pqrs", "mn", "omega"]
        table = train_bpe(["alpha beta gamma delta mn omega"], 30)
        rng = np.random.default_rng(99)
        for trial in range(500):
            sentence = " ".join(rng.choice(words, size=int(rng.integers(3, 8))))
            seq = encode(table, "alpha mn", sentence, cap=40)
            l = len(seq)
            mask = build_structural_mask(seq)

            # structural zeros: specials, query region, continuations,
            # lower triangle
            s = mask_boundary(rng.uniform(0.05, 0.95, size=l), mask)
            e = mask_boundary(rng.uniform(0.05, 0.95, size=l), mask)
            m = mask_matrix(rng.uniform(0.05, 0.95, size=(l, l)), mask)
            assert s[0] == 0.0 and s[l - 1] == 0.0
            for k in range(1, seq.text_start):
                assert s[k] == 0.0 and e[k] == 0.0
            for k in range(seq.text_start, seq.text_end):
                if seq.continuation[k]:
                    assert s[k] == 0.0 and e[k] == 0.0
            assert np.all(m[np.tril_indices(l, k=-1)] == 0.0)
            assert np.all(m[:, : seq.text_start] == 0.0)
            assert np.all(m[l - 1, :] == 0.0)

            t_r = float(rng.uniform(0.2, 0.8))
            gold = None
            if trial % 2 == 0:
                valid = np.flatnonzero(mask.valid)
                i = int(rng.choice(valid))
                j = int(rng.choice(valid[valid >= i]))
                gold = GoldLabels.from_pairs([(i, j)], l)
            sel = select_candidates(s, e, m, t_r, mask, gold=gold)

            want_s = {i for i in range(l) if s[i] > t_r}
            want_e = {j for j in range(l) if e[j] > t_r}
            if gold is not None:
                want_s |= {int(i) for i in np.flatnonzero(gold.y_s)}
                want_e |= {int(j) for j in np.flatnonzero(gold.y_e)}
            want_cells = {
                (i, j)
                for i in want_s
                for j in want_e
                if j >= i and mask.valid[i] and mask.valid[j]
            }
            assert set(sel.p_s) == want_s
            assert set(sel.p_e) == want_e
            assert set(sel.cells) == want_cells
            for (i, j), value in sel.cells.items():
                assert value == m[i, j]
        _report("mask invariants", t0, 10.0)


class TestDecodeOracle:
    def test_decode_matches_enumeration_1000(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        from span2d.training import StructuralMask

        for _ in range(1000):
            l = int(rng.integers(2, 16))
            valid = rng.random(l) > 0.2
            mask = StructuralMask(
                valid=valid,
                valid2d=valid[:, None] & valid[None, :] & np.triu(np.ones((l, l), dtype=bool)),
            )
            s = rng.random(l) * valid
            e = rng.random(l) * valid
            m = rng.random((l, l)) * mask.valid2d
            t_r = float(rng.uniform(0.1, 0.6))
            t_e = float(rng.uniform(0.1, 0.9))
            cap = int(rng.integers(1, l + 3)) if rng.random() < 0.5 else None
            sel = select_candidates(s, e, m, t_r, mask)
            got = {(i, j) for i, j, _ in decode_spans(sel, DecodeConfig(t_eval=t_e, max_len=cap))}
            want = {
                (i, j)
                for i in range(l)
                for j in range(l)
                if s[i] > t_r and e[j] > t_r and j >= i and mask.valid2d[i, j]
                and m[i, j] > t_e and (cap is None or j - i <= cap)
            }
            assert got == want

        # threshold monotonicity over 10 nested thresholds
        l = 12
        valid = np.ones(l, dtype=bool)
        mask = StructuralMask(valid=valid, valid2d=np.triu(np.ones((l, l), dtype=bool)))
        m = np.triu(rng.random((l, l)))
        sel = select_candidates(np.ones(l), np.ones(l), m, 0.5, mask)
        prev = None
        for t in np.linspace(0.02, 0.98, 10):
            got = {(i, j) for i, j, _ in decode_spans(sel, DecodeConfig(t_eval=float(t)))}
            if prev is not None:
                assert got <= prev
            prev = got
        _report("decode oracle", t0, 10.0)


class TestNestedExampleReconstruction:
    def test_five_targets_with_nested_span(self):
        """Hand-constructed boundary vectors and 2D matrix over a
        protein sentence: four start pieces and four end pieces alone
        pair into only four entities, while five above-threshold 2D
        cells also recover the nested span."""
        t0 = time.perf_counter()
        sentence = "PEBP2 alpha A1 and alpha B1 enhanced the expression of the GM-CSF promoter."
        query = (
            "protein nitrogenous organic compounds body tissues muscle hair "
            "collagen enzymes antibodies"
        )
        # Enough merges that every word fragment becomes a single piece.
        table = train_bpe([sentence, query] * 2, 400)
        seq = encode(table, query, sentence, cap=64)

        def piece_at(piece, occurrence=0):
            hits = [
                k for k in range(seq.text_start, seq.text_end) if seq.pieces[k] == piece
            ]
            return hits[occurrence]

        starts = [piece_at("PEBP2"), piece_at("alpha", 0), piece_at("alpha", 1), piece_at("GM")]
        ends = [piece_at("PEBP2"), piece_at("A1"), piece_at("B1"), piece_at("CSF")]
        cells = [
            (piece_at("PEBP2"), piece_at("PEBP2")),
            (piece_at("PEBP2"), piece_at("A1")),  # the nested span
            (piece_at("alpha", 0), piece_at("A1")),
            (piece_at("alpha", 1), piece_at("B1")),
            (piece_at("GM"), piece_at("CSF")),
        ]
        l = len(seq)
        s = np.full(l, 0.1)
        e = np.full(l, 0.1)
        m = np.full((l, l), 0.1)
        s[starts] = 0.9
        e[ends] = 0.9
        for i, j in cells:
            m[i, j] = 0.9

        mask = build_structural_mask(seq)
        s, e, m = mask_boundary(s, mask), mask_boundary(e, mask), mask_matrix(m, mask)
        assert sorted(np.flatnonzero(s > 0.5)) == sorted(starts)
        assert sorted(np.flatnonzero(e > 0.5)) == sorted(ends)

        sel = select_candidates(s, e, m, 0.5, mask)
        spans = decode_spans(sel, DecodeConfig(t_eval=0.5))
        entities = to_entities(spans, seq, "Protein")
        surfaces = sorted(p.text for p in entities)
        assert len(entities) == 5
        assert surfaces == sorted(
            ["PEBP2", "alpha A1", "alpha B1", "GM-CSF", "PEBP2 alpha A1"]
        )
        assert "PEBP2 alpha A1" in surfaces and "PEBP2" in surfaces
        for p in entities:
            assert sentence[p.start_char : p.end_char] == p.text
        _report("nested example reconstruction", t0, 1.0)


class TestLossWeighting:
    def test_weights_at_three_lambdas(self):
        t0 = time.perf_counter()
        from span2d.training import StructuralMask

        l = 4
        mask = StructuralMask(
            valid=np.ones(l, dtype=bool), valid2d=np.triu(np.ones((l, l), dtype=bool))
        )
        gold = GoldLabels.from_pairs([(0, 2), (1, 1)], l)
        rng = np.random.default_rng(5)
        s = rng.uniform(0.2, 0.8, size=l)
        e = rng.uniform(0.2, 0.8, size=l)
        m = np.triu(rng.uniform(0.2, 0.8, size=(l, l)))
        for lam, w_se, w_m in ((0.0, 0.5, 0.0), (0.1, 0.45, 0.1), (1.0, 0.0, 1.0)):
            cfg = LossConfig(lam=lam, t_train=0.3)
            sel = select_candidates(s, e, m, cfg.t_train, mask, gold=gold)
            loss, parts = combined_loss(s, e, m, mask, sel, gold, cfg)
            want = w_se * (parts.f_s + parts.f_e) + w_m * parts.f_m
            assert abs(loss - want) < 1e-12, (lam, loss, want)
        _report("loss weighting", t0, 1.0)


class TestMetricCheck:
    def test_f1_values_and_consistency(self):
        t0 = time.perf_counter()
        # counts with P = 88.4% and R = 88.0% exactly
        pred = [(0, "T", k, k + 1) for k in range(5500)]
        gold = [(0, "T", k, k + 1) for k in range(4862)] + [
            (1, "T", k, k + 1) for k in range(663)
        ]
        report = evaluate(pred, gold)
        assert abs(report.micro[0] - 88.4) < 1e-9
        assert abs(report.micro[1] - 88.0) < 1e-9
        assert abs(report.micro[2] - F1_HIGH) < 1e-9

        # single-type micro equals macro
        for a, b in zip(report.micro, report.macro):
            assert abs(a - b) < 1e-12

        # self-consistency of every reported row
        mixed_pred = [(0, "A", 0, 3), (0, "B", 4, 9), (1, "A", 2, 5), (1, "B", 0, 1)]
        mixed_gold = [(0, "A", 0, 3), (0, "B", 1, 2), (1, "A", 2, 5), (1, "A", 7, 9)]
        rep = evaluate(mixed_pred, mixed_gold)
        for p, r, f1 in [rep.micro, *[(t.precision, t.recall, t.f1) for t in rep.per_type.values()]]:
            want = 2 * p * r / (p + r) if p + r > 0 else 0.0
            assert abs(f1 - want) < 1e-12
        _report("metric check", t0, 1.0)


def _gold_items(samples):
    return {
        (k, etype, start, end)
        for k, sample in enumerate(samples)
        for etype, start, end in sample.entities
    }


def _nested_gold_pairs(samples):
    """Pairs of distinct gold spans where one contains the other."""
    pairs = []
    for k, sample in enumerate(samples):
        ents = [(k, t, s, e) for t, s, e in sample.entities]
        for a in ents:
            for b in ents:
                if a != b and a[2] <= b[2] and b[3] <= a[3]:
                    pairs.append((a, b))
    return pairs


def _predict_items(ckpt_path, data_path, queries_path, t_eval=0.5):
    model, _ = load_checkpoint(ckpt_path)
    samples = load_dataset(data_path)
    queries = load_queries(queries_path)
    tokenized, _ = tokenize_units(expand_samples(samples, queries), model.table, model.config.cap)
    decode_cfg = DecodeConfig(t_eval=t_eval)
    pred = set()
    for unit in tokenized:
        result = model.extract(unit.seq, decode_cfg)
        for p in to_entities(result.spans, unit.seq, unit.entity_type):
            pred.add((unit.sample_idx, p.entity_type, p.start_char, p.end_char))
    return pred, samples


class TestEndToEndOverfit:
    def test_overfit_and_ablation_direction(self, tmp_path):
        t0 = time.perf_counter()
        data = tmp_path / "synth.jsonl"
        queries = tmp_path / "synthq.json"
        assert run_command(
            ["synth", "--out", str(data), "--queries-out", str(queries),
             "--sentences", "50", "--seed", "42"]
        ) == 0
        samples = load_dataset(data)
        raw = [
            {"text": s.text, "entities": [{"type": t, "start": a, "end": b} for t, a, b in s.entities]}
            for s in samples
        ]
        assert len(samples) == 50
        assert len(load_queries(queries)) == 3
        assert nesting_rate(raw) >= 0.20

        common = [
            "--data", str(data), "--queries", str(queries),
            "--epochs", "120", "--batch", "8", "--lr", "3e-3", "--seed", "0",
            "--num-merges", "600",
        ]
        full_ckpt = tmp_path / "full.s2dc"
        assert run_command(["train", *common, "--out", str(full_ckpt)]) == 0

        pred, samples = _predict_items(full_ckpt, data, queries)
        gold = _gold_items(samples)
        report = evaluate(pred, gold, average="micro")
        print(f"  full model train micro-F1: {report.f1:.2f}")
        assert report.f1 >= 95.0

        nested = _nested_gold_pairs(samples)
        assert nested, "synthetic corpus lost its nested pairs"
        recovered = [(a, b) for a, b in nested if a in pred and b in pred]
        assert recovered, "no nested pair was recovered exactly"

        ablated_ckpt = tmp_path / "no2dp.s2dc"
        assert run_command(["train", *common, "--no-2dp", "--out", str(ablated_ckpt)]) == 0
        pred_1d, _ = _predict_items(ablated_ckpt, data, queries)
        nested_spans = {span for pair in nested for span in pair}
        missed = nested_spans - pred_1d
        print(f"  1D fallback misses {len(missed)} of {len(nested_spans)} nested spans")
        assert missed, "the 1D fallback unexpectedly emitted every nested span"
        _report("end-to-end overfit", t0, 600.0)


class TestPersistence:
    def _train_twice(self, tmp_path, seed):
        data = tmp_path / "d.jsonl"
        queries = tmp_path / "q.json"
        assert run_command(
            ["synth", "--out", str(data), "--queries-out", str(queries),
             "--sentences", "8", "--seed", "3"]
        ) == 0
        outs = []
        for tag in ("a", "b"):
            ckpt = tmp_path / f"run_{tag}.s2dc"
            assert run_command(
                ["train", "--data", str(data), "--queries", str(queries),
                 "--epochs", "8", "--batch", "4", "--lr", "3e-3",
                 "--seed", str(seed), "--num-merges", "300",
                 "--dim", "32", "--ff", "64",
                 "--out", str(ckpt)]
            ) == 0
            outs.append(ckpt)
        return data, queries, outs

    def test_round_trips_and_seeded_determinism(self, tmp_path):
        t0 = time.perf_counter()
        # BPE merge file round trip is byte-stable
        table = train_bpe(["low low low lower lowest"], 6)
        p1, p2 = tmp_path / "m1.txt", tmp_path / "m2.txt"
        save_merges(table, p1)
        save_merges(load_merges(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

        # two seeded runs: identical checkpoint bytes
        data, queries, (ckpt_a, ckpt_b) = self._train_twice(tmp_path, seed=11)
        assert ckpt_a.read_bytes() == ckpt_b.read_bytes()

        # checkpoint save -> load -> save is byte-stable
        model, meta = load_checkpoint(ckpt_a)
        resaved = tmp_path / "resaved.s2dc"
        save_checkpoint(model, resaved, meta)
        assert resaved.read_bytes() == ckpt_a.read_bytes()

        # identical eval output across two runs of the same command
        cmd = [
            sys.executable, "-m", "span2d.appcli", "eval",
            "--data", str(data), "--queries", str(queries), "--ckpt", str(ckpt_a),
        ]
        out_1 = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
        out_2 = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
        assert out_1 == out_2 and out_1.strip()
        _report("persistence and determinism", t0, 120.0)
