"""Kernel and gradient-tape tests.

Frozen constants were computed with mpmath at 50 digits before the
kernels were written.
"""

import numpy as np
import pytest

from span2d import numkernel as nk

# mpmath, 50 digits: 0.5*(1+tanh(0.836))
GELU_AT_1 = 0.8418422909437517
# mpmath: e/(e + 1/e)
TALU_AT_1 = 0.8807970779778824


class TestActivations:
    def test_gelu_fixed_points(self):
        assert nk.gelu_approx(0.0) == 0.0
        assert abs(nk.gelu_approx(1.0) - GELU_AT_1) < 1e-12

    def test_gelu_odd_part_identity(self):
        """gelu(x) - gelu(-x) = x: the tanh term is odd, the 0.5x even."""
        x = np.linspace(-10, 10, 2001)
        np.testing.assert_allclose(nk.gelu_approx(x) - nk.gelu_approx(-x), x, atol=1e-12)

    def test_talu_fixed_points(self):
        assert nk.talu(0.0) == 0.5
        assert abs(nk.talu(1.0) - TALU_AT_1) < 1e-12

    def test_talu_symmetry(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-30, 30, size=10000)
        np.testing.assert_allclose(nk.talu(x) + nk.talu(-x), 1.0, atol=1e-15)

    def test_talu_equals_logistic_of_2x(self):
        x = np.linspace(-20, 20, 10**4)
        assert np.max(np.abs(nk.talu(x) - nk.logistic(2.0 * x))) < 1e-12

    def test_talu_monotone_and_bounded(self):
        # No overflow across the whole float64-exponent range.
        assert np.all(np.isfinite(nk.talu(np.linspace(-700, 700, 4001))))
        # Open range and strict monotonicity where float64 can resolve it
        # (talu saturates to exactly 0.0 / 1.0 past |x| ~ 18.4).
        y = nk.talu(np.linspace(-15, 15, 2001))
        assert np.all(y > 0) and np.all(y < 1)
        assert np.all(np.diff(y) > 0)

    def test_talu_slope_peaks_at_half(self):
        h = 1e-6
        slope = (nk.talu(h) - nk.talu(-h)) / (2 * h)
        assert abs(slope - 0.5) < 1e-6

    def test_logistic_saturation_no_overflow(self):
        v = nk.logistic(36.0)
        assert 1 - 1e-12 < v < 1
        assert nk.logistic(-800.0) >= 0.0  # no overflow warnings or inf

    def test_logistic_zero(self):
        assert nk.logistic(0.0) == 0.5


class TestAffine:
    def test_identity(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(5, 4))
        np.testing.assert_array_equal(nk.affine(X, np.eye(4), np.zeros(4)), X)

    def test_one_by_one(self):
        out = nk.affine(np.array([[2.0]]), np.array([[3.0]]), np.array([1.0]))
        np.testing.assert_array_equal(out, [[7.0]])

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(3, 4))
        W = rng.normal(size=(2, 4))
        b = rng.normal(size=2)
        want = np.zeros((3, 2))
        for i in range(3):
            for o in range(2):
                acc = b[o]
                for k in range(4):
                    acc += X[i, k] * W[o, k]
                want[i, o] = acc
        np.testing.assert_allclose(nk.affine(X, W, b), want, atol=1e-12)

    def test_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(3, 4\).*\(2, 5\)"):
            nk.affine(np.zeros((3, 4)), np.zeros((2, 5)), np.zeros(2))


class TestGradTape:
    def test_square(self):
        tape = nk.GradTape()
        p = tape.param("p", np.asarray(3.0))
        grads = nk.grad_of(tape, p * p)
        assert grads["p"] == 6.0

    def test_talu_slope(self):
        tape = nk.GradTape()
        p = tape.param("p", np.asarray(0.0))
        grads = nk.grad_of(tape, nk.talu(p))
        assert grads["p"] == 0.5

    def test_untouched_param_gets_zero(self):
        tape = nk.GradTape()
        p = tape.param("p", np.asarray(2.0))
        q = tape.param("q", np.zeros((2, 2)))
        grads = nk.grad_of(tape, p * p)
        np.testing.assert_array_equal(grads["q"], np.zeros((2, 2)))

    def test_foreign_loss_rejected(self):
        tape_a, tape_b = nk.GradTape(), nk.GradTape()
        p = tape_b.param("p", np.asarray(1.0))
        with pytest.raises(ValueError, match="not produced on this tape"):
            nk.grad_of(tape_a, p * p)

    def test_non_scalar_loss_rejected(self):
        tape = nk.GradTape()
        p = tape.param("p", np.ones(3))
        with pytest.raises(ValueError, match="scalar"):
            nk.grad_of(tape, p * 2.0)

    def test_mixing_tapes_rejected(self):
        tape_a, tape_b = nk.GradTape(), nk.GradTape()
        a = tape_a.param("a", np.asarray(1.0))
        b = tape_b.param("b", np.asarray(1.0))
        with pytest.raises(ValueError, match="different tapes"):
            _ = a + b


def _fd_check(build_loss, params, h=1e-5, tol=1e-4):
    """Compare tape gradients of build_loss(params) against central
    finite differences, coordinate by coordinate."""
    tape = nk.GradTape()
    nodes = {k: tape.param(k, v) for k, v in params.items()}
    grads = nk.grad_of(tape, build_loss(nodes))
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1) if arr.ndim else arr.reshape(1)
        gflat = grads[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = float(build_loss(params))
            flat[k] = orig - h
            dn = float(build_loss(params))
            flat[k] = orig
            fd = (up - dn) / (2 * h)
            worst = max(worst, abs(gflat[k] - fd) / max(1.0, abs(fd)))
    assert worst < tol, f"worst relative gradient error {worst}"


class TestGradientOracle:
    def test_two_layer_composition(self):
        """A generic two-layer map through gelu and talu against the
        finite-difference oracle (step 1e-5)."""
        rng = np.random.default_rng(11)
        X = rng.normal(size=(4, 3))
        y = rng.integers(0, 2, size=4).astype(float)
        params = {
            "W1": rng.normal(size=(3, 3)) * 0.5,
            "b1": rng.normal(size=3) * 0.1,
            "v": rng.normal(size=3) * 0.5,
            "b2": np.asarray(0.1),
        }

        def loss(p):
            h = nk.gelu_approx(nk.affine(X, p["W1"], p["b1"]))
            pred = nk.talu(nk.matvec(h, p["v"]) + p["b2"])
            terms = -(y * nk.log(pred) + (1.0 - y) * nk.log(1.0 - pred))
            return nk.sum_all(terms) / 4.0

        _fd_check(loss, params)

    def test_individual_kernels(self):
        """Every taped kernel against finite differences on small inputs."""
        rng = np.random.default_rng(3)
        A = rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 4))
        u = rng.normal(size=4)
        w = rng.normal(size=4)
        ids = np.array([0, 2, 1, 2])

        cases = {
            "matmul": lambda p: nk.sum_all(nk.matmul(p["A"], nk.transpose(p["B"])) * A),
            "matvec": lambda p: nk.sum_all(nk.matvec(p["A"], p["u"]) * w),
            "dot": lambda p: nk.dot(p["u"], p["w"]) * 2.0,
            "rows": lambda p: nk.sum_all(nk.col_plus_row(p["u"], p["w"]) * B),
            "softmax": lambda p: nk.sum_all(nk.softmax_rows(p["A"]) * B),
            "take_row": lambda p: nk.sum_all(nk.take_row(p["A"], 1) * u),
            "slice_concat": lambda p: nk.sum_all(
                nk.concat_cols([nk.slice_cols(p["A"], 0, 2), nk.slice_cols(p["B"], 2, 4)]) * A
            ),
            "gather": lambda p: nk.sum_all(nk.gather_rows(p["A"], ids) * B),
            "mean_rows": lambda p: nk.sum_all(nk.mean_rows(p["A"] * p["A"]) * u[:, None]),
            "power": lambda p: nk.sum_all(nk.power(p["A"] * p["A"] + 1.0, -0.5) * B),
            "clip_log": lambda p: nk.sum_all(nk.log(nk.clip(nk.talu(p["A"]), 1e-7, 1 - 1e-7)) * B),
        }
        for name, loss in cases.items():
            params = {"A": A.copy(), "B": B.copy(), "u": u.copy(), "w": w.copy()}
            _fd_check(loss, params)

    def test_head_draws_every_coordinate(self):
        """100 random draws of a talu-normalized interaction head; every
        coordinate within 1e-4 of the finite-difference oracle."""
        rng = np.random.default_rng(2024)
        for _ in range(100):
            H = rng.normal(size=(5, 3))
            cls = H[0].copy()
            y = rng.integers(0, 2, size=5).astype(float)
            params = {
                "W": rng.uniform(-0.6, 0.6, size=(3, 3)),
                "b": rng.uniform(-0.2, 0.2, size=3),
                "v": rng.uniform(-0.6, 0.6, size=3),
                "c": np.asarray(rng.uniform(-0.2, 0.2)),
            }

            def loss(p):
                h = nk.gelu_approx(nk.affine(H, p["W"], p["b"]))
                s = (nk.talu(nk.matvec(h, cls)) + nk.talu(nk.matvec(H, p["v"]) + p["c"])) / 2.0
                terms = -(y * nk.log(s) + (1.0 - y) * nk.log(1.0 - s))
                return nk.sum_all(terms) / 5.0

            _fd_check(loss, params)


class TestTensor2:
    def test_validates_shape(self):
        with pytest.raises(ValueError, match="2-D"):
            nk.tensor2(np.zeros(3))
        with pytest.raises(ValueError, match="expected shape"):
            nk.tensor2(np.zeros((2, 3)), 3, 2)

    def test_rejects_non_finite(self):
        bad = np.zeros((2, 2))
        bad[0, 0] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            nk.tensor2(bad)

    def test_accepts_lists(self):
        out = nk.tensor2([[1, 2], [3, 4]])
        assert out.dtype == np.float64 and out.shape == (2, 2)
