"""Gradient and semantics tests for the tensor engine.

Every differentiable primitive is checked against central finite differences
in float64, plus random multi-op composites. Expected values in the direct
tests were computed by hand or with the oracles in oracles.py.
"""

import numpy as np
import pytest

from nextloc import autodiff as ad
from oracles import finite_difference_grad, relative_error


def fd_check(build, x0, tol=1e-5, h=1e-4):
    """Compare analytic grad of scalar build(x) against central differences."""
    with ad.use_dtype(np.float64):
        x = ad.Tensor(np.array(x0, dtype=np.float64), requires_grad=True)
        out = build(x)
        out.backward()
        analytic = x.grad.copy()

        def f(v):
            xv = ad.Tensor(np.array(v, dtype=np.float64))
            return float(build(xv).data.sum())

        numeric = finite_difference_grad(f, np.array(x0, dtype=np.float64), h=h)
    err = relative_error(analytic, numeric)
    assert err < tol, f"relative error {err}"


def scalarize(t):
    # reduce to a scalar with fixed non-uniform weights, so reductions do
    # not cancel structured outputs (e.g. softmax rows summing to 1)
    if t.ndim == 0:
        return t
    w = np.cos(np.arange(t.data.size, dtype=np.float64)).reshape(t.shape) + 1.5
    return ad.sum_all(ad.mul(t, ad.Tensor(w.astype(t.data.dtype))))


class TestForwardValues:
    def test_mul_square_grad(self):
        x = ad.Tensor(np.array(3.0), requires_grad=True)
        y = ad.mul(x, x)
        y.backward()
        assert y.item() == 9.0
        assert x.grad == pytest.approx(6.0)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.normal(size=7) * 10
            s = ad.softmax(ad.tensor(v))
            assert abs(s.data.sum() - 1.0) < 1e-6

    def test_softmax_ln3(self):
        s = ad.softmax(ad.tensor([np.log(3.0), 0.0]))
        np.testing.assert_allclose(s.data, [0.75, 0.25], atol=1e-6)

    def test_cross_entropy_two_class_uniform(self):
        # logits (0,0), target 0 -> ln 2
        loss = ad.cross_entropy(ad.tensor([[0.0, 0.0]]), [0])
        assert loss.item() == pytest.approx(np.log(2.0), abs=1e-6)

    def test_cross_entropy_saturated(self):
        logits = np.zeros((1, 5))
        logits[0, 2] = 30.0
        loss = ad.cross_entropy(ad.tensor(logits), [2])
        assert loss.item() < 1e-9

    def test_segment_mean_empty_segment_is_zero(self):
        data = ad.tensor([[2.0, 4.0], [6.0, 8.0]])
        out = ad.segment_mean(data, [0, 0], 3)
        np.testing.assert_allclose(out.data, [[4.0, 6.0], [0.0, 0.0], [0.0, 0.0]])

    def test_gather_rows(self):
        table = ad.tensor(np.arange(12.0).reshape(4, 3))
        out = ad.gather_rows(table, [3, 0, 3])
        np.testing.assert_allclose(out.data, [[9, 10, 11], [0, 1, 2], [9, 10, 11]])

    def test_l2_normalize_rows(self):
        x = ad.tensor([[3.0, 4.0], [0.0, 0.0]])
        y = ad.l2_normalize_rows(x)
        np.testing.assert_allclose(y.data[0], [0.6, 0.8], atol=1e-6)
        np.testing.assert_allclose(y.data[1], [0.0, 0.0])

    def test_shape_error_reports_op_and_shapes(self):
        with pytest.raises(ad.ShapeError) as ei:
            ad.matmul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((4, 2))))
        msg = str(ei.value)
        assert "matmul" in msg and "(2, 3)" in msg and "(4, 2)" in msg


class TestGradients:
    """Finite-difference checks per primitive (float64, h=1e-4)."""

    def test_matmul(self):
        w = np.random.default_rng(1).normal(size=(4, 3))
        fd_check(lambda x: scalarize(ad.matmul(x, ad.tensor(w))),
                 np.random.default_rng(2).normal(size=(5, 4)))

    def test_add_broadcast_bias(self):
        b = np.random.default_rng(3).normal(size=4)
        fd_check(lambda x: scalarize(ad.add(x, ad.tensor(b))),
                 np.random.default_rng(4).normal(size=(3, 4)))

    def test_add_bias_grad(self):
        x = np.random.default_rng(5).normal(size=(3, 4))
        fd_check(lambda b: scalarize(ad.add(ad.tensor(x), b)),
                 np.random.default_rng(6).normal(size=4))

    def test_sub(self):
        y = np.random.default_rng(7).normal(size=(2, 3))
        fd_check(lambda x: scalarize(ad.sub(x, ad.tensor(y))),
                 np.random.default_rng(8).normal(size=(2, 3)))

    def test_mul_column_broadcast(self):
        m = np.random.default_rng(9).normal(size=(5, 1))
        fd_check(lambda x: scalarize(ad.mul(x, ad.tensor(m))),
                 np.random.default_rng(10).normal(size=(5, 3)))

    def test_concat_last_axis(self):
        y = np.random.default_rng(11).normal(size=(3, 2))
        fd_check(lambda x: scalarize(ad.concat([x, ad.tensor(y)], axis=-1)),
                 np.random.default_rng(12).normal(size=(3, 4)))

    def test_concat_axis0(self):
        y = np.random.default_rng(13).normal(size=(2, 3))
        fd_check(lambda x: scalarize(ad.concat([x, ad.tensor(y)], axis=0)),
                 np.random.default_rng(14).normal(size=(4, 3)))

    @pytest.mark.parametrize("op", [ad.sigmoid, ad.tanh, ad.sin])
    def test_pointwise(self, op):
        fd_check(lambda x: scalarize(op(x)),
                 np.random.default_rng(15).normal(size=(4, 3)))

    def test_relu_away_from_kink(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=(4, 3))
        x[np.abs(x) < 0.2] = 0.5
        fd_check(lambda t: scalarize(ad.relu(t)), x)

    def test_softmax(self):
        fd_check(lambda x: scalarize(ad.softmax(x)),
                 np.random.default_rng(17).normal(size=(3, 5)))

    def test_log_softmax_nll(self):
        targets = np.array([1, 0, 3])
        fd_check(lambda x: ad.nll_loss(ad.log_softmax(x), targets),
                 np.random.default_rng(18).normal(size=(3, 5)))

    def test_mean_rows(self):
        fd_check(lambda x: scalarize(ad.mean_rows(x)),
                 np.random.default_rng(19).normal(size=(6, 3)))

    def test_gather_rows_grad(self):
        idx = np.array([0, 2, 2, 1])
        fd_check(lambda t: scalarize(ad.gather_rows(t, idx)),
                 np.random.default_rng(20).normal(size=(3, 4)))

    def test_scatter_rows_base_grad(self):
        rows = np.random.default_rng(21).normal(size=(2, 3))
        fd_check(lambda b: scalarize(ad.scatter_rows(b, [1, 3], ad.tensor(rows))),
                 np.random.default_rng(22).normal(size=(5, 3)))

    def test_scatter_rows_rows_grad(self):
        base = np.random.default_rng(23).normal(size=(5, 3))
        fd_check(lambda r: scalarize(ad.scatter_rows(ad.tensor(base), [1, 3], r)),
                 np.random.default_rng(24).normal(size=(2, 3)))

    def test_segment_mean_grad(self):
        seg = np.array([0, 1, 0, 2, 1])
        fd_check(lambda x: scalarize(ad.segment_mean(x, seg, 4)),
                 np.random.default_rng(25).normal(size=(5, 3)))

    def test_l2_normalize_grad(self):
        fd_check(lambda x: scalarize(ad.l2_normalize_rows(x)),
                 np.random.default_rng(26).normal(size=(4, 3)) + 2.0)

    def test_slice_cols_grad(self):
        fd_check(lambda x: scalarize(ad.slice_cols(x, 1, 3)),
                 np.random.default_rng(27).normal(size=(4, 5)))

    def test_dropout_fixed_mask_grad(self):
        # with a frozen mask, dropout is a linear scaling
        rng_mask = np.random.default_rng(28)

        def build(x):
            rng = np.random.default_rng(28)  # same mask every call
            return scalarize(ad.dropout(x, 0.5, rng, train=True))

        fd_check(build, np.random.default_rng(29).normal(size=(6, 4)))
        del rng_mask


class TestComposites:
    def test_random_five_op_composites(self):
        # 5-layer random expressions through mixed primitives, 100 seeds
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n, k = 4, 3
            w1 = rng.normal(size=(k, 5))
            w2 = rng.normal(size=(5 + k, 4))
            idx = rng.integers(0, n, size=6)
            seg = rng.integers(0, 3, size=6)
            targets = rng.integers(0, 4, size=3)

            def build(x):
                h1 = ad.tanh(ad.matmul(x, ad.tensor(w1)))          # (n,5)
                h2 = ad.concat([h1, ad.sigmoid(x)], axis=-1)       # (n,5+k)
                h3 = ad.matmul(h2, ad.tensor(w2))                  # (n,4)
                h4 = ad.gather_rows(h3, idx)                       # (6,4)
                h5 = ad.segment_mean(h4, seg, 3)                   # (3,4)
                return ad.nll_loss(ad.log_softmax(h5), targets)

            fd_check(build, rng.normal(size=(n, k)))


class TestTapeProperties:
    def test_accumulation_order_independent(self):
        # integer-valued float64 data: sums are exact, so any reverse
        # topological order of the tape must give bit-identical gradients
        with ad.use_dtype(np.float64):
            x = ad.Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
            a = ad.add(x, x)
            b = ad.mul(x, ad.tensor(2.0))
            c = ad.add(a, b)
            d = ad.concat([c, x], axis=-1)
            out = ad.mean_rows(d)
            out.backward(np.ones_like(out.data))
            g1 = x.grad.copy()

            # rebuild and replay closures in reverse creation order
            x2 = ad.Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
            nodes = []
            a2 = ad.add(x2, x2); nodes.append(a2)
            b2 = ad.mul(x2, ad.tensor(2.0)); nodes.append(b2)
            c2 = ad.add(a2, b2); nodes.append(c2)
            d2 = ad.concat([c2, x2], axis=-1); nodes.append(d2)
            o2 = ad.mean_rows(d2); nodes.append(o2)
            o2.accumulate_grad(np.ones_like(o2.data))
            for node in reversed(nodes):
                if node._backward is not None:
                    node._backward()
            np.testing.assert_array_equal(g1, x2.grad)

    def test_no_grad_builds_no_tape(self):
        x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
        with ad.no_grad():
            y = ad.relu(ad.matmul(x, x))
        assert y._parents == () and y._backward is None

    def test_dropout_eval_identity(self):
        x = ad.tensor(np.random.default_rng(0).normal(size=(10, 5)))
        y = ad.dropout(x, 0.5, None, train=False)
        assert y is x

    def test_dropout_train_preserves_expectation(self):
        rng = np.random.default_rng(42)
        x = ad.tensor(np.ones((100000, 1)))
        y = ad.dropout(x, 0.3, rng, train=True)
        assert abs(y.data.mean() - 1.0) < 0.01
