"""Tensor/tape contracts and gradient correctness against finite differences."""

import numpy as np
import pytest

from a2gnn import autodiff as ad
from a2gnn.autodiff import Tape, Tensor, backward, grad_check
from a2gnn.exceptions import (
    DegenerateRowError,
    DetachedGraphError,
    ReproducibilityError,
    ShapeError,
    TapeConsumedError,
)


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(ad.matmul(a, b).values, b.values)

    def test_projector_zeroes_row(self):
        p = Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        assert np.array_equal(ad.matmul(p, b).values, [[5.0, 6.0], [0.0, 0.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(0)
        b = Tensor(rng.standard_normal((3, 4)))
        a0 = Tensor(rng.standard_normal((2, 3)))
        err = grad_check(lambda a: ad.sum_all(ad.matmul(a, b)), a0, h=1e-6)
        assert err <= 1e-5
        err_b = grad_check(lambda bb: ad.sum_all(ad.matmul(a0, bb)), b, h=1e-6)
        assert err_b <= 1e-5


class TestSoftmaxRows:
    def test_known_row(self):
        x = Tensor([[0.0, 0.0, np.log(2.0)]])
        out = ad.softmax_rows(x)
        np.testing.assert_allclose(out.values, [[0.25, 0.25, 0.5]], atol=1e-15)

    def test_uniform_row(self):
        x = Tensor([[3.7, 3.7, 3.7, 3.7]])
        np.testing.assert_allclose(ad.softmax_rows(x).values, [[0.25] * 4], atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        for seed in range(20):
            x = Tensor(np.random.default_rng(seed).standard_normal((5, 7)) * 10)
            mask = rng.random((5, 7)) > 0.3
            mask[:, 0] = True
            s = ad.softmax_rows(x, mask).values
            np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
            assert (s[~mask] == 0.0).all()

    def test_fully_masked_row_raises(self):
        x = Tensor(np.zeros((2, 3)))
        mask = np.array([[True, True, True], [False, False, False]])
        with pytest.raises(DegenerateRowError, match="1"):
            ad.softmax_rows(x, mask)

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        x0 = Tensor(rng.standard_normal((3, 5)))
        w = rng.standard_normal((3, 5))  # random probe of the full Jacobian
        err = grad_check(
            lambda x: ad.sum_all(ad.mul_const(ad.softmax_rows(x), w)), x0, h=1e-6
        )
        assert err <= 1e-5

    def test_masked_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x0 = Tensor(rng.standard_normal((4, 4)))
        mask = ~np.eye(4, dtype=bool)
        w = rng.standard_normal((4, 4))
        err = grad_check(
            lambda x: ad.sum_all(ad.mul_const(ad.softmax_rows(x, mask), w)), x0, h=1e-6
        )
        assert err <= 1e-5


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape():
            backward(ad.sum_all(x))
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_quadratic(self):
        x = Tensor([[1.0, -2.0]], requires_grad=True)
        with Tape():
            backward(ad.sum_all(ad.mul(x, x)))
        assert np.array_equal(x.grad, [[2.0, -4.0]])

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape():
            y = ad.mul(x, x)
            with pytest.raises(ShapeError):
                backward(y)

    def test_detached_loss_rejected(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        loss = ad.sum_all(x)  # no tape active
        with pytest.raises(DetachedGraphError):
            backward(loss)

    def test_double_backward_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape():
            loss = ad.sum_all(x)
            backward(loss)
            with pytest.raises(TapeConsumedError):
                backward(loss)

    def test_grad_shapes_match_values(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
        c = Tensor(rng.standard_normal((1, 4)), requires_grad=True)
        with Tape():
            out = ad.add(ad.matmul(a, b), c)
            backward(ad.sum_all(ad.tanh(out)))
        for t in (a, b, c):
            assert t.grad.shape == t.values.shape

    def test_linearity_of_backward(self):
        rng = np.random.default_rng(5)
        x0 = rng.standard_normal((3, 3))
        alpha, beta = 0.7, -1.3

        def run(fn):
            x = Tensor(x0.copy(), requires_grad=True)
            with Tape():
                backward(fn(x))
            return x.grad

        f = lambda x: ad.sum_all(ad.tanh(x))
        g = lambda x: ad.sum_all(ad.mul(x, x))
        combined = run(lambda x: ad.add(ad.scale(f(x), alpha), ad.scale(g(x), beta)))
        expected = alpha * run(f) + beta * run(g)
        np.testing.assert_allclose(combined, expected, atol=1e-10)


class TestGradCheck:
    def test_identity_error_is_rounding_level(self):
        x = Tensor(np.array([[0.3, -0.7]]))
        assert grad_check(lambda t: ad.sum_all(t), x) <= 1e-10

    def test_tanh_closed_form(self):
        x = Tensor(np.array([[0.5]]))
        err = grad_check(lambda t: ad.sum_all(ad.tanh(t)), x)
        assert err <= 1e-7
        # analytic derivative equals 1 - tanh^2(0.5)
        p = Tensor(np.array([[0.5]]), requires_grad=True)
        with Tape():
            backward(ad.sum_all(ad.tanh(p)))
        assert abs(p.grad[0, 0] - (1.0 - np.tanh(0.5) ** 2)) <= 1e-12

    def test_step_size_bounds(self):
        x = Tensor(np.ones((1, 1)))
        with pytest.raises(ValueError):
            grad_check(lambda t: ad.sum_all(t), x, h=1e-3)

    def test_nondeterministic_function_rejected(self):
        state = {"n": 0}

        def f(t):
            state["n"] += 1
            return ad.scale(ad.sum_all(t), float(state["n"]))

        with pytest.raises(ReproducibilityError):
            grad_check(f, Tensor(np.ones((2, 2))))


def _random_composition(seed):
    """Random smooth op chain of depth <= 6 ending in a scalar."""
    rng = np.random.default_rng(seed)
    rows, cols = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    x0 = Tensor(rng.standard_normal((rows, cols)))
    consts = [rng.standard_normal((cols, cols)) for _ in range(6)]
    col_consts = [rng.standard_normal((rows, 1)) for _ in range(6)]
    choices = rng.integers(0, 7, size=int(rng.integers(1, 7)))

    def f(t):
        h = t
        for depth, op in enumerate(choices):
            if op == 0:
                h = ad.tanh(h)
            elif op == 1:
                h = ad.sigmoid(h)
            elif op == 2:
                h = ad.matmul(h, Tensor(consts[depth]))
            elif op == 3:
                h = ad.scale(h, 0.7)
            elif op == 4:
                h = ad.softmax_rows(h)
            elif op == 5:
                h = ad.add_const(h, 0.25)
            elif op == 6:
                h = ad.mul_const(h, col_consts[depth])
        return ad.sum_all(ad.mul(h, h))

    return f, x0


@pytest.mark.parametrize("seed", range(100))
def test_random_composition_gradients(seed):
    f, x0 = _random_composition(seed)
    assert grad_check(f, x0, h=1e-6) <= 1e-4


class TestDeterminism:
    def test_bitwise_identical_forward_and_grads(self):
        def run():
            rng = np.random.default_rng(7)
            x = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
            with Tape():
                h = ad.dropout(ad.sigmoid(x), 0.3, np.random.default_rng(11))
                loss = ad.sum_all(ad.mul(h, h))
                backward(loss)
            return loss.values.copy(), x.grad.copy()

        v1, g1 = run()
        v2, g2 = run()
        assert np.array_equal(v1, v2) and np.array_equal(g1, g2)


class TestDropout:
    def test_eval_mode_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert ad.dropout(x, 0.3, np.random.default_rng(0), training=False) is x

    def test_inverted_scaling(self):
        x = Tensor(np.ones((200, 200)))
        out = ad.dropout(x, 0.3, np.random.default_rng(0)).values
        kept = out[out != 0.0]
        np.testing.assert_allclose(kept, 1.0 / 0.7)
        assert abs(out.mean() - 1.0) < 0.02

    def test_backward_uses_same_mask(self):
        x = Tensor(np.ones((5, 5)), requires_grad=True)
        with Tape():
            out = ad.dropout(x, 0.4, np.random.default_rng(3))
            backward(ad.sum_all(out))
        np.testing.assert_array_equal(x.grad != 0.0, out.values != 0.0)


class TestStructuralOps:
    def test_concat_slice_roundtrip_gradient(self):
        rng = np.random.default_rng(8)
        a0 = Tensor(rng.standard_normal((3, 2)))
        b = Tensor(rng.standard_normal((3, 3)))

        def f(a):
            z = ad.concat_cols([a, b])
            return ad.sum_all(ad.mul(ad.slice_cols(z, 1, 4), ad.slice_cols(z, 0, 3)))

        assert grad_check(f, a0, h=1e-6) <= 1e-6

    def test_tile_rows_gradient(self):
        x0 = Tensor(np.random.default_rng(9).standard_normal((2, 3)))
        w = np.random.default_rng(10).standard_normal((6, 3))
        err = grad_check(
            lambda x: ad.sum_all(ad.mul_const(ad.tile_rows(x, 3), w)), x0, h=1e-6
        )
        assert err <= 1e-6

    def test_block_matmul_equals_per_block_product(self):
        rng = np.random.default_rng(11)
        adj = Tensor(rng.standard_normal((4, 4)))
        x = Tensor(rng.standard_normal((12, 5)))
        out = ad.block_matmul(adj, x, 3).values
        for b in range(3):
            np.testing.assert_allclose(
                out[b * 4:(b + 1) * 4], adj.values @ x.values[b * 4:(b + 1) * 4]
            )

    def test_block_matmul_gradients(self):
        rng = np.random.default_rng(12)
        adj0 = Tensor(rng.standard_normal((3, 3)))
        x0 = Tensor(rng.standard_normal((6, 2)))
        w = rng.standard_normal((6, 2))
        f_adj = lambda a: ad.sum_all(ad.mul_const(ad.block_matmul(a, x0, 2), w))
        f_x = lambda x: ad.sum_all(ad.mul_const(ad.block_matmul(adj0, x, 2), w))
        assert grad_check(f_adj, adj0, h=1e-6) <= 1e-6
        assert grad_check(f_x, x0, h=1e-6) <= 1e-6

    def test_row_sums_and_div_gradient(self):
        x0 = Tensor(np.abs(np.random.default_rng(13).standard_normal((3, 4))) + 0.5)
        w = np.random.default_rng(14).standard_normal((3, 4))

        def f(x):
            normed = ad.div(x, ad.row_sums(x))
            return ad.sum_all(ad.mul_const(normed, w))

        assert grad_check(f, x0, h=1e-6) <= 1e-5


class TestFiniteness:
    def test_forward_values_stay_finite(self):
        rng = np.random.default_rng(15)
        x = Tensor(rng.standard_normal((4, 4)) * 50)
        pos = Tensor(np.abs(rng.standard_normal((4, 4))) + 0.1)
        outs = [
            ad.softmax_rows(x),
            ad.tanh(x),
            ad.sigmoid(x),
            ad.matmul(x, x),
            ad.concat_cols([x, x]),
            ad.add(x, x),
            ad.scale(x, 3.0),
            ad.log(pos),
            ad.exp(ad.clip_min(x, -10.0)),
            ad.dropout(x, 0.3, np.random.default_rng(0)),
        ]
        for out in outs:
            assert np.isfinite(out.values).all()
