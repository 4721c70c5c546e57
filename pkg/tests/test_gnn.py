"""Relation-channel construction: propagation semantics and gradients."""

import numpy as np
import pytest

from a2gnn import autodiff as ad
from a2gnn.autodiff import Tensor, grad_check
from a2gnn.exceptions import NumericsError
from a2gnn.gnn import (
    MlpParams,
    build_bundle,
    init_mlp,
    init_propagation_weights,
    own_mlp,
    propagate,
)


def naive_propagate(feats, adj, weights):
    """Triple-loop reference: aggregate then transform, ReLU between layers."""
    h = feats.copy()
    for li, w in enumerate(weights):
        agg = np.zeros_like(h)
        for i in range(adj.shape[0]):
            for j in range(adj.shape[1]):
                agg[i] += adj[i, j] * h[j]
        h = np.zeros((agg.shape[0], w.shape[1]))
        for i in range(agg.shape[0]):
            for k in range(w.shape[1]):
                h[i, k] = sum(agg[i, m] * w[m, k] for m in range(w.shape[0]))
        if li < len(weights) - 1:
            h = np.maximum(h, 0.0)
    return h


class TestOwnMlp:
    def test_zero_weights_give_zero(self):
        p = MlpParams(w1=Tensor(np.zeros((4, 3))), b1=Tensor(np.zeros(3)),
                      w2=Tensor(np.zeros((3, 3))), b2=Tensor(np.zeros(3)))
        out = own_mlp(p, Tensor(np.random.default_rng(0).standard_normal((5, 4))))
        assert np.array_equal(out.values, np.zeros((5, 3)))

    def test_identity_layers_reduce_to_relu(self):
        p = MlpParams(w1=Tensor(np.eye(3)), b1=Tensor(np.zeros(3)),
                      w2=Tensor(np.eye(3)), b2=Tensor(np.zeros(3)))
        s = np.random.default_rng(1).standard_normal((6, 3))
        out = own_mlp(p, Tensor(s))
        np.testing.assert_array_equal(out.values, np.maximum(s, 0.0))

    def test_gradient(self):
        rng = np.random.default_rng(2)
        p = init_mlp(rng, 4, 3)
        feats = Tensor(rng.standard_normal((5, 4)))
        probe = rng.standard_normal((5, 3))

        def f(w1):
            q = MlpParams(w1=w1, b1=p.b1, w2=p.w2, b2=p.b2)
            return ad.sum_all(ad.mul_const(own_mlp(q, feats), probe))

        assert grad_check(f, p.w1, h=1e-6) <= 1e-5


class TestPropagate:
    def test_identity_adjacency_single_layer(self):
        rng = np.random.default_rng(3)
        s = rng.standard_normal((4, 5))
        w = rng.standard_normal((5, 3))
        out = propagate(Tensor(s), Tensor(np.eye(4)), [Tensor(w)])
        np.testing.assert_allclose(out.values, s @ w, atol=1e-12)

    def test_one_hot_row_copies_neighbor(self):
        rng = np.random.default_rng(4)
        s = rng.standard_normal((3, 4))
        w = rng.standard_normal((4, 2))
        adj = np.zeros((3, 3))
        adj[0, 2] = 1.0
        adj[1, 1] = 1.0
        adj[2, 0] = 1.0
        out = propagate(Tensor(s), Tensor(adj), [Tensor(w)]).values
        np.testing.assert_allclose(out[0], s[2] @ w, atol=1e-12)

    def test_three_node_chain_matches_manual_arithmetic(self):
        # chain 0 <- 1 <- 2 with hand-set features and weights, two layers
        s = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        adj = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        w1 = np.array([[1.0, -1.0], [2.0, 0.5]])
        w2 = np.array([[1.0, 1.0], [0.0, -1.0]])
        out = propagate(Tensor(s), Tensor(adj), [Tensor(w1), Tensor(w2)]).values
        np.testing.assert_allclose(out, naive_propagate(s, adj, [w1, w2]), atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_brute_force_equivalence_small(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        layers = int(rng.integers(1, 3))
        d_in, d_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        s = rng.standard_normal((n, d_in))
        adj = rng.random((n, n))
        adj /= adj.sum(axis=1, keepdims=True)
        dims = [d_in] + [d_out] * layers
        ws = [rng.standard_normal((dims[i], dims[i + 1])) for i in range(layers)]
        out = propagate(Tensor(s), Tensor(adj), [Tensor(w) for w in ws]).values
        np.testing.assert_allclose(out, naive_propagate(s, adj, ws), atol=1e-12)

    def test_row_stochastic_convex_combination(self):
        rng = np.random.default_rng(5)
        s = rng.standard_normal((6, 4))
        w = rng.standard_normal((4, 3))
        adj = rng.random((6, 6))
        adj /= adj.sum(axis=1, keepdims=True)
        out = propagate(Tensor(s), Tensor(adj), [Tensor(w)]).values
        sw = s @ w
        np.testing.assert_allclose(out, adj @ sw, atol=1e-12)
        assert (out <= sw.max(axis=0) + 1e-12).all()
        assert (out >= sw.min(axis=0) - 1e-12).all()

    def test_batched_blocks_match_per_window(self):
        rng = np.random.default_rng(6)
        n, b = 4, 3
        s = rng.standard_normal((b * n, 5))
        adj = rng.random((n, n))
        adj /= adj.sum(axis=1, keepdims=True)
        ws = [rng.standard_normal((5, 2)), rng.standard_normal((2, 2))]
        out = propagate(Tensor(s), Tensor(adj), [Tensor(w) for w in ws], n_windows=b).values
        for k in range(b):
            blk = propagate(Tensor(s[k * n:(k + 1) * n]), Tensor(adj),
                            [Tensor(w) for w in ws]).values
            np.testing.assert_allclose(out[k * n:(k + 1) * n], blk, atol=1e-12)

    def test_non_finite_adjacency_rejected(self):
        adj = np.eye(3)
        adj[0, 0] = np.inf
        with pytest.raises(NumericsError):
            propagate(Tensor(np.zeros((3, 2))), Tensor(adj), [Tensor(np.zeros((2, 2)))])

    def test_dropout_only_in_training(self):
        rng = np.random.default_rng(7)
        s = Tensor(rng.standard_normal((4, 3)))
        adj = Tensor(np.eye(4))
        ws = [Tensor(rng.standard_normal((3, 3))), Tensor(rng.standard_normal((3, 3)))]
        frozen = propagate(s, adj, ws).values
        again = propagate(s, adj, ws, dropout_rate=0.5, rng=None, training=False).values
        np.testing.assert_array_equal(frozen, again)
        dropped = propagate(s, adj, ws, dropout_rate=0.5,
                            rng=np.random.default_rng(8), training=True).values
        assert not np.array_equal(frozen, dropped)

    def test_gradient_two_layers(self):
        rng = np.random.default_rng(9)
        s = Tensor(rng.standard_normal((4, 3)))
        adj_np = rng.random((4, 4))
        adj_np /= adj_np.sum(axis=1, keepdims=True)
        w2 = Tensor(rng.standard_normal((2, 2)))
        probe = rng.standard_normal((4, 2))

        def f(w1):
            out = propagate(s, Tensor(adj_np), [w1, w2])
            return ad.sum_all(ad.mul_const(out, probe))

        assert grad_check(f, Tensor(rng.standard_normal((3, 2))), h=1e-6) <= 1e-5


class TestBuildBundle:
    def _parts(self, seed=0, n=4, d_in=6, d_out=3):
        rng = np.random.default_rng(seed)
        mlp = init_mlp(rng, d_in, d_out)
        w_imp = init_propagation_weights(rng, d_in, d_out, 2, "gnn_implicit")
        w_pre = init_propagation_weights(rng, d_in, d_out, 2, "gnn_predefined")
        adj = rng.random((n, n))
        adj /= adj.sum(axis=1, keepdims=True)
        feats = Tensor(rng.standard_normal((n, d_in)))
        return mlp, w_imp, w_pre, Tensor(adj), feats

    def test_channels_track_available_graphs(self):
        mlp, w_imp, w_pre, adj, feats = self._parts()
        two = build_bundle(feats, mlp, implicit_adj=adj, implicit_weights=w_imp)
        assert two.implicit is not None and two.predefined is None
        assert [name for name, _ in two.channels()] == ["own", "implicit"]
        three = build_bundle(feats, mlp, implicit_adj=adj, implicit_weights=w_imp,
                             predefined_adj=adj, predefined_weights=w_pre)
        assert [name for name, _ in three.channels()] == ["own", "implicit", "predefined"]

    def test_zero_features_zero_channels(self):
        mlp, w_imp, w_pre, adj, _ = self._parts()
        for t in (mlp.b1, mlp.b2):
            t.values[:] = 0.0
        feats = Tensor(np.zeros((4, 6)))
        bundle = build_bundle(feats, mlp, implicit_adj=adj, implicit_weights=w_imp,
                              predefined_adj=adj, predefined_weights=w_pre)
        for _, t in bundle.channels():
            assert np.array_equal(t.values, np.zeros((4, 3)))

    def test_channel_independence(self):
        mlp, w_imp, w_pre, adj, feats = self._parts(seed=1)
        base = build_bundle(feats, mlp, implicit_adj=adj, implicit_weights=w_imp,
                            predefined_adj=adj, predefined_weights=w_pre)
        w_imp[0].values += 0.5  # perturb only the implicit-channel weights
        bumped = build_bundle(feats, mlp, implicit_adj=adj, implicit_weights=w_imp,
                              predefined_adj=adj, predefined_weights=w_pre)
        assert np.array_equal(base.own.values, bumped.own.values)
        assert np.array_equal(base.predefined.values, bumped.predefined.values)
        assert not np.array_equal(base.implicit.values, bumped.implicit.values)
