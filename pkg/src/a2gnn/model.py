"""Model state and the end-to-end forward pass.

One forward pass covers a batch of windows stacked window-major: row
``b * N + v`` of every intermediate matrix belongs to window b, node v.
Training mode samples the learned adjacency and applies dropout; inference
mode uses the deterministic top-C adjacency and no stochastic layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import ArlParams, attend_and_fuse, init_arl
from .autodiff import Tensor
from .encoder import LstmParams, encode_sequence, init_lstm
from .exceptions import ConfigError, ShapeError
from .gnn import MlpParams, build_bundle, init_mlp, init_propagation_weights
from .graph_learner import (
    LearnedGraph,
    init_learned_graph,
    sample_training_adjacency,
    topc_inference,
)


@dataclass
class ModelState:
    """Named parameters plus optimizer moments and run configuration."""

    config: object
    n_nodes: int
    params: dict  # name -> Tensor
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step: int = 0
    pre_adj: np.ndarray | None = None  # row-normalized predefined adjacency

    def __post_init__(self):
        for name in self.params:
            self.adam_m.setdefault(name, np.zeros_like(self.params[name].values))
            self.adam_v.setdefault(name, np.zeros_like(self.params[name].values))

    @property
    def channel_count(self):
        k = 1
        if self.config.use_agl:
            k += 1
        if self.pre_adj is not None:
            k += 1
        return k

    # typed views over the flat parameter dict
    def lstm(self):
        return LstmParams(w_ih=self.params["lstm.w_ih"],
                          w_hh=self.params["lstm.w_hh"],
                          b=self.params["lstm.b"])

    def mlp(self):
        return MlpParams(w1=self.params["mlp.w1"], b1=self.params["mlp.b1"],
                         w2=self.params["mlp.w2"], b2=self.params["mlp.b2"])

    def graph(self):
        return LearnedGraph(logits=self.params["agl.logits"],
                            n_samples=self.config.n_edge_samples,
                            temperature=self.config.temperature)

    def propagation_weights(self, prefix):
        names = sorted(n for n in self.params if n.startswith(prefix + ".w"))
        return [self.params[n] for n in names]

    def arl(self):
        return ArlParams(embeddings=self.params["arl.embeddings"],
                         w_query=self.params["arl.w_query"],
                         w_key=self.params["arl.w_key"],
                         w_value=self.params["arl.w_value"])


def build_model(config, n_nodes, pre_graph=None, rng_init=None):
    """Initialize every parameter tensor for the configured channel set."""
    if rng_init is None:
        rng_init = np.random.default_rng(config.seed)
    d_enc = config.t_in * config.lstm_out
    params = {}

    lstm = init_lstm(rng_init, 1, config.lstm_out)
    params["lstm.w_ih"], params["lstm.w_hh"], params["lstm.b"] = lstm.w_ih, lstm.w_hh, lstm.b

    mlp = init_mlp(rng_init, d_enc, config.gnn_out)
    params.update({"mlp.w1": mlp.w1, "mlp.b1": mlp.b1, "mlp.w2": mlp.w2, "mlp.b2": mlp.b2})

    if config.use_agl:
        graph = init_learned_graph(rng_init, n_nodes, config.n_edge_samples,
                                   config.temperature)
        params["agl.logits"] = graph.logits
        for w in init_propagation_weights(rng_init, d_enc, config.gnn_out,
                                          config.gnn_layers, "gnn_implicit"):
            params[w.name] = w

    pre_adj = None
    if pre_graph is not None and pre_graph.present and config.use_ap:
        if pre_graph.weights.shape != (n_nodes, n_nodes):
            raise ShapeError(
                f"predefined graph is {pre_graph.weights.shape}, data has {n_nodes} nodes"
            )
        pre_adj = pre_graph.row_normalized()
        for w in init_propagation_weights(rng_init, d_enc, config.gnn_out,
                                          config.gnn_layers, "gnn_predefined"):
            params[w.name] = w

    arl = init_arl(rng_init, n_nodes, config.embed_dim, config.gnn_out,
                   config.attn_dim, config.value_dim)
    params.update({"arl.embeddings": arl.embeddings, "arl.w_query": arl.w_query,
                   "arl.w_key": arl.w_key, "arl.w_value": arl.w_value})

    k = 1 + int(config.use_agl) + int(pre_adj is not None)
    head = Tensor(
        rng_init.uniform(-1.0, 1.0, size=(k * config.value_dim, config.t_out))
        / np.sqrt(k * config.value_dim),
        requires_grad=True, name="head.w",
    )
    params["head.w"] = head

    return ModelState(config=config, n_nodes=n_nodes, params=params, pre_adj=pre_adj)


@dataclass
class ForwardResult:
    y_hat: Tensor  # (B * N, t_out), normalized scale
    coeffs: Tensor  # (B * N, K) attention coefficients
    channel_names: tuple
    effective_adj: object | None  # EffectiveAdjacency or None (w/o AGL)


def forward(state, x_batch, mode="inference", rngs=None, gumbel_noise=None):
    """Run the network on a (B, t_in, N) window batch.

    ``mode`` selects adjacency sampling vs top-C and gates dropout. Training
    mode draws Gumbel noise from ``rngs['gumbel']`` (or uses the provided
    frozen ``gumbel_noise`` arrays) and dropout masks from ``rngs['dropout']``.
    """
    if mode not in ("training", "inference"):
        raise ConfigError(f"forward mode must be training or inference, got {mode!r}")
    config = state.config
    b, t_in, n = x_batch.shape
    if t_in != config.t_in:
        raise ShapeError(f"window length {t_in} != configured t_in {config.t_in}")
    if n != state.n_nodes:
        raise ShapeError(f"batch has {n} nodes, model built for {state.n_nodes}")
    training = mode == "training"

    steps = [Tensor(x_batch[:, t, :].reshape(b * n, 1)) for t in range(t_in)]
    encoded = encode_sequence(state.lstm(), steps)

    effective = None
    implicit_adj = None
    if config.use_agl:
        graph = state.graph()
        if training:
            rng = rngs["gumbel"] if gumbel_noise is None and rngs else None
            effective = sample_training_adjacency(graph, rng=rng, noise=gumbel_noise)
        else:
            effective = topc_inference(graph)
        implicit_adj = effective.adj

    dropout_rng = rngs["dropout"] if training and rngs else None
    bundle = build_bundle(
        encoded, state.mlp(),
        implicit_adj=implicit_adj,
        implicit_weights=state.propagation_weights("gnn_implicit") if implicit_adj is not None else None,
        predefined_adj=Tensor(state.pre_adj) if state.pre_adj is not None else None,
        predefined_weights=state.propagation_weights("gnn_predefined") if state.pre_adj is not None else None,
        n_windows=b, dropout_rate=config.dropout, rng=dropout_rng, training=training,
    )

    fused = attend_and_fuse(state.arl(), bundle, n_windows=b,
                            use_attention=config.use_arl)
    y_hat = ad.matmul(fused.z, state.params["head.w"])
    return ForwardResult(y_hat=y_hat, coeffs=fused.coeffs,
                         channel_names=fused.channel_names, effective_adj=effective)


def stacked_to_windows(values, n_windows, n_nodes):
    """(B * N, t_out) stacked rows back to (B, t_out, N)."""
    return values.reshape(n_windows, n_nodes, -1).transpose(0, 2, 1)
