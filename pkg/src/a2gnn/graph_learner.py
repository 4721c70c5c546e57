"""Trainable adjacency with differentiable edge sampling.

Training draws C relaxed categorical samples per node row (Gumbel noise +
temperature-scaled softmax) and averages them into a row-stochastic
propagation matrix; gradients flow through every sample back to the edge
logits. Inference replaces sampling with a deterministic softmax over each
row's C largest logits.

Self-loops are excluded from the candidate set by default: a node's own
signal travels through the dedicated own-information channel instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import DataError, ShapeError


@dataclass
class LearnedGraph:
    """Edge logits plus sampling hyperparameters."""

    logits: Tensor  # (N, N), trainable
    n_samples: int  # samples per row in training; kept neighbors at inference
    temperature: float
    include_self: bool = False

    @property
    def n_nodes(self):
        return self.logits.values.shape[0]

    def candidate_mask(self):
        n = self.n_nodes
        mask = np.ones((n, n), dtype=bool)
        if not self.include_self:
            np.fill_diagonal(mask, False)
        return mask


@dataclass
class EffectiveAdjacency:
    """Row-stochastic propagation matrix in one of two modes."""

    adj: Tensor
    mode: str  # "training" or "inference"


def init_learned_graph(rng, n_nodes, n_samples, temperature, include_self=False):
    """Near-uniform start: Normal(0, 0.01) logits keep every edge samplable."""
    if temperature <= 0:
        raise DataError(f"temperature must be positive, got {temperature}")
    logits = Tensor(
        rng.normal(0.0, 0.01, size=(n_nodes, n_nodes)),
        requires_grad=True,
        name="agl.logits",
    )
    return LearnedGraph(logits=logits, n_samples=n_samples, temperature=temperature,
                        include_self=include_self)


def edge_probs(graph):
    """Row-wise sampling probabilities over each node's candidate neighbors."""
    if graph.n_nodes < 2:
        raise ShapeError("edge_probs: need at least 2 nodes to have neighbors")
    return ad.softmax_rows(graph.logits, graph.candidate_mask())


def gumbel_noise(rng, shape):
    u = np.maximum(rng.random(shape), 1e-300)
    return -np.log(-np.log(u))


def gumbel_sample(probs, temperature, rng=None, noise=None):
    """One relaxed sample per row: softmax((log p + eps) / temperature).

    Noise is treated as a constant, so the sample stays differentiable in
    ``probs``. Candidates are the strictly positive entries of ``probs``
    (row softmaxes put exact zeros outside the candidate set). Pass
    ``noise`` explicitly to freeze the draw.
    """
    if temperature <= 0:
        raise DataError(f"temperature must be positive, got {temperature}")
    keep = probs.values > 0.0
    if noise is None:
        noise = gumbel_noise(rng, probs.values.shape)
    safe = ad.masked_fill(probs, ~keep, 1.0)
    scaled = ad.scale(ad.add_const(ad.log(ad.clip_min(safe, 1e-300)), noise),
                      1.0 / temperature)
    return ad.softmax_rows(scaled, keep)


def aggregate_samples(samples):
    """Average the samples into one row-stochastic matrix.

    Each row is the sample sum divided by its own total mass, so gradients
    reach every sample and every row sums to exactly one.
    """
    if not samples:
        raise DataError("aggregate_samples: empty sample list")
    total = samples[0]
    for s in samples[1:]:
        total = ad.add(total, s)
    return EffectiveAdjacency(adj=ad.div(total, ad.row_sums(total)), mode="training")


def sample_training_adjacency(graph, rng=None, noise=None):
    """Full training path: probabilities -> C Gumbel samples -> aggregate.

    ``noise``, when given, must supply one (N, N) array per sample.
    """
    probs = edge_probs(graph)
    draws = []
    for c in range(graph.n_samples):
        eps = None if noise is None else noise[c]
        draws.append(gumbel_sample(probs, graph.temperature, rng=rng, noise=eps))
    return aggregate_samples(draws)


def topc_inference(graph):
    """Keep each row's C largest logits (self excluded) and softmax them.

    Deterministic: ties at the cutoff resolve by descending logit, then
    ascending node index.
    """
    n, c = graph.n_nodes, graph.n_samples
    mask = graph.candidate_mask()
    limit = int(mask[0].sum()) if n else 0
    if c > limit:
        raise DataError(f"top-C needs C <= {limit} candidates per row, got C={c}")
    logits = graph.logits.values
    adj = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        cand = np.nonzero(mask[i])[0]
        order = cand[np.argsort(-logits[i, cand], kind="stable")]
        kept = order[:c]
        row = logits[i, kept]
        e = np.exp(row - row.max())
        adj[i, kept] = e / e.sum()
    return EffectiveAdjacency(adj=Tensor(adj), mode="inference")
