"""Relation channels: own-information MLP and adjacency propagation.

Propagation stacks L layers of (adjacency aggregate, then linear map) with
a ReLU between layers and a linear last layer; a purely linear stack would
collapse to one matrix, so the single interior nonlinearity is the minimal
depth-preserving form. Dropout (training only) follows each hidden
activation and never touches adjacency entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import NumericsError


@dataclass
class MlpParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class RelationBundle:
    """Per-node representations for the channels present in this model."""

    own: Tensor
    implicit: Tensor | None = None
    predefined: Tensor | None = None

    def channels(self):
        """(name, tensor) pairs for present channels, in fixed order."""
        out = [("own", self.own)]
        if self.implicit is not None:
            out.append(("implicit", self.implicit))
        if self.predefined is not None:
            out.append(("predefined", self.predefined))
        return out


def _fan_in_uniform(rng, shape):
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape)


def init_mlp(rng, d_in, d_out, prefix="mlp"):
    return MlpParams(
        w1=Tensor(_fan_in_uniform(rng, (d_in, d_out)), requires_grad=True, name=f"{prefix}.w1"),
        b1=Tensor(np.zeros(d_out), requires_grad=True, name=f"{prefix}.b1"),
        w2=Tensor(_fan_in_uniform(rng, (d_out, d_out)), requires_grad=True, name=f"{prefix}.w2"),
        b2=Tensor(np.zeros(d_out), requires_grad=True, name=f"{prefix}.b2"),
    )


def init_propagation_weights(rng, d_in, d_out, n_layers, prefix):
    """Layer widths run d_in -> d_out -> d_out -> ..."""
    weights = []
    width = d_in
    for layer in range(n_layers):
        w = Tensor(_fan_in_uniform(rng, (width, d_out)), requires_grad=True,
                   name=f"{prefix}.w{layer + 1}")
        weights.append(w)
        width = d_out
    return weights


def own_mlp(params, feats):
    """Two-layer perceptron with an interior ReLU."""
    hidden = ad.relu(ad.add(ad.matmul(feats, params.w1), params.b1))
    return ad.add(ad.matmul(hidden, params.w2), params.b2)


def propagate(feats, adj, weights, n_windows=1, dropout_rate=0.0, rng=None,
              training=False):
    """Aggregate-then-transform stack over a shared adjacency.

    ``feats`` holds ``n_windows`` stacked row blocks of N nodes each; ``adj``
    is the (N, N) row-stochastic propagation matrix applied to every block.
    """
    if not np.isfinite(adj.values).all():
        raise NumericsError("propagate: adjacency contains non-finite entries")
    h = feats
    last = len(weights) - 1
    for i, w in enumerate(weights):
        h = ad.matmul(ad.block_matmul(adj, h, n_windows), w)
        if i < last:
            h = ad.relu(h)
            if training and dropout_rate > 0.0:
                h = ad.dropout(h, dropout_rate, rng, training=True)
    return h


def build_bundle(feats, mlp_params, implicit_adj=None, implicit_weights=None,
                 predefined_adj=None, predefined_weights=None, n_windows=1,
                 dropout_rate=0.0, rng=None, training=False):
    """Assemble the per-node relation channels.

    The own channel is always computed; the implicit and predefined channels
    appear exactly when their adjacency is given (ablations and missing
    domain graphs simply leave one out).
    """
    own = own_mlp(mlp_params, feats)
    implicit = None
    if implicit_adj is not None:
        implicit = propagate(feats, implicit_adj, implicit_weights, n_windows,
                             dropout_rate, rng, training)
    predefined = None
    if predefined_adj is not None:
        predefined = propagate(feats, predefined_adj, predefined_weights, n_windows,
                               dropout_rate, rng, training)
    return RelationBundle(own=own, implicit=implicit, predefined=predefined)
