"""Per-node attention over relation channels and weighted-concat fusion.

Every node owns a trainable embedding; its query is scored against each
channel's key by a scaled dot product, the softmax over channels gives the
coefficients, and the fused vector concatenates coefficient-scaled value
projections (one block per channel). Query/key and value projections are
shared across channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class ArlParams:
    embeddings: Tensor  # (N, d_m)
    w_query: Tensor  # (d_m, d)
    w_key: Tensor  # (d_h, d)
    w_value: Tensor  # (d_h, d_value)

    @property
    def attn_dim(self):
        return self.w_query.values.shape[1]

    @property
    def value_dim(self):
        return self.w_value.values.shape[1]


@dataclass
class FusedRepresentation:
    z: Tensor  # (rows, K * d_value)
    coeffs: Tensor  # (rows, K)
    channel_names: tuple


def init_arl(rng, n_nodes, d_m, d_h, attn_dim, value_dim):
    def fan_in(shape):
        return rng.uniform(-1.0 / np.sqrt(shape[0]), 1.0 / np.sqrt(shape[0]), size=shape)

    return ArlParams(
        embeddings=Tensor(rng.normal(0.0, 1.0 / np.sqrt(d_m), size=(n_nodes, d_m)),
                          requires_grad=True, name="arl.embeddings"),
        w_query=Tensor(fan_in((d_m, attn_dim)), requires_grad=True, name="arl.w_query"),
        w_key=Tensor(fan_in((d_h, attn_dim)), requires_grad=True, name="arl.w_key"),
        w_value=Tensor(fan_in((d_h, value_dim)), requires_grad=True, name="arl.w_value"),
    )


def attention_coeffs(params, channels, n_windows=1):
    """Softmax over per-channel scaled dot-product scores, per node.

    ``channels`` is a list of (rows, d_h) tensors with rows = n_windows * N.
    A single channel is degenerate: its weight is identically 1.
    """
    rows = channels[0].values.shape[0]
    if len(channels) < 2:
        return Tensor(np.ones((rows, 1)))
    query = ad.matmul(params.embeddings, params.w_query)
    if n_windows > 1:
        query = ad.tile_rows(query, n_windows)
    inv_scale = 1.0 / np.sqrt(params.attn_dim)
    scores = []
    for h in channels:
        key = ad.matmul(h, params.w_key)
        scores.append(ad.scale(ad.row_sums(ad.mul(query, key)), inv_scale))
    return ad.softmax_rows(ad.concat_cols(scores))


def fuse(params, channels, coeffs):
    """Concatenate coefficient-scaled value projections, one block per channel."""
    blocks = []
    for k, h in enumerate(channels):
        value = ad.matmul(h, params.w_value)
        blocks.append(ad.mul(ad.slice_cols(coeffs, k, k + 1), value))
    return ad.concat_cols(blocks)


def fuse_concat(params, channels):
    """Fusion with attention replaced by plain concatenation (ablation)."""
    return ad.concat_cols([ad.matmul(h, params.w_value) for h in channels])


def attend_and_fuse(params, bundle, n_windows=1, use_attention=True):
    """Full fusion step over a relation bundle."""
    names = tuple(name for name, _ in bundle.channels())
    channels = [t for _, t in bundle.channels()]
    if use_attention:
        coeffs = attention_coeffs(params, channels, n_windows)
        z = fuse(params, channels, coeffs)
    else:
        rows = channels[0].values.shape[0]
        coeffs = Tensor(np.full((rows, len(channels)), 1.0 / len(channels)))
        z = fuse_concat(params, channels)
    return FusedRepresentation(z=z, coeffs=coeffs, channel_names=names)
