"""LSTM temporal encoder shared across all nodes.

The encoder output for a node is the concatenation of the hidden state at
every input step, so its width is t_in * hidden. All nodes (and windows)
ride through the cell together as stacked rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ShapeError

# gate block order within the stacked weight matrices, fixed everywhere:
# input, forget, cell candidate, output
GATE_ORDER = ("input", "forget", "cell", "output")


@dataclass
class LstmParams:
    w_ih: Tensor  # (4h, d_in)
    w_hh: Tensor  # (4h, h)
    b: Tensor  # (4h,)

    @property
    def hidden(self):
        return self.w_hh.values.shape[1]

    @property
    def d_in(self):
        return self.w_ih.values.shape[1]


def init_lstm(rng, d_in, hidden):
    """Uniform(-1/sqrt(h), 1/sqrt(h)) weights, forget-gate bias +1, rest 0."""
    bound = 1.0 / np.sqrt(hidden)
    w_ih = rng.uniform(-bound, bound, size=(4 * hidden, d_in))
    w_hh = rng.uniform(-bound, bound, size=(4 * hidden, hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return LstmParams(
        w_ih=Tensor(w_ih, requires_grad=True, name="lstm.w_ih"),
        w_hh=Tensor(w_hh, requires_grad=True, name="lstm.w_hh"),
        b=Tensor(b, requires_grad=True, name="lstm.b"),
    )


def lstm_step(params, x_t, h, c, w_ih_t=None, w_hh_t=None):
    """One cell update; sigmoid gates, tanh candidate and output squashing.

    The transposed weight tensors can be passed in so a sequence loop pays
    for the transpose once.
    """
    hid = params.hidden
    if x_t.values.shape[1] != params.d_in:
        raise ShapeError(
            f"lstm_step: input width {x_t.values.shape[1]} != d_in {params.d_in}"
        )
    if w_ih_t is None:
        w_ih_t = ad.transpose(params.w_ih)
    if w_hh_t is None:
        w_hh_t = ad.transpose(params.w_hh)
    gates = ad.add(ad.add(ad.matmul(x_t, w_ih_t), ad.matmul(h, w_hh_t)), params.b)
    i = ad.sigmoid(ad.slice_cols(gates, 0, hid))
    f = ad.sigmoid(ad.slice_cols(gates, hid, 2 * hid))
    g = ad.tanh(ad.slice_cols(gates, 2 * hid, 3 * hid))
    o = ad.sigmoid(ad.slice_cols(gates, 3 * hid, 4 * hid))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def encode_sequence(params, steps):
    """Run the cell over ``steps`` from zero state and concatenate hiddens.

    ``steps`` is either a (rows, t_in, d_in) array or a list of per-step
    Tensors of shape (rows, d_in). Output shape is (rows, t_in * hidden).
    """
    if isinstance(steps, np.ndarray):
        if steps.ndim != 3:
            raise ShapeError(f"expected (rows, t_in, d_in), got {steps.shape}")
        steps = [Tensor(steps[:, t, :]) for t in range(steps.shape[1])]
    if len(steps) == 0:
        raise ShapeError("encode_sequence: need at least one input step")
    rows = steps[0].values.shape[0]
    hid = params.hidden
    h = Tensor(np.zeros((rows, hid)))
    c = Tensor(np.zeros((rows, hid)))
    w_ih_t = ad.transpose(params.w_ih)
    w_hh_t = ad.transpose(params.w_hh)
    hiddens = []
    for x_t in steps:
        h, c = lstm_step(params, x_t, h, c, w_ih_t=w_ih_t, w_hh_t=w_hh_t)
        hiddens.append(h)
    return ad.concat_cols(hiddens)
