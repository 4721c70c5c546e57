"""Training loop: RMSE loss, clipped dual-rate Adam, evaluation, history.

The loss runs on the normalized scale; all reported metrics run on
de-normalized values. One seed drives four named substreams (init, gumbel,
dropout, shuffle), so a full run is reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .config import rng_streams
from .data import load_predefined_graph, load_series, make_windows, split_and_normalize
from .exceptions import DataError, NumericsError
from .metrics import score_windows
from .model import build_model, forward, stacked_to_windows

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def rmse_loss(y_hat, y, mask=None):
    """sqrt(mean squared residual) over unmasked entries.

    ``y`` (and ``mask``, True = counted) are constants with y_hat's shape.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != y_hat.values.shape:
        raise DataError(f"target shape {y.shape} != prediction shape {y_hat.values.shape}")
    diff = ad.add_const(y_hat, -y)
    sq = ad.mul(diff, diff)
    if mask is None:
        count = y.size
    else:
        mask = np.asarray(mask, dtype=np.float64)
        count = int(mask.sum())
        if count == 0:
            raise DataError("rmse_loss: every entry is masked out")
        sq = ad.mul_const(sq, mask)
    return ad.sqrt(ad.scale(ad.sum_all(sq), 1.0 / count))


def clip_gradients(grads, clip_norm):
    """Global-norm clipping; returns (clipped grads, pre-clip norm)."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if clip_norm > 0 and total > clip_norm:
        factor = clip_norm / total
        grads = {name: g * factor for name, g in grads.items()}
    return grads, total


def adam_step(state, grads):
    """Clip to the configured global norm, then one Adam update.

    The graph-learner logits use ``lr_agl``; every other parameter uses
    ``lr_other``. Non-finite gradients abort the step.
    """
    bad = [name for name, g in grads.items() if not np.isfinite(g).all()]
    if bad:
        raise NumericsError(f"non-finite gradients for: {', '.join(sorted(bad))}")
    grads, _ = clip_gradients(grads, state.config.clip_norm)
    t = state.step + 1
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name, g in grads.items():
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        lr = state.config.lr_agl if name.startswith("agl.") else state.config.lr_other
        state.params[name].values -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    state.step = t
    return state


def train_step(state, x_batch, y_batch, rngs, mask=None):
    """One forward/backward/update on a normalized window batch."""
    b, _, n = x_batch.shape
    y_stacked = y_batch.transpose(0, 2, 1).reshape(b * n, -1)
    mask_stacked = None
    if mask is not None:
        mask_stacked = mask.transpose(0, 2, 1).reshape(b * n, -1)
    with Tape():
        result = forward(state, x_batch, mode="training", rngs=rngs)
        loss = rmse_loss(result.y_hat, y_stacked, mask_stacked)
        backward(loss)
    grads = {name: p.grad for name, p in state.params.items() if p.grad is not None}
    adam_step(state, grads)
    for p in state.params.values():
        p.zero_grad()
    return float(loss.values)


def predict_split(state, ds, split, batch_size=256):
    """De-normalized predictions and raw truth for one split, window-shaped."""
    x, _ = make_windows(ds, split, normalized=True)
    _, y_raw = make_windows(ds, split, normalized=False)
    outs = []
    for lo in range(0, x.shape[0], batch_size):
        chunk = x[lo:lo + batch_size]
        result = forward(state, chunk, mode="inference")
        outs.append(stacked_to_windows(result.y_hat.values, chunk.shape[0], state.n_nodes))
    y_hat_norm = np.concatenate(outs, axis=0)
    return ds.denormalize(y_hat_norm), y_raw


def evaluate(state, ds, split, batch_size=256):
    """Five-metric report (per horizon and aggregate) on de-normalized values."""
    y_hat, y_raw = predict_split(state, ds, split, batch_size)
    return score_windows(y_raw, y_hat)


def attention_profile(state, ds, split, batch_size=256):
    """Mean attention coefficients per node over one split's windows."""
    x, _ = make_windows(ds, split, normalized=True)
    total = None
    for lo in range(0, x.shape[0], batch_size):
        chunk = x[lo:lo + batch_size]
        result = forward(state, chunk, mode="inference")
        coeffs = result.coeffs.values.reshape(chunk.shape[0], state.n_nodes, -1)
        part = coeffs.sum(axis=0)
        total = part if total is None else total + part
        names = result.channel_names
    return total / x.shape[0], names


def prepare_dataset(config, ds=None):
    """Load/split a dataset according to the config unless one is supplied."""
    if ds is None:
        if not config.series_path:
            raise DataError("no dataset given and config.series_path is empty")
        ds = load_series(config.series_path, layout=config.layout,
                         expected_nodes=config.declared_nodes)
    ds.t_in, ds.t_out = config.t_in, config.t_out
    if ds.train_end is None:
        ds = split_and_normalize(ds, config.ratios())
    return ds


def snapshot(state):
    return {
        "params": {k: v.values.copy() for k, v in state.params.items()},
        "adam_m": {k: v.copy() for k, v in state.adam_m.items()},
        "adam_v": {k: v.copy() for k, v in state.adam_v.items()},
        "step": state.step,
    }


def restore(state, snap):
    for k, v in snap["params"].items():
        state.params[k].values = v.copy()
    state.adam_m = {k: v.copy() for k, v in snap["adam_m"].items()}
    state.adam_v = {k: v.copy() for k, v in snap["adam_v"].items()}
    state.step = snap["step"]


def train(config, ds=None, pre_graph=None, collect_logits=False, log=None):
    """Run the full training loop; returns (best-validation state, history).

    History carries per-epoch training loss and validation reports, the best
    epoch index, the final test report (evaluated with the best parameters),
    and optional per-epoch copies of the edge logits for graph-learning
    diagnostics. A non-finite loss aborts the loop and falls back to the
    best checkpoint seen so far.
    """
    ds = prepare_dataset(config, ds)
    if pre_graph is None:
        pre_graph = load_predefined_graph(config.adj_path or None, ds.n_nodes)
    streams = rng_streams(config.seed)
    state = build_model(config, ds.n_nodes, pre_graph=pre_graph,
                        rng_init=streams["init"])

    x_train, y_train = make_windows(ds, "train", normalized=True)
    mask = None
    if config.mask_zeros:
        _, y_raw = make_windows(ds, "train", normalized=False)
        mask = y_raw != 0.0

    history = {"train_loss": [], "valid": [], "logits": [], "best_epoch": -1,
               "diverged": False, "test": None}
    best = snapshot(state)
    best_rmse = np.inf
    n_windows = x_train.shape[0]

    for epoch in range(config.epochs):
        order = streams["shuffle"].permutation(n_windows)
        epoch_losses = []
        diverged = False
        for lo in range(0, n_windows, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            batch_mask = mask[idx] if mask is not None else None
            loss = train_step(state, x_train[idx], y_train[idx], streams, batch_mask)
            if not np.isfinite(loss):
                diverged = True
                break
            epoch_losses.append(loss)
        if diverged:
            history["diverged"] = True
            break
        history["train_loss"].append(float(np.mean(epoch_losses)))
        report = evaluate(state, ds, "valid")
        history["valid"].append(report)
        if collect_logits and config.use_agl:
            history["logits"].append(state.params["agl.logits"].values.copy())
        if report.aggregate.rmse < best_rmse:
            best_rmse = report.aggregate.rmse
            best = snapshot(state)
            history["best_epoch"] = epoch
        if log:
            log(epoch, history["train_loss"][-1], report)

    restore(state, best)
    history["test"] = evaluate(state, ds, "test")
    return state, history
