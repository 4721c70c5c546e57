"""Recover a known synthetic graph from data alone.

Generates a 12-node nonlinear autoregression with 2 parents per node, trains
the forecaster, and reports how many learned neighbors are true parents.

Run:  python3 demos/03_graph_recovery.py   (about half a minute)
"""

import numpy as np

from a2gnn.config import RunConfig
from a2gnn.data import SyntheticSpec, gen_synthetic, split_and_normalize
from a2gnn.graph_learner import topc_inference
from a2gnn.training import train

spec = SyntheticSpec(n=12, t=2000, k_true=2, noise_std=0.1, seed=4)
ds, truth = gen_synthetic(spec)

config = RunConfig(t_in=8, t_out=1, lstm_out=8, gnn_layers=1, gnn_out=16,
                   value_dim=16, embed_dim=16, n_edge_samples=2, temperature=0.5,
                   epochs=25, batch_size=32, dropout=0.3, seed=0)
ds.t_in, ds.t_out = config.t_in, config.t_out
ds = split_and_normalize(ds, config.ratios())

state, history = train(
    config, ds=ds, collect_logits=True,
    log=lambda e, loss, rep: e % 5 == 0 and print(
        f"epoch {e:2d}  train loss {loss:.4f}  valid rmse {rep.aggregate.rmse:.4f}"),
)

adj = topc_inference(state.graph()).adj.values
hits = sum(int((adj[i] > 0)[truth[i]].sum()) for i in range(spec.n))
total = spec.n * spec.k_true
print(f"\nprecision@{spec.k_true}: {hits}/{total} = {hits / total:.2f} "
      f"(random baseline {spec.k_true / (spec.n - 1):.2f})")

off = ~np.eye(spec.n, dtype=bool)
seps = [l[truth].mean() - l[off & ~truth].mean() for l in history["logits"]]
print("true-vs-false logit separation by epoch:",
      " ".join(f"{s:+.2f}" for s in seps[::5]))
