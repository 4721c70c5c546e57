"""How the graph learner samples edges, and what temperature does.

Run:  python3 demos/02_edge_sampling.py
"""

import numpy as np

from a2gnn.autodiff import Tensor
from a2gnn.graph_learner import (
    LearnedGraph,
    aggregate_samples,
    edge_probs,
    gumbel_noise,
    gumbel_sample,
    topc_inference,
)

rng = np.random.default_rng(3)
n = 6
graph = LearnedGraph(logits=Tensor(rng.standard_normal((n, n)), requires_grad=True),
                     n_samples=3, temperature=0.5)

probs = edge_probs(graph)
print("edge probabilities (row 0):", probs.values[0].round(3))

# training path: three relaxed samples averaged into one propagation matrix
draws = [gumbel_sample(probs, graph.temperature, rng=rng) for _ in range(3)]
effective = aggregate_samples(draws)
print("training adjacency row sums:", effective.adj.values.sum(axis=1).round(12))

# temperature sweep with frozen noise: lower tau pushes samples toward one-hot
eps = gumbel_noise(np.random.default_rng(7), (n, n))
for tau in (1.0, 0.5, 0.1, 0.01):
    peak = gumbel_sample(probs, tau, noise=eps).values.max(axis=1).mean()
    print(f"tau={tau:5.2f}  mean peak mass {peak:.4f}")

# inference path: deterministic softmax over each row's top-C logits
inferred = topc_inference(graph)
print("inference nonzeros per row:", (inferred.adj.values > 0).sum(axis=1))
