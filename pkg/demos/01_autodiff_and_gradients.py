"""Tour of the tensor library: tapes, backward passes, gradient checking.

Run:  python3 demos/01_autodiff_and_gradients.py
"""

import numpy as np

from a2gnn import autodiff as ad
from a2gnn.autodiff import Tape, Tensor, backward, grad_check

rng = np.random.default_rng(0)

# --- a small computation with a recorded tape --------------------------------
w = Tensor(rng.standard_normal((3, 2)), requires_grad=True, name="w")
x = Tensor(rng.standard_normal((4, 3)))

with Tape():
    hidden = ad.tanh(ad.matmul(x, w))
    loss = ad.mean_all(ad.mul(hidden, hidden))
    backward(loss)

print("loss:", float(loss.values))
print("dloss/dw:\n", w.grad.round(4))

# --- the same gradient, checked against central finite differences -----------
err = grad_check(
    lambda t: ad.mean_all(ad.mul(ad.tanh(ad.matmul(x, t)), ad.tanh(ad.matmul(x, t)))),
    Tensor(w.values.copy()),
    h=1e-6,
)
print(f"finite-difference max rel-err: {err:.2e}")

# --- masked row softmax: the workhorse of edge sampling -----------------------
logits = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
mask = ~np.eye(4, dtype=bool)  # nodes never pick themselves
probs = ad.softmax_rows(logits, mask)
print("row sums:", probs.values.sum(axis=1))
print("diagonal stays exactly zero:", probs.values.diagonal())
