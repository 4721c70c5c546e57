"""Series loading, chronological splitting, windowing, and synthetic data.

Series files are UTF-8 CSV, one timestep per line, one node per column.
Lines starting with '#' are skipped so self-produced artifacts (which carry
a provenance comment) read back cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DataError

SPLITS = ("train", "valid", "test")


@dataclass
class SeriesDataset:
    """Node-major multivariate series with windowing and split metadata.

    Normalization statistics are fitted on training rows only; ``norm_std``
    is forced to 1 for zero-variance nodes so degenerate columns cannot
    poison training.
    """

    raw: np.ndarray  # (T, N)
    t_in: int = 0
    t_out: int = 0
    norm_mean: np.ndarray | None = None  # (N,)
    norm_std: np.ndarray | None = None  # (N,)
    train_end: int | None = None
    valid_end: int | None = None

    @property
    def n_nodes(self):
        return self.raw.shape[1]

    @property
    def n_steps(self):
        return self.raw.shape[0]

    def split_bounds(self, split):
        if split == "train":
            return 0, self.train_end
        if split == "valid":
            return self.train_end, self.valid_end
        if split == "test":
            return self.valid_end, self.n_steps
        raise DataError(f"unknown split {split!r}, expected one of {SPLITS}")

    def normalized(self):
        return (self.raw - self.norm_mean) / self.norm_std

    def denormalize(self, values):
        """Map normalized per-node values (..., N) back to the raw scale."""
        return values * self.norm_std + self.norm_mean


def _parse_csv_matrix(path, what):
    rows = []
    width = None
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{what}: cannot open {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataError(
                    f"{what}: ragged row at line {lineno} "
                    f"({len(cells)} cells, expected {width})"
                )
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{what}: non-numeric cell at line {lineno}, column {col}: {cell!r}"
                    ) from None
                if not np.isfinite(v):
                    raise DataError(
                        f"{what}: non-finite cell at line {lineno}, column {col}"
                    )
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{what}: file {path} is empty")
    return np.asarray(rows, dtype=np.float64)


def load_series(path, layout="time_by_node", t_in=0, t_out=0, expected_nodes=0):
    """Read a series CSV into a SeriesDataset.

    ``layout`` is ``time_by_node`` (rows are timesteps) or ``node_by_time``
    (transposed on load). ``expected_nodes`` > 0 enforces the node count
    declared in configuration.
    """
    if layout not in ("time_by_node", "node_by_time"):
        raise DataError(f"unknown series layout {layout!r}")
    mat = _parse_csv_matrix(path, "series")
    if layout == "node_by_time":
        mat = mat.T.copy()
    if expected_nodes and mat.shape[1] != expected_nodes:
        raise DataError(
            f"series has {mat.shape[1]} nodes but config declares {expected_nodes}"
        )
    return SeriesDataset(raw=mat, t_in=t_in, t_out=t_out)


def split_and_normalize(ds, ratio=(0.6, 0.2, 0.2)):
    """Chronological split plus per-node z-scoring from train rows only."""
    r = np.asarray(ratio, dtype=np.float64)
    if len(r) != 3 or (r <= 0).any():
        raise DataError(f"split ratios must be three positive numbers, got {ratio}")
    if abs(r.sum() - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got sum {r.sum()!r}")
    t = ds.n_steps
    train_end = int(t * r[0])
    valid_end = int(t * (r[0] + r[1]))
    if not 0 < train_end < valid_end < t:
        raise DataError(f"degenerate split boundaries ({train_end}, {valid_end}) for T={t}")

    need = ds.t_in + ds.t_out
    if need > 0:
        for name, length in (
            ("train", train_end),
            ("valid", valid_end - train_end),
            ("test", t - valid_end),
        ):
            if length < need:
                raise DataError(
                    f"{name} split has {length} rows; needs at least t_in+t_out={need}"
                )

    mean = ds.raw[:train_end].mean(axis=0)
    std = ds.raw[:train_end].std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return replace(ds, norm_mean=mean, norm_std=std, train_end=train_end, valid_end=valid_end)


def make_windows(ds, split, normalized=True):
    """Slice one split into (X, Y) window pairs.

    X has shape (B, t_in, N) and Y (B, t_out, N); window b pairs input rows
    [b, b+t_in) with target rows [b+t_in, b+t_in+t_out).
    """
    if ds.t_in < 1 or ds.t_out < 1:
        raise DataError(f"t_in/t_out must be >= 1, got ({ds.t_in}, {ds.t_out})")
    lo, hi = ds.split_bounds(split)
    length = hi - lo
    b = length - ds.t_in - ds.t_out + 1
    if b < 1:
        raise DataError(
            f"{split} split too short: {length} rows < t_in+t_out={ds.t_in + ds.t_out}"
        )
    mat = ds.normalized() if normalized else ds.raw
    mat = mat[lo:hi]
    x = np.stack([mat[i:i + ds.t_in] for i in range(b)])
    y = np.stack([mat[i + ds.t_in:i + ds.t_in + ds.t_out] for i in range(b)])
    return x, y


# ---------------------------------------------------------------------------
# predefined relation graphs


@dataclass
class PredefinedGraph:
    """Optional domain-knowledge adjacency; diagonal kept exactly as loaded."""

    weights: np.ndarray | None = None
    present: bool = False

    def row_normalized(self):
        """Rows scaled to sum to 1; all-zero rows are left zero."""
        sums = self.weights.sum(axis=1, keepdims=True)
        safe = np.where(sums == 0.0, 1.0, sums)
        return self.weights / safe


def load_predefined_graph(path, n_nodes=0):
    """Load an N x N float CSV, or an edge list of ``i,j,w`` lines.

    A square matrix of the declared size takes precedence; otherwise a file
    whose rows all have exactly three fields is read as an edge list
    (zero-based indices, repeated edges accumulate).
    """
    if path is None or path == "":
        return PredefinedGraph()
    mat = _parse_csv_matrix(path, "adjacency")
    rows, cols = mat.shape
    is_declared_square = n_nodes and rows == n_nodes and cols == n_nodes
    looks_like_edges = cols == 3 and not is_declared_square
    if looks_like_edges and np.array_equal(mat[:, :2], np.round(mat[:, :2])):
        n = n_nodes or int(mat[:, :2].max()) + 1
        adj = np.zeros((n, n), dtype=np.float64)
        for i, j, w in mat:
            si, sj = int(i), int(j)
            if not (0 <= si < n and 0 <= sj < n):
                raise DataError(f"edge ({si}, {sj}) out of range for {n} nodes")
            if w < 0:
                raise DataError(f"negative weight {w!r} on edge ({si}, {sj})")
            adj[si, sj] += w
        return PredefinedGraph(weights=adj, present=True)
    if rows != cols:
        raise DataError(f"adjacency must be square, got {rows} x {cols}")
    if n_nodes and rows != n_nodes:
        raise DataError(f"adjacency is {rows} x {rows} but config declares {n_nodes} nodes")
    if (mat < 0).any():
        i, j = np.argwhere(mat < 0)[0]
        raise DataError(f"negative weight at ({i}, {j})")
    return PredefinedGraph(weights=mat, present=True)


# ---------------------------------------------------------------------------
# synthetic generator with known ground truth


@dataclass
class SyntheticSpec:
    """Recipe for a nonlinear first-order vector autoregression.

    Each node's next value is tanh of a weighted sum over its fixed parent
    set, plus Gaussian noise. The parent sets form the ground-truth graph
    used by recovery experiments.
    """

    n: int
    t: int
    k_true: int
    noise_std: float = 0.1
    seed: int = 0
    dynamics: str = "var1-tanh"


def gen_synthetic(spec):
    """Generate (dataset, true_graph) where true_graph[i, j] marks j -> i influence.

    Row i of the boolean graph holds node i's k_true parents (no self-loops);
    weights are drawn once from Uniform(0.5, 1.0) / k_true. Deterministic
    given the spec seed.
    """
    if spec.dynamics != "var1-tanh":
        raise DataError(f"unknown dynamics tag {spec.dynamics!r}")
    if not 0 < spec.k_true < spec.n:
        raise DataError(f"k_true must satisfy 0 < k_true < n, got {spec.k_true} vs n={spec.n}")
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n, spec.k_true

    graph = np.zeros((n, n), dtype=bool)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        graph[i, rng.choice(others, size=k, replace=False)] = True
    weights = np.where(graph, rng.uniform(0.5, 1.0, size=(n, n)) / k, 0.0)

    series = np.empty((spec.t, n), dtype=np.float64)
    series[0] = rng.standard_normal(n)
    noise = rng.normal(0.0, spec.noise_std, size=(spec.t - 1, n)) if spec.noise_std > 0 else np.zeros((spec.t - 1, n))
    for t in range(1, spec.t):
        series[t] = np.tanh(weights @ series[t - 1]) + noise[t - 1]
    return SeriesDataset(raw=series), graph
