"""Run configuration: flat key=value files, overrides, seeded RNG streams.

Defaults follow the published training recipe: Adam with gradient clip 5,
learning rate 0.01 for the graph-learner logits and 0.001 elsewhere,
dropout 0.3 in the propagation channels, sampling temperature 0.5, and
query/key width 128.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

# substream order is part of the determinism contract
STREAM_NAMES = ("init", "gumbel", "dropout", "shuffle")


@dataclass
class RunConfig:
    # data
    series_path: str = ""
    adj_path: str = ""
    layout: str = "time_by_node"
    declared_nodes: int = 0
    t_in: int = 12
    t_out: int = 12
    ratio_train: float = 0.6
    ratio_valid: float = 0.2
    ratio_test: float = 0.2
    # architecture
    lstm_out: int = 16
    gnn_layers: int = 2
    gnn_out: int = 32
    value_dim: int = 128
    embed_dim: int = 64
    attn_dim: int = 128
    n_edge_samples: int = 15  # C: Gumbel draws per row / kept neighbors
    temperature: float = 0.5
    # optimization
    lr_agl: float = 0.01
    lr_other: float = 0.001
    clip_norm: float = 5.0
    dropout: float = 0.3
    epochs: int = 50
    batch_size: int = 32
    mask_zeros: bool = False
    # ablation switches
    use_agl: bool = True
    use_ap: bool = True
    use_arl: bool = True
    # run control
    seed: int = 0
    checkpoint: str = ""
    eval_split: str = "test"

    def ratios(self):
        return (self.ratio_train, self.ratio_valid, self.ratio_test)

    def variant_label(self):
        if not self.use_agl and not self.use_arl:
            return "w/o A2"
        if not self.use_agl:
            return "w/o AGL"
        if not self.use_arl:
            return "w/o ARL"
        if not self.use_ap:
            return "w/o Ap"
        return "A2GNN"


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key, raw):
    kind = _FIELDS[key]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None
    return raw


def parse_kv_lines(lines, what="config"):
    """key=value pairs from an iterable of lines; '#' starts a comment."""
    pairs = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{what}: line {lineno} is not key=value: {stripped!r}")
        key, _, value = stripped.partition("=")
        pairs[key.strip()] = value
    return pairs


def build_config(path=None, overrides=None):
    """RunConfig from an optional file plus ``key=value`` override strings."""
    pairs = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            pairs.update(parse_kv_lines(fh))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override is not key=value: {item!r}")
        key, _, value = item.partition("=")
        pairs[key.strip()] = value
    return apply_pairs(RunConfig(), pairs)


def apply_pairs(config, pairs):
    for key, value in pairs.items():
        if key not in _FIELDS:
            raise ConfigError(
                f"unknown config key {key!r}; valid keys: {', '.join(sorted(_FIELDS))}"
            )
        setattr(config, key, _coerce(key, value))
    validate(config)
    return config


def validate(config):
    if config.temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {config.temperature}")
    if config.n_edge_samples < 1:
        raise ConfigError("n_edge_samples must be >= 1")
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {config.dropout}")
    if config.t_in < 1 or config.t_out < 1:
        raise ConfigError("t_in and t_out must be >= 1")
    if config.gnn_layers < 1:
        raise ConfigError("gnn_layers must be >= 1")
    if config.eval_split not in ("train", "valid", "test"):
        raise ConfigError(f"eval_split must be train/valid/test, got {config.eval_split!r}")
    return config


def config_lines(config):
    """Canonical key=value serialization (sorted, one per line)."""
    items = dataclasses.asdict(config)
    return [f"{k}={items[k]}" for k in sorted(items)]


def config_hash(config):
    blob = "\n".join(config_lines(config)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def rng_streams(seed):
    """Named independent RNG substreams derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child)
            for name, child in zip(STREAM_NAMES, children)}
