"""Single-file checkpoint container with bit-exact round trips.

Layout: an 8-byte magic, an 8-byte little-endian JSON header length, the
canonical JSON header (config echo, step, array manifest), then the raw
float64 little-endian C-order bytes of every array in manifest order.
No timestamps or compression, so identical states produce identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .autodiff import Tensor
from .config import RunConfig
from .exceptions import DataError
from .model import ModelState

MAGIC = b"A2GNNCK1"


def _array_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(state, path):
    arrays = []
    blobs = []
    for kind, table in (("param", state.params),
                        ("adam_m", state.adam_m),
                        ("adam_v", state.adam_v)):
        for name in sorted(table):
            value = table[name].values if kind == "param" else table[name]
            arrays.append({"kind": kind, "name": name, "shape": list(value.shape)})
            blobs.append(_array_bytes(value))
    if state.pre_adj is not None:
        arrays.append({"kind": "pre_adj", "name": "pre_adj",
                       "shape": list(state.pre_adj.shape)})
        blobs.append(_array_bytes(state.pre_adj))

    header = {
        "config": dataclasses.asdict(state.config),
        "n_nodes": state.n_nodes,
        "step": state.step,
        "arrays": arrays,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path} is not a checkpoint file (bad magic)")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        params, adam_m, adam_v = {}, {}, {}
        pre_adj = None
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            if entry["kind"] == "param":
                params[entry["name"]] = Tensor(arr, requires_grad=True,
                                               name=entry["name"])
            elif entry["kind"] == "adam_m":
                adam_m[entry["name"]] = arr
            elif entry["kind"] == "adam_v":
                adam_v[entry["name"]] = arr
            elif entry["kind"] == "pre_adj":
                pre_adj = arr

    config = RunConfig(**header["config"])
    return ModelState(config=config, n_nodes=header["n_nodes"], params=params,
                      adam_m=adam_m, adam_v=adam_v, step=header["step"],
                      pre_adj=pre_adj)
