"""Binary checkpoint format.

Layout (all integers little-endian):

    magic "SQWM" | format version u32
    model config JSON: u32 length + utf-8 bytes
    parameter tensors: u32 count, then per tensor
        u32 name length | name bytes | u32 rank | dims as u64 | f64 data
    optimizer state: u64 adam step t, then u32 count + tensors in the
        same encoding (names prefixed "m." / "v.")
    counters: u64 step, u64 tokens consumed
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import DataError
from .model import ModelConfig, Parameters, parameter_shapes
from .optim import AdamState
from .tensor import Tensor

MAGIC = b"SQWM"
VERSION = 1


def _write_tensor(fh, name: str, data: np.ndarray):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", data.ndim))
    for dim in data.shape:
        fh.write(struct.pack("<Q", dim))
    fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", fh.read(4))
    name = fh.read(name_len).decode("utf-8")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape).copy()
    return name, data


def save_checkpoint(
    path,
    params: Parameters,
    state: AdamState,
    step: int,
    tokens_consumed: int,
):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        config_json = json.dumps(asdict(params.config), sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(config_json)))
        fh.write(config_json)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, tensor in params.tensors.items():
            _write_tensor(fh, name, tensor.data)
        fh.write(struct.pack("<Q", state.t))
        fh.write(struct.pack("<I", 2 * len(state.m)))
        for name in state.m:
            _write_tensor(fh, "m." + name, state.m[name])
        for name in state.v:
            _write_tensor(fh, "v." + name, state.v[name])
        fh.write(struct.pack("<QQ", step, tokens_consumed))


def load_checkpoint(path) -> tuple[Parameters, AdamState, int, int]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise DataError(f"{path} is not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (config_len,) = struct.unpack("<I", fh.read(4))
        config = ModelConfig(**json.loads(fh.read(config_len).decode("utf-8")))
        (n_params,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(n_params):
            name, data = _read_tensor(fh)
            tensors[name] = Tensor(data, requires_grad=True, name=name)
        expected = parameter_shapes(config)
        if set(tensors) != set(expected):
            raise DataError(f"{path}: parameter names do not match config")
        params = Parameters(config, tensors)
        (adam_t,) = struct.unpack("<Q", fh.read(8))
        (n_opt,) = struct.unpack("<I", fh.read(4))
        m, v = {}, {}
        for _ in range(n_opt):
            name, data = _read_tensor(fh)
            if name.startswith("m."):
                m[name[2:]] = data
            elif name.startswith("v."):
                v[name[2:]] = data
            else:
                raise DataError(f"{path}: unexpected optimizer entry {name!r}")
        state = AdamState(m=m, v=v, t=adam_t)
        step, tokens_consumed = struct.unpack("<QQ", fh.read(16))
    return params, state, step, tokens_consumed
