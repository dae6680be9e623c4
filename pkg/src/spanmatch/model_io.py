"""Binary model persistence: magic, dims, raw little-endian float64 data."""
from __future__ import annotations

import json
import struct

import numpy as np

from .nn import Parameters
from .spans import PipelineConfig

MAGIC = b"ESDM1"


class ModelFormatError(ValueError):
    pass


def save_model(path, params: Parameters, cfg: PipelineConfig) -> None:
    names = params.names()
    header = {
        "dims": {"d_w": cfg.d_w, "d": cfg.d, "d_ff": cfg.d_ff,
                 "max_span_len": cfg.max_span_len},
        "params": [{"name": n, "shape": list(params.arrays[n].shape)} for n in names],
        "config": cfg.to_dict(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params.arrays[n], dtype="<f8").tobytes())


def load_model(path) -> tuple[Parameters, PipelineConfig]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ModelFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = PipelineConfig.from_dict(header["config"])
        dims = header["dims"]
        if (dims["d_w"], dims["d"], dims["d_ff"]) != (cfg.d_w, cfg.d, cfg.d_ff):
            raise ModelFormatError(f"{path}: header dims disagree with config echo")
        arrays = {}
        for rec in header["params"]:
            shape = tuple(rec["shape"])
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ModelFormatError(f"{path}: truncated data for {rec['name']!r}")
            arrays[rec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ModelFormatError(f"{path}: trailing bytes after parameter data")
    params = Parameters(arrays)
    expected = {"span_proj": (2 * cfg.d_w, cfg.d),
                "isa_w1": (cfg.d, cfg.d_ff), "isa_w2": (cfg.d_ff, cfg.d),
                "csa_w1": (cfg.d, cfg.d_ff), "csa_w2": (cfg.d_ff, cfg.d),
                "isa_gain": (cfg.d,), "isa_bias": (cfg.d,),
                "csa_gain": (cfg.d,), "csa_bias": (cfg.d,)}
    for name, shape in expected.items():
        if name not in params.arrays:
            raise ModelFormatError(f"{path}: missing parameter {name!r}")
        if params.arrays[name].shape != shape:
            raise ModelFormatError(
                f"{path}: {name!r} has shape {params.arrays[name].shape}, "
                f"expected {shape}")
    return params, cfg
