"""Binary checkpoint container.

Layout: 8-byte magic, u32 format version, u32 header length, a JSON header
(schema, net config, standardization stats, tensor index, training metadata),
then the tensors as float32 row-major blobs in index order.  Live parameters
and the EMA shadow are stored side by side; inference reads the shadow.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .backbone import NetConfig
from .data import FeatureSchema, Standardization

MAGIC = b"MOARMCK\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelBundle:
    """Everything needed to run a trained model."""

    schema: FeatureSchema
    net: NetConfig
    params: dict[str, np.ndarray]
    ema: dict[str, np.ndarray]
    standardization: Standardization
    meta: dict = field(default_factory=dict)

    @property
    def infer_params(self) -> dict[str, np.ndarray]:
        return self.ema

    @property
    def schema_hash(self) -> str:
        return self.schema.hash()


def write_container(path: str, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors as float32 row-major blobs behind a JSON header."""
    index = []
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
        index.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {"version": VERSION, "meta": meta, "tensors": index}
    head = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(head)))
    buf.write(head)
    for blob in blobs:
        buf.write(blob)
    tmp = path + ".tmp"
    os.makedirs(os.path.dirname(os.path.abspath(path)) or ".", exist_ok=True)
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_container(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a tensor container")
    version, head_len = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    header = json.loads(raw[16 : 16 + head_len].decode())
    offset = 16 + head_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += count * 4
        tensors[entry["name"]] = arr.astype(np.float64)
    return header["meta"], tensors


def save_checkpoint(bundle: ModelBundle, path: str) -> None:
    meta = {
        "kind": "model",
        "schema": bundle.schema.to_dict(),
        "schema_hash": bundle.schema_hash,
        "net": bundle.net.to_dict(),
        "standardization": bundle.standardization.to_dict(),
        "train": bundle.meta,
    }
    tensors = {f"params/{k}": v for k, v in bundle.params.items()}
    tensors.update({f"ema/{k}": v for k, v in bundle.ema.items()})
    write_container(path, meta, tensors)


def load_checkpoint(path: str) -> ModelBundle:
    meta, tensors = read_container(path)
    if meta.get("kind") != "model":
        raise CheckpointError(f"{path}: container does not hold a model checkpoint")
    schema = FeatureSchema.from_dict(meta["schema"])
    if schema.hash() != meta["schema_hash"]:
        raise CheckpointError(f"{path}: schema hash mismatch")
    params = {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("params/")}
    ema = {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("ema/")}
    return ModelBundle(
        schema=schema,
        net=NetConfig.from_dict(meta["net"]),
        params=params,
        ema=ema,
        standardization=Standardization.from_dict(meta["standardization"]),
        meta=meta.get("train", {}),
    )
