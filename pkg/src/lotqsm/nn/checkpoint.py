"""Checkpoint container: fingerprinted architecture plus raw little-endian tensors.

Layout: 8-byte magic, u32 version, u64 header length, UTF-8 JSON header,
then each tensor's bytes back to back in header order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from lotqsm.errors import LoadError
from lotqsm.nn.layers import LotUnet, UnetConfig

MAGIC = b"LOTQSMCK"
VERSION = 1
TARGETS = ("iqfm", "iqsm")


def architecture_fingerprint(model: LotUnet) -> str:
    shapes = [(name, list(t.shape)) for name, t in model.state_dict().items()]
    doc = {"config": model.cfg.to_dict(), "tensors": shapes}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


@dataclass
class NetParams:
    config: UnetConfig
    tensors: dict[str, np.ndarray]
    fingerprint: str
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: LotUnet, provenance: dict | None = None) -> NetParams:
        tensors = {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
        return cls(model.cfg, tensors, architecture_fingerprint(model), dict(provenance or {}))

    @property
    def target(self) -> str | None:
        return self.provenance.get("target")

    def build(self) -> LotUnet:
        model = LotUnet(self.config)
        if architecture_fingerprint(model) != self.fingerprint:
            raise LoadError("checkpoint fingerprint does not match the architecture built from its config")
        model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.tensors.items()})
        return model

    def load_into(self, model: LotUnet) -> None:
        if architecture_fingerprint(model) != self.fingerprint:
            raise LoadError(
                f"architecture fingerprint mismatch: checkpoint {self.fingerprint[:12]}, "
                f"model {architecture_fingerprint(model)[:12]}"
            )
        model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.tensors.items()})

    def save(self, path) -> None:
        entries, blobs = [], []
        for name, arr in self.tensors.items():
            le = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"))
            entries.append({"name": name, "dims": list(arr.shape), "dtype": arr.dtype.str.lstrip("<>|="),
                            "nbytes": le.nbytes})
            blobs.append(le.tobytes())
        header = json.dumps({
            "config": self.config.to_dict(),
            "fingerprint": self.fingerprint,
            "provenance": self.provenance,
            "tensors": entries,
        }, sort_keys=True).encode()
        path = Path(path)
        try:
            with open(path, "wb") as fh:
                fh.write(MAGIC + struct.pack("<IQ", VERSION, len(header)) + header)
                for b in blobs:
                    fh.write(b)
        except OSError as exc:
            raise OSError(f"failed writing checkpoint {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> NetParams:
        path = Path(path)
        raw = path.read_bytes()
        if raw[:8] != MAGIC:
            raise LoadError(f"{path}: not a checkpoint (bad magic)")
        version, hlen = struct.unpack("<IQ", raw[8:20])
        if version != VERSION:
            raise LoadError(f"{path}: unsupported checkpoint version {version}")
        try:
            header = json.loads(raw[20 : 20 + hlen])
            cfg = UnetConfig(**header["config"])
        except (ValueError, KeyError, TypeError) as exc:
            raise LoadError(f"{path}: malformed checkpoint header: {exc}") from exc
        pos = 20 + hlen
        tensors = {}
        for e in header["tensors"]:
            dt = np.dtype(e["dtype"]).newbyteorder("<")
            if pos + e["nbytes"] > len(raw):
                raise LoadError(f"{path}: tensor {e['name']} truncated")
            arr = np.frombuffer(raw, dtype=dt, count=e["nbytes"] // dt.itemsize, offset=pos)
            tensors[e["name"]] = arr.astype(dt.newbyteorder("=")).reshape(e["dims"])
            pos += e["nbytes"]
        return cls(cfg, tensors, header["fingerprint"], header["provenance"])
