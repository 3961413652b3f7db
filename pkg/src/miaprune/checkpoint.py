"""Binary checkpoints.

Layout (all integers little-endian)::

    b"MIAP" | u32 version | u32 len | descriptor (UTF-8 JSON) | u64 seed
    per dense layer, in network order:
        W: u32 rank, rank x u32 extents, f64 row-major data
        b: same encoding
        mask: ceil(W.size / 8) bytes, bits packed MSB first
    u8 has_admm
    if has_admm: u32 k, u32 layers, then per layer f64 lam, u64 n, Z, U
                 (tensor encoding), then u32 count and f64 residuals

The descriptor records the checkpoint kind, each network's layer list and
free-form metadata.  Any shape that disagrees with the descriptor raises
:class:`ConsistencyError`; running out of bytes raises :class:`LengthError`
naming the dense layer being read.
"""
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .admm import ADMMState
from .attack import AttackModel
from .errors import ConsistencyError, FormatError, LengthError
from .nn import Network, network_from_description

MAGIC = b"MIAP"
VERSION = 1


@dataclass
class Checkpoint:
    kind: str  # "classifier" or "attack"
    networks: List[Network]
    seed: int = 0
    admm: Optional[ADMMState] = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def of_classifier(cls, net: Network, seed: int = 0, admm: Optional[ADMMState] = None, **meta):
        return cls("classifier", [net], seed, admm, meta)

    @classmethod
    def of_attacker(cls, fa: AttackModel, seed: int = 0, **meta):
        meta = dict(meta, k=fa.k)
        return cls("attack", fa.networks(), seed, None, meta)

    @property
    def net(self) -> Network:
        return self.networks[0]

    def attacker(self) -> AttackModel:
        if self.kind != "attack":
            raise ConsistencyError(f"checkpoint holds a {self.kind}, not an attacker")
        return AttackModel(*self.networks, k=int(self.meta["k"]))


def _tensor(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    head = struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes()


def _mask_bytes(mask: np.ndarray) -> bytes:
    return np.packbits(mask.ravel() != 0.0).tobytes()


def encode(ck: Checkpoint) -> bytes:
    desc = {"kind": ck.kind, "networks": [net.describe() for net in ck.networks], "meta": ck.meta}
    dj = json.dumps(desc, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(dj)), dj, struct.pack("<Q", int(ck.seed))]
    for net in ck.networks:
        for layer in net.dense_layers():
            parts += [_tensor(layer.W), _tensor(layer.b), _mask_bytes(layer.mask)]
    if ck.admm is None:
        parts.append(b"\x00")
    else:
        st = ck.admm
        parts += [b"\x01", struct.pack("<II", st.k, len(st.Z))]
        for lam, n, Z, U in zip(st.lam, st.n, st.Z, st.U):
            parts += [struct.pack("<dQ", lam, n), _tensor(Z), _tensor(U)]
        parts.append(struct.pack("<I", len(st.residuals)))
        parts.append(np.asarray(st.residuals, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path, ck: Checkpoint):
    """Write atomically: a temporary sibling file is renamed into place."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(ck))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0
        self.where = "header"

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise LengthError(f"checkpoint truncated while reading {self.where} "
                              f"(needed {n} bytes at offset {self.pos}, file has {len(self.raw)})")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tensor(self, expected_shape) -> np.ndarray:
        (rank,) = self.unpack("<I")
        shape = self.unpack(f"<{rank}I") if rank else ()
        if tuple(shape) != tuple(expected_shape):
            raise ConsistencyError(f"{self.where}: stored shape {tuple(shape)} does not match "
                                   f"descriptor shape {tuple(expected_shape)}")
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def decode(raw: bytes) -> Checkpoint:
    r = _Reader(raw)
    magic = r.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    version, dlen = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        desc = json.loads(r.take(dlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable architecture descriptor: {e}") from None
    (seed,) = r.unpack("<Q")
    networks = [network_from_description(d) for d in desc["networks"]]
    index = 0
    for net in networks:
        for layer in net.dense_layers():
            r.where = f"dense layer {index}"
            layer.W = r.tensor(layer.W.shape)
            layer.b = r.tensor(layer.b.shape)
            bits = np.unpackbits(np.frombuffer(r.take((layer.W.size + 7) // 8), dtype=np.uint8))
            layer.mask = bits[:layer.W.size].astype(np.float64).reshape(layer.W.shape)
            layer.dW = np.zeros_like(layer.W)
            layer.db = np.zeros_like(layer.b)
            index += 1
    r.where = "ADMM state"
    (has_admm,) = r.unpack("<B")
    admm = None
    if has_admm:
        k, count = r.unpack("<II")
        weights = networks[0].dense_layers()
        if count != len(weights):
            raise ConsistencyError(f"ADMM state covers {count} layers, network has {len(weights)}")
        lam, ns, Z, U = [], [], [], []
        for i, layer in enumerate(weights):
            r.where = f"ADMM state of layer {i}"
            li, ni = r.unpack("<dQ")
            lam.append(li)
            ns.append(ni)
            Z.append(r.tensor(layer.W.shape))
            U.append(r.tensor(layer.W.shape))
        r.where = "ADMM residuals"
        (nres,) = r.unpack("<I")
        res = np.frombuffer(r.take(8 * nres), dtype="<f8").tolist()
        admm = ADMMState(Z, U, lam, ns, k, res)
    if r.pos != len(raw):
        raise ConsistencyError(f"{len(raw) - r.pos} trailing bytes after checkpoint body")
    return Checkpoint(desc["kind"], networks, seed, admm, desc.get("meta", {}))


def load_checkpoint(path) -> Checkpoint:
    return decode(Path(path).read_bytes())
