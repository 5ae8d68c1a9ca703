"""Weight archive format.

Layout (all integers little-endian, unsigned):

    magic   4 bytes  b"SWNT"
    u32     format version (currently 1)
    u32     fingerprint length, then that many UTF-8 bytes
    u32     metadata entry count
            per entry: u32 key length, key bytes, u32 value length, value bytes
    u32     parameter count
            per parameter: u32 name length, name bytes,
                           u8 rank, u32 per-axis sizes,
                           payload as little-endian float32

The fingerprint ties the weights to one architecture; a file for a
different topology is rejected before any weight is accepted. Values are
stored exactly, so save/load round-trips are bit-identical for float32
networks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointVersionError,
    CorruptCheckpointError,
    FingerprintMismatchError,
)
from .model import SewerNet, sewernet_spec

__all__ = [
    "FORMAT_VERSION",
    "MAGIC",
    "ModelCheckpoint",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = b"SWNT"
FORMAT_VERSION = 1


@dataclass
class ModelCheckpoint:
    """In-memory form of a weight archive."""

    fingerprint: str
    params: dict[str, np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @classmethod
    def from_network(cls, network: SewerNet, metadata: dict[str, str] | None = None):
        params = {
            name: np.ascontiguousarray(value, dtype=np.float32)
            for name, value in network.params().items()
        }
        return cls(
            fingerprint=network.spec.fingerprint(),
            params=params,
            metadata=dict(metadata or {}),
        )

    def to_network(self) -> SewerNet:
        """Rebuild the production topology and load these weights into it."""
        spec = sewernet_spec()
        if self.fingerprint != spec.fingerprint():
            raise FingerprintMismatchError(
                f"checkpoint fingerprint {self.fingerprint[:12]}… does not match "
                f"this architecture ({spec.fingerprint()[:12]}…)"
            )
        network = SewerNet.build(spec, seed=0)
        network.load_params(self.params)
        return network

    # -- serialization --------------------------------------------------

    def to_bytes(self) -> bytes:
        chunks = [MAGIC, struct.pack("<I", self.version)]
        fp = self.fingerprint.encode("utf-8")
        chunks.append(struct.pack("<I", len(fp)))
        chunks.append(fp)
        chunks.append(struct.pack("<I", len(self.metadata)))
        for key, value in self.metadata.items():
            kb, vb = key.encode("utf-8"), str(value).encode("utf-8")
            chunks.append(struct.pack("<I", len(kb)))
            chunks.append(kb)
            chunks.append(struct.pack("<I", len(vb)))
            chunks.append(vb)
        chunks.append(struct.pack("<I", len(self.params)))
        for name, value in self.params.items():
            nb = name.encode("utf-8")
            arr = np.ascontiguousarray(value, dtype="<f4")
            chunks.append(struct.pack("<I", len(nb)))
            chunks.append(nb)
            chunks.append(struct.pack("<B", arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            chunks.append(arr.tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelCheckpoint":
        reader = _Reader(blob)
        if reader.take(4) != MAGIC:
            raise CorruptCheckpointError("bad magic; not a weight archive")
        version = reader.u32()
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"archive format version {version}, this build reads {FORMAT_VERSION}"
            )
        fingerprint = reader.take(reader.u32()).decode("utf-8")
        metadata = {}
        for _ in range(reader.u32()):
            key = reader.take(reader.u32()).decode("utf-8")
            metadata[key] = reader.take(reader.u32()).decode("utf-8")
        params: dict[str, np.ndarray] = {}
        for _ in range(reader.u32()):
            name = reader.take(reader.u32()).decode("utf-8")
            rank = reader.u8()
            shape = tuple(reader.u32() for _ in range(rank))
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            payload = reader.take(count * 4)
            params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if not reader.exhausted():
            raise CorruptCheckpointError("trailing bytes after the last parameter")
        return cls(fingerprint=fingerprint, params=params, metadata=metadata, version=version)


class _Reader:
    __slots__ = ("blob", "pos")

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.blob):
            raise CorruptCheckpointError("archive truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def exhausted(self) -> bool:
        return self.pos == len(self.blob)


def save_checkpoint(
    network_or_ckpt, path, metadata: dict[str, str] | None = None
) -> ModelCheckpoint:
    """Write a network (or prebuilt checkpoint) to disk; returns the checkpoint."""
    if isinstance(network_or_ckpt, ModelCheckpoint):
        ckpt = network_or_ckpt
        if metadata:
            ckpt.metadata.update(metadata)
    else:
        ckpt = ModelCheckpoint.from_network(network_or_ckpt, metadata)
    Path(path).write_bytes(ckpt.to_bytes())
    return ckpt


def load_checkpoint(path) -> tuple[SewerNet, dict[str, str]]:
    """Read, verify, and instantiate; errors distinguish corrupt files,
    foreign architectures, and unknown format revisions."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptCheckpointError(f"cannot read {path}: {exc}") from exc
    ckpt = ModelCheckpoint.from_bytes(blob)
    network = ckpt.to_network()
    return network, ckpt.metadata
