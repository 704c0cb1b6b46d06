"""
Versioned binary checkpoints.

Layout (little-endian)::

    b"SELN"                         magic
    uint32                          format version
    int64 x 5, float64              RoutingConfig (num_layers, num_levels,
                                    base_channels, num_classes,
                                    num_permutations, gate_activation_threshold)
    uint32                          number of tensors
    per tensor:
        uint32, utf-8 bytes         name
        uint32, int64 x rank        rank, extents
        float64 x prod(extents)     values, row-major

Network weights are stored under their parameter names; anything else
(teacher or peer weights, optimizer velocities, counters) is stored under a
name prefix such as ``teacher/`` or ``opt/``.
"""

import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

import routeseg
from routeseg.nets.config import RoutingConfig
from routeseg.nets.routing_net import RoutingNet

logger = routeseg.logger

MAGIC = b"SELN"
FORMAT_VERSION = 1
_CONFIG_STRUCT = struct.Struct("<5qd")
_INT_FIELDS = ("num_layers", "num_levels", "base_channels", "num_classes", "num_permutations")


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def encode_checkpoint(config: RoutingConfig, tensors: Dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    chunks.append(
        _CONFIG_STRUCT.pack(
            *(int(getattr(config, name)) for name in _INT_FIELDS),
            float(config.gate_activation_threshold),
        )
    )
    chunks.append(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        value = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}q", *value.shape))
        chunks.append(value.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.buffer):
            raise CheckpointError(
                f"truncated checkpoint: expected {n} bytes of {what} at byte offset {self.offset}"
            )
        chunk = self.buffer[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buffer: bytes) -> Tuple[RoutingConfig, Dict[str, np.ndarray]]:
    reader = _Reader(buffer)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at byte offset 0, expected {MAGIC!r}")
    (version,) = reader.unpack("<I", "format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} at byte offset 4")
    offset = reader.offset
    values = reader.unpack(_CONFIG_STRUCT.format, "configuration")
    try:
        config = RoutingConfig(**dict(zip(_INT_FIELDS, values[:5])), gate_activation_threshold=values[5])
    except ValueError as exc:
        raise CheckpointError(f"invalid configuration at byte offset {offset}: {exc}") from None

    (count,) = reader.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<I", "name length")
        offset = reader.offset
        try:
            name = reader.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"tensor name is not utf-8 at byte offset {offset}") from None
        (rank,) = reader.unpack("<I", "rank")
        extents = reader.unpack(f"<{rank}q", "extents")
        if any(e < 0 for e in extents):
            raise CheckpointError(f"negative extent in {name!r} at byte offset {reader.offset}")
        n_values = int(np.prod(extents, dtype=np.int64))
        data = reader.take(8 * n_values, f"values of {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(extents)
    if reader.offset != len(buffer):
        raise CheckpointError(f"{len(buffer) - reader.offset} trailing bytes at byte offset {reader.offset}")
    return config, tensors


def save_checkpoint(path, config: RoutingConfig, tensors: Dict[str, np.ndarray]) -> Path:
    """
    Write a checkpoint file.

    The file is written next to its destination and renamed into place, so
    an interrupted save never leaves a partial checkpoint.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_checkpoint(config, tensors)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp_", suffix=".seln")
    try:
        with os.fdopen(fd, "wb") as ff:
            ff.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    logger.debug(f"Saved checkpoint with {len(tensors)} tensors to {path}")
    return path


def load_checkpoint(path) -> Tuple[RoutingConfig, Dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def save_net(path, net: RoutingNet, extra: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """Save the weights of ``net`` plus optional prefixed extra tensors."""
    tensors = net.state_dict()
    for name, value in (extra or {}).items():
        if name in tensors:
            raise ValueError(f"extra tensor {name!r} clashes with a network parameter")
        tensors[name] = value
    return save_checkpoint(path, net.config, tensors)


def load_net(path) -> Tuple[RoutingNet, Dict[str, np.ndarray]]:
    """
    Rebuild a network from a checkpoint.

    Returns
    -------
    net : RoutingNet
    extra : dict
        Stored tensors that are not parameters of the network.
    """
    config, tensors = load_checkpoint(path)
    net = RoutingNet(config, seeder=0)
    names = {name for name, _ in net.named_parameters()}
    missing = names - set(tensors)
    if missing:
        raise CheckpointError(f"checkpoint {path} lacks network tensors {sorted(missing)[:5]}")
    net.load_state_dict({name: tensors[name] for name in names})
    extra = {name: value for name, value in tensors.items() if name not in names}
    return net, extra


def split_prefix(tensors: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    """Tensors stored under ``prefix``, with the prefix removed."""
    return {name[len(prefix) :]: value for name, value in tensors.items() if name.startswith(prefix)}


def with_prefix(tensors: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    return {prefix + name: value for name, value in tensors.items()}
