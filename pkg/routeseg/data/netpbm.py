"""
Binary NetPBM files: P6 (RGB images) and P5 (grayscale, used for masks).

Only 8-bit rasters (maxval 255) are supported. Header fields are separated
by whitespace and may be interleaved with ``#`` comments running to the end
of the line; exactly one whitespace byte separates the maxval from the
raster.
"""

from pathlib import Path
from typing import Tuple

import numpy as np

import routeseg

logger = routeseg.logger

MAXVAL = 255
_WHITESPACE = b" \t\n\r\x0b\x0c"


class NetpbmError(ValueError):
    """Malformed NetPBM data; the message gives the byte offset of the problem."""


def _next_token(buffer: bytes, offset: int) -> Tuple[bytes, int, int]:
    """Return (token, start offset, offset after the token), skipping whitespace and comments."""
    n = len(buffer)
    while offset < n:
        byte = buffer[offset : offset + 1]
        if byte == b"#":
            while offset < n and buffer[offset : offset + 1] not in (b"\n", b"\r"):
                offset += 1
        elif byte in _WHITESPACE:
            offset += 1
        else:
            break
    start = offset
    while offset < n and buffer[offset : offset + 1] not in _WHITESPACE + b"#":
        offset += 1
    return buffer[start:offset], start, offset


def parse_header(buffer: bytes, magic: bytes) -> Tuple[int, int, int]:
    """
    Parse a P5/P6 header.

    Returns
    -------
    width, height : int
    raster_offset : int
        Offset of the first raster byte.

    Raises
    ------
    NetpbmError
    """
    if buffer[:2] != magic:
        raise NetpbmError(f"expected magic {magic.decode()} at byte offset 0, found {buffer[:2]!r}")
    offset = 2
    fields = []
    for what in ("width", "height", "maxval"):
        token, start, offset = _next_token(buffer, offset)
        if not token.isdigit():
            raise NetpbmError(f"invalid {what} {token!r} at byte offset {start}")
        value = int(token)
        if what != "maxval" and value <= 0:
            raise NetpbmError(f"{what} must be positive, got {value} at byte offset {start}")
        if what == "maxval" and value != MAXVAL:
            raise NetpbmError(f"only maxval 255 is supported, got {value} at byte offset {start}")
        fields.append(value)
    if offset >= len(buffer) or buffer[offset : offset + 1] not in _WHITESPACE:
        raise NetpbmError(f"expected a whitespace byte after maxval at byte offset {offset}")
    width, height, _ = fields
    return width, height, offset + 1


def _raster(buffer: bytes, magic: bytes, channels: int) -> Tuple[int, int, np.ndarray]:
    width, height, start = parse_header(buffer, magic)
    expected = width * height * channels
    available = len(buffer) - start
    if available < expected:
        raise NetpbmError(
            f"truncated raster: {width}x{height}x{channels} needs {expected} bytes "
            f"from byte offset {start}, file ends at byte offset {len(buffer)}"
        )
    if available > expected:
        logger.debug(f"Ignoring {available - expected} bytes after the raster.")
    return width, height, np.frombuffer(buffer, dtype=np.uint8, count=expected, offset=start)


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Scale [0, 1] floats to 8 bits, rounding half up."""
    return np.floor(np.clip(image, 0.0, 1.0) * MAXVAL + 0.5).astype(np.uint8)


def encode_ppm(image: np.ndarray) -> bytes:
    """(3, H, W) float image in [0, 1] -> P6 bytes."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected an image of shape (3, H, W), got {image.shape}")
    _, height, width = image.shape
    header = f"P6\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + to_bytes(image).transpose(1, 2, 0).tobytes()


def decode_ppm(buffer: bytes) -> np.ndarray:
    """P6 bytes -> (3, H, W) float image in [0, 1]."""
    width, height, raster = _raster(buffer, b"P6", 3)
    return raster.reshape(height, width, 3).transpose(2, 0, 1).astype(np.float64) / MAXVAL


def encode_pgm(mask: np.ndarray) -> bytes:
    """(H, W) integer map with values in [0, 255] -> P5 bytes."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a mask of shape (H, W), got {mask.shape}")
    if mask.size and (mask.min() < 0 or mask.max() > MAXVAL):
        raise ValueError(f"mask values must be in [0, 255], got [{mask.min()}, {mask.max()}]")
    height, width = mask.shape
    header = f"P5\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + mask.astype(np.uint8).tobytes()


def decode_pgm(buffer: bytes) -> np.ndarray:
    """P5 bytes -> (H, W) int64 map."""
    width, height, raster = _raster(buffer, b"P5", 1)
    return raster.reshape(height, width).astype(np.int64)


def write_ppm(path, image: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_ppm(image))
    return path


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def write_pgm(path, mask: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_pgm(mask))
    return path


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
