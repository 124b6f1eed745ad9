"""Feature dump format: u32 LE row count, u32 LE dim, then count*dim
float32 little-endian values in row-major order. Fixed so that an
implementation in any language can diff feature files byte for byte.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, ValidationError

_HEADER = struct.Struct("<II")


def write_features(features: np.ndarray) -> bytes:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValidationError(f"features must be 2D, got shape {feats.shape}")
    count, dim = feats.shape
    body = np.ascontiguousarray(feats, dtype="<f4").tobytes()
    return _HEADER.pack(count, dim) + body


def read_features(data: bytes) -> np.ndarray:
    """Decode a feature dump to a (count, dim) float32 array."""
    if len(data) < _HEADER.size:
        raise FormatError(f"feature dump too short ({len(data)} bytes)")
    count, dim = _HEADER.unpack_from(data)
    expected = _HEADER.size + 4 * count * dim
    if len(data) != expected:
        raise FormatError(
            f"feature dump is {len(data)} bytes, expected {expected} "
            f"for {count}x{dim}"
        )
    body = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return body.reshape(count, dim).copy()
