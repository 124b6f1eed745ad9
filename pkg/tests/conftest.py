"""Shared helpers: synthetic scenes and tolerance checks."""

from __future__ import annotations

import numpy as np
import pytest

from evprune.ppm import write_ppm

SQUARE = 32          # bright square edge, pixels
SCENE = 128          # scene edge, pixels
BACKGROUND = 51      # uint8 background (0.2 in [0,1])
FOREGROUND = 230     # uint8 square fill (0.9 in [0,1])


def square_scene(x0: int, y0: int) -> np.ndarray:
    """Flat background with a bright SQUARE x SQUARE square at (x0, y0)."""
    img = np.full((SCENE, SCENE, 3), BACKGROUND, dtype=np.uint8)
    img[y0 : y0 + SQUARE, x0 : x0 + SQUARE] = FOREGROUND
    return img


@pytest.fixture
def square_pair(tmp_path):
    """PPM file pair: the square moves from (16,16) to (64,16)."""
    path_a = tmp_path / "frame_a.ppm"
    path_b = tmp_path / "frame_b.ppm"
    path_a.write_bytes(write_ppm(square_scene(16, 16)))
    path_b.write_bytes(write_ppm(square_scene(64, 16)))
    return path_a, path_b


def max_rel_err(got: np.ndarray, want: np.ndarray, floor: float = 1e-9) -> float:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    assert got.shape == want.shape
    if got.size == 0:
        return 0.0
    return float((np.abs(got - want) / np.maximum(np.abs(want), floor)).max())
