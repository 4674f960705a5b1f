"""Tiling six views into one 3x2 frame and back.

View i occupies grid cell (row i//2, column i%2).  This mapping is the
single source of truth for the whole codebase; renderer, model and
evaluation all import it from here.  Both directions are pure reshapes,
so round trips are bit-exact for any dtype and channel count.
"""

from __future__ import annotations

import numpy as np

GRID_ROWS = 3
GRID_COLS = 2
NUM_VIEWS = GRID_ROWS * GRID_COLS


def view_cell(i: int) -> tuple[int, int]:
    """Grid cell (row, col) of view index i."""
    if not 0 <= i < NUM_VIEWS:
        raise ValueError(f"view index {i} outside 0..{NUM_VIEWS - 1}")
    return divmod(i, GRID_COLS)


def tile(views) -> np.ndarray:
    """Stack six H x W x C views into one (3H) x (2W) x C frame."""
    views = [np.asarray(v) for v in views]
    if len(views) != NUM_VIEWS:
        raise ValueError(f"expected {NUM_VIEWS} views, got {len(views)}")
    shape = views[0].shape
    if any(v.shape != shape for v in views):
        raise ValueError(f"view shapes differ: {[v.shape for v in views]}")
    if len(shape) != 3:
        raise ValueError(f"views must be H x W x C, got {shape}")
    h, w, c = shape
    arr = np.stack(views)  # (6, H, W, C)
    return np.ascontiguousarray(
        arr.reshape(GRID_ROWS, GRID_COLS, h, w, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(GRID_ROWS * h, GRID_COLS * w, c)
    )


def untile(frame: np.ndarray) -> list[np.ndarray]:
    """Exact inverse of tile."""
    frame = np.asarray(frame)
    if frame.ndim != 3:
        raise ValueError(f"frame must be H x W x C, got {frame.shape}")
    fh, fw, c = frame.shape
    if fh % GRID_ROWS or fw % GRID_COLS:
        raise ValueError(f"frame {frame.shape} not divisible into a {GRID_ROWS}x{GRID_COLS} grid")
    h, w = fh // GRID_ROWS, fw // GRID_COLS
    arr = (
        frame.reshape(GRID_ROWS, h, GRID_COLS, w, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(NUM_VIEWS, h, w, c)
    )
    return [np.ascontiguousarray(arr[i]) for i in range(NUM_VIEWS)]
