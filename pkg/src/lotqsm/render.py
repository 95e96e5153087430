"""Grayscale PNG slices with linear windowing."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from lotqsm.errors import StructuralError
from lotqsm.volume import ScalarVolume


def window_to_uint8(data: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Map [lo, hi] linearly onto 0..255; values outside are clipped."""
    scaled = (np.asarray(data, dtype=np.float64) - lo) / (hi - lo)
    return np.round(255.0 * np.clip(scaled, 0.0, 1.0)).astype(np.uint8)


def render_slices(vol: ScalarVolume, axis: int, indices: Sequence[int], window: tuple[float, float],
                  out_paths: Sequence) -> list[Path]:
    """Write one PNG per slice index along ``axis``.

    Image rows follow the lower remaining array axis, columns the higher one.
    """
    lo, hi = (float(w) for w in window)
    if not lo < hi:
        raise StructuralError(f"window must satisfy lo < hi, got ({lo}, {hi})")
    if axis not in (0, 1, 2):
        raise StructuralError(f"axis must be 0, 1 or 2, got {axis}")
    if len(indices) != len(out_paths):
        raise StructuralError(f"{len(indices)} slice indices but {len(out_paths)} output paths")
    n = vol.dims[axis]
    written = []
    for idx, path in zip(indices, out_paths):
        if not 0 <= idx < n:
            raise StructuralError(f"slice index {idx} out of range for axis {axis} with {n} slices")
        pixels = window_to_uint8(np.take(vol.data, idx, axis=axis), lo, hi)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels).save(path)
        written.append(path)
    return written
