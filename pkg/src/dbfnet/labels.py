"""Decompose a binary mask into body and boundary supervision targets.

A foreground pixel belongs to the boundary band when its distance to the
nearest background pixel is <= ``alpha`` (default 1 pixel), and to the
body otherwise.  Background stays background in both outputs, so
``body | bound == mask`` and ``body & bound == 0`` always hold.

A mask with no background at all (all-foreground) has no boundary band:
there is no implicit background outside the grid, so every pixel is body.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParameterError, ShapeError
from .kernels import distance_transform

__all__ = [
    "LabelSet",
    "distance_map",
    "split_labels",
    "read_mask",
    "write_mask",
]

MASK_THRESHOLD = 127  # 8-bit masks: values > 127 are foreground


@dataclass(frozen=True)
class LabelSet:
    """The (final, body, bound) mask triple derived from one ground truth."""

    final: np.ndarray
    body: np.ndarray
    bound: np.ndarray
    alpha: float

    def __post_init__(self):
        if not (self.final.shape == self.body.shape == self.bound.shape):
            raise ShapeError("final/body/bound shapes differ")

    @property
    def shape(self) -> tuple[int, int]:
        return self.final.shape


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.shape[0] < 1 or mask.shape[1] < 1:
        raise ShapeError(f"mask must be a nonempty 2-D grid, got shape {mask.shape}")
    return mask != 0


def distance_map(mask: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Per-pixel distance from foreground to the nearest background pixel.

    Background pixels map to 0; if the mask has no background, every
    foreground pixel maps to ``+inf``.
    """
    fg = _check_mask(mask)
    return distance_transform(fg, metric=metric)


def split_labels(
    mask: np.ndarray, alpha: float = 1.0, metric: str = "euclidean"
) -> LabelSet:
    """Split a binary mask into disjoint body and boundary masks."""
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    fg = _check_mask(mask)
    dist = distance_transform(fg, metric=metric)
    bound = fg & (dist <= alpha)
    body = fg & (dist > alpha)
    return LabelSet(
        final=fg.astype(np.uint8),
        body=body.astype(np.uint8),
        bound=bound.astype(np.uint8),
        alpha=float(alpha),
    )


def read_mask(path: str | Path) -> np.ndarray:
    """Load a mask image as a {0,1} uint8 array (8-bit input, >127 is fg)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > MASK_THRESHOLD).astype(np.uint8)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Save a {0,1} mask as an 8-bit image with foreground at 255."""
    arr = (_check_mask(mask) * np.uint8(255)).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)
