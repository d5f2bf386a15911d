"""Dual-branch body/boundary feature fusion segmentation toolkit."""

__version__ = "0.1.0"

from .labels import LabelSet, distance_map, split_labels

__all__ = ["LabelSet", "distance_map", "split_labels", "__version__"]
