"""Numeric kernels for label generation and boundary metrics.

Two interchangeable backends compute identical results:

* ``numba``  -- ``@njit``-compiled loops (default when numba imports cleanly)
* ``numpy``  -- vectorized numpy/scipy implementations

Set ``DBFNET_NUMBA=0`` in the environment before import to force the
numpy backend.  ``benchmarks/bench_kernels.py`` times the two against
each other.

Distance conventions: distances are measured between pixel centers, so
4-adjacent pixels are 1.0 apart.  Foreground pixels with no background
anywhere in the grid get ``+inf``.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

__all__ = [
    "active_backend",
    "boundary_mask",
    "distance_transform",
    "hausdorff_points",
    "DISTANCE_METRICS",
]

DISTANCE_METRICS = ("euclidean", "cityblock", "chessboard")

# Sentinel for "no background seen yet"; large enough to beat any real
# squared distance, small enough that float64 arithmetic stays sane.
_BIG = 1.0e18


def _env_wants_numba() -> bool:
    return os.environ.get("DBFNET_NUMBA", "1").strip().lower() not in (
        "0",
        "false",
        "off",
        "no",
    )


try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = _HAVE_NUMBA and _env_wants_numba()


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Exact distance transforms
# ---------------------------------------------------------------------------


@njit(cache=True)
def _edt_sq_numba(fg):
    h, w = fg.shape
    # pass 1: per column, squared distance to nearest background row
    d1 = np.empty((h, w), np.float64)
    for x in range(w):
        last = -1
        for y in range(h):
            if not fg[y, x]:
                last = y
            if last < 0:
                d1[y, x] = _BIG
            else:
                d = y - last
                d1[y, x] = d * d
        nxt = -1
        for y in range(h - 1, -1, -1):
            if not fg[y, x]:
                nxt = y
            if nxt >= 0:
                d = nxt - y
                dd = float(d * d)
                if dd < d1[y, x]:
                    d1[y, x] = dd
    # pass 2: per row, lower envelope of parabolas over column distances
    out = np.empty((h, w), np.float64)
    v = np.empty(w, np.int64)
    z = np.empty(w + 1, np.float64)
    for y in range(h):
        k = 0
        v[0] = 0
        z[0] = -_BIG
        z[1] = _BIG
        for q in range(1, w):
            s = ((d1[y, q] + q * q) - (d1[y, v[k]] + v[k] * v[k])) / (
                2.0 * (q - v[k])
            )
            while s <= z[k]:
                k -= 1
                s = ((d1[y, q] + q * q) - (d1[y, v[k]] + v[k] * v[k])) / (
                    2.0 * (q - v[k])
                )
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = _BIG
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            d = q - v[k]
            out[y, q] = d * d + d1[y, v[k]]
    return out


@njit(cache=True)
def _chamfer_numba(fg, diagonal):
    # Two raster scans with unit steps: exact for city-block, and for
    # chessboard when diagonal moves are allowed.
    h, w = fg.shape
    big = h + w + 2
    d = np.empty((h, w), np.int64)
    for y in range(h):
        for x in range(w):
            d[y, x] = 0 if not fg[y, x] else big
    for y in range(h):
        for x in range(w):
            if d[y, x] == 0:
                continue
            best = d[y, x]
            if y > 0 and d[y - 1, x] + 1 < best:
                best = d[y - 1, x] + 1
            if x > 0 and d[y, x - 1] + 1 < best:
                best = d[y, x - 1] + 1
            if diagonal:
                if y > 0 and x > 0 and d[y - 1, x - 1] + 1 < best:
                    best = d[y - 1, x - 1] + 1
                if y > 0 and x < w - 1 and d[y - 1, x + 1] + 1 < best:
                    best = d[y - 1, x + 1] + 1
            d[y, x] = best
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            if d[y, x] == 0:
                continue
            best = d[y, x]
            if y < h - 1 and d[y + 1, x] + 1 < best:
                best = d[y + 1, x] + 1
            if x < w - 1 and d[y, x + 1] + 1 < best:
                best = d[y, x + 1] + 1
            if diagonal:
                if y < h - 1 and x < w - 1 and d[y + 1, x + 1] + 1 < best:
                    best = d[y + 1, x + 1] + 1
                if y < h - 1 and x > 0 and d[y + 1, x - 1] + 1 < best:
                    best = d[y + 1, x - 1] + 1
            d[y, x] = best
    return d


def _distance_numba(fg: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        sq = _edt_sq_numba(fg)
        out = np.sqrt(sq)
        out[sq >= _BIG / 2] = np.inf
        return out
    d = _chamfer_numba(fg, metric == "chessboard").astype(np.float64)
    d[d >= fg.shape[0] + fg.shape[1] + 2] = np.inf
    return d


def _distance_numpy(fg: np.ndarray, metric: str) -> np.ndarray:
    if fg.all():
        return np.full(fg.shape, np.inf)
    if metric == "euclidean":
        return ndimage.distance_transform_edt(fg).astype(np.float64)
    cdt_metric = "taxicab" if metric == "cityblock" else "chessboard"
    return ndimage.distance_transform_cdt(fg, metric=cdt_metric).astype(np.float64)


def distance_transform(fg: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Distance from each foreground pixel to the nearest background pixel.

    ``fg`` is a 2-D boolean array.  Background pixels map to 0.0; if the
    grid has no background at all, every pixel maps to ``+inf``.
    """
    if metric not in DISTANCE_METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {DISTANCE_METRICS}")
    fg = np.ascontiguousarray(fg, dtype=bool)
    if USE_NUMBA:
        return _distance_numba(fg, metric)
    return _distance_numpy(fg, metric)


# ---------------------------------------------------------------------------
# Hausdorff distance between point sets
# ---------------------------------------------------------------------------


@njit(cache=True)
def _directed_hausdorff_sq_numba(a, b):
    # max over a of min over b; inner loop breaks as soon as the current
    # point cannot raise the running maximum
    cmax = 0.0
    for i in range(a.shape[0]):
        dmin = _BIG
        for j in range(b.shape[0]):
            dy = a[i, 0] - b[j, 0]
            dx = a[i, 1] - b[j, 1]
            d = dy * dy + dx * dx
            if d < dmin:
                dmin = d
                if dmin <= cmax:
                    break
        if dmin > cmax:
            cmax = dmin
    return cmax


def _hausdorff_numba(a: np.ndarray, b: np.ndarray) -> float:
    forward = _directed_hausdorff_sq_numba(a, b)
    backward = _directed_hausdorff_sq_numba(b, a)
    return float(np.sqrt(max(forward, backward)))


def _hausdorff_numpy(a: np.ndarray, b: np.ndarray) -> float:
    d = cdist(a, b)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def hausdorff_points(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two nonempty (n, 2) point sets."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("point sets must be nonempty")
    if USE_NUMBA:
        return _hausdorff_numba(a, b)
    return _hausdorff_numpy(a, b)


# ---------------------------------------------------------------------------
# Boundary extraction (4-connectivity erosion difference)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _boundary_numba(fg):
    h, w = fg.shape
    out = np.zeros((h, w), np.bool_)
    for y in range(h):
        for x in range(w):
            if not fg[y, x]:
                continue
            if y == 0 or y == h - 1 or x == 0 or x == w - 1:
                out[y, x] = True
            elif (
                not fg[y - 1, x]
                or not fg[y + 1, x]
                or not fg[y, x - 1]
                or not fg[y, x + 1]
            ):
                out[y, x] = True
    return out


def _boundary_numpy(fg: np.ndarray) -> np.ndarray:
    # default structuring element is the 4-connected cross; pixels outside
    # the grid count as background, so mask pixels on the border stay in
    return fg & ~ndimage.binary_erosion(fg)


def boundary_mask(fg: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbor (or grid edge) in the background."""
    fg = np.ascontiguousarray(fg, dtype=bool)
    if USE_NUMBA:
        return _boundary_numba(fg)
    return _boundary_numpy(fg)
