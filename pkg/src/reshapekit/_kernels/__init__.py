"""Rasterization kernel with a compiled fast path.

``rasterize`` scan-converts triangles with a minimum-value z-buffer. The
compiled Cython kernel is used when its extension module was built;
otherwise the NumPy implementation takes over. Both are written with the
same floating-point operation order, so their outputs are bit-identical —
the test suite and the benchmark both rely on that.
"""

import numpy as np

try:
    from ._raster_cy import rasterize as _rasterize_impl

    BACKEND = "cython"
except ImportError:  # extension not built; pure NumPy fallback
    from ._raster_py import rasterize as _rasterize_impl

    BACKEND = "numpy"

from ._raster_py import rasterize as rasterize_numpy

try:
    from ._raster_cy import rasterize as rasterize_cython
except ImportError:
    rasterize_cython = None


def rasterize(xy, attr, faces, width, height):
    """Scan-convert triangles, keeping the minimum interpolated attribute.

    Parameters
    ----------
    xy : (V, 2) float — screen coordinates, pixel units, y down
    attr : (V,) float — per-vertex scalar, interpolated linearly in screen
        space; the smallest value wins each pixel
    faces : (F, 3) int — triangle vertex indices
    width, height : image size in pixels

    Returns
    -------
    value : (H, W) float64 — winning attribute per pixel, +inf where empty
    owner : (H, W) int32 — winning triangle index, -1 where empty

    Pixel (px, py) samples at center (px + 0.5, py + 0.5). Coverage follows
    the top-left fill rule, so triangles sharing an edge never double-cover
    or leave gaps along it. Equal-value ties go to the lower triangle index.
    Degenerate (zero-area) triangles are skipped; the caller is responsible
    for culling anything behind the camera.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    attr = np.ascontiguousarray(attr, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int32)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError("xy must be (V, 2)")
    if attr.shape != (xy.shape[0],):
        raise ValueError("attr must be (V,)")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ValueError("faces must be (F, 3)")
    if faces.size and (faces.min() < 0 or faces.max() >= xy.shape[0]):
        raise ValueError("face index out of range")
    if not (np.all(np.isfinite(xy)) and np.all(np.isfinite(attr))):
        raise ValueError("xy and attr must be finite")
    if width <= 0 or height <= 0:
        raise ValueError("image size must be positive")
    return _rasterize_impl(xy, attr, faces, int(width), int(height))
