# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython rasterizer.

Arithmetic mirror of ``_raster_py.rasterize``: same expressions, same
order, same tie-breaking, so both backends produce bit-identical buffers.
The extension is built with floating-point contraction disabled to keep
that guarantee on FMA-capable compilers.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()


def rasterize(double[:, ::1] xy, double[::1] attr, cnp.int32_t[:, ::1] faces,
              int width, int height):
    value_arr = np.full((height, width), np.inf, dtype=np.float64)
    owner_arr = np.full((height, width), -1, dtype=np.int32)
    cdef double[:, ::1] value = value_arr
    cdef cnp.int32_t[:, ::1] owner = owner_arr

    cdef Py_ssize_t t, n_faces = faces.shape[0]
    cdef int i0, i1, i2, px, py, bx0, bx1, by0, by1
    cdef double x0, y0, x1, y1, x2, y2, a0, a1, a2
    cdef double area, tmp, fx0, fx1, fy0, fy1
    cdef double cx, cy, e0, e1, e2, w0, w1, w2, d
    cdef bint t0, t1, t2

    for t in range(n_faces):
        i0 = faces[t, 0]
        i1 = faces[t, 1]
        i2 = faces[t, 2]
        x0 = xy[i0, 0]; y0 = xy[i0, 1]
        x1 = xy[i1, 0]; y1 = xy[i1, 1]
        x2 = xy[i2, 0]; y2 = xy[i2, 1]
        a0 = attr[i0]; a1 = attr[i1]; a2 = attr[i2]

        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        if area < 0.0:
            tmp = x1; x1 = x2; x2 = tmp
            tmp = y1; y1 = y2; y2 = tmp
            tmp = a1; a1 = a2; a2 = tmp
            area = -area

        fx0 = ceil(_min3(x0, x1, x2) - 0.5)
        fx1 = floor(_max3(x0, x1, x2) - 0.5)
        fy0 = ceil(_min3(y0, y1, y2) - 0.5)
        fy1 = floor(_max3(y0, y1, y2) - 0.5)
        if fx0 < 0.0:
            fx0 = 0.0
        if fy0 < 0.0:
            fy0 = 0.0
        if fx1 > width - 1.0:
            fx1 = width - 1.0
        if fy1 > height - 1.0:
            fy1 = height - 1.0
        if fx0 > fx1 or fy0 > fy1:
            continue
        bx0 = <int>fx0; bx1 = <int>fx1
        by0 = <int>fy0; by1 = <int>fy1

        t0 = (y2 - y1) < 0.0 or ((y2 - y1) == 0.0 and (x2 - x1) > 0.0)
        t1 = (y0 - y2) < 0.0 or ((y0 - y2) == 0.0 and (x0 - x2) > 0.0)
        t2 = (y1 - y0) < 0.0 or ((y1 - y0) == 0.0 and (x1 - x0) > 0.0)

        for py in range(by0, by1 + 1):
            cy = py + 0.5
            for px in range(bx0, bx1 + 1):
                cx = px + 0.5
                e0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
                if e0 < 0.0 or (e0 == 0.0 and not t0):
                    continue
                e1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
                if e1 < 0.0 or (e1 == 0.0 and not t1):
                    continue
                e2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
                if e2 < 0.0 or (e2 == 0.0 and not t2):
                    continue
                w0 = e0 / area
                w1 = e1 / area
                w2 = e2 / area
                d = (w0 * a0 + w1 * a1) + w2 * a2
                if d < value[py, px]:
                    value[py, px] = d
                    owner[py, px] = <cnp.int32_t>t

    return value_arr, owner_arr


cdef inline double _min3(double a, double b, double c) nogil:
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    return m


cdef inline double _max3(double a, double b, double c) nogil:
    cdef double m = a
    if b > m:
        m = b
    if c > m:
        m = c
    return m
