"""NumPy rasterizer.

Must stay arithmetically in lockstep with ``_raster_cy.pyx``: identical
expressions in identical order, divisions kept as divisions, the depth sum
associated the same way. Any change here needs the same change there, and
the bit-identity test will catch a mismatch.
"""

import math

import numpy as np


def rasterize(xy, attr, faces, width, height):
    value = np.full((height, width), np.inf, dtype=np.float64)
    owner = np.full((height, width), -1, dtype=np.int32)

    for t in range(faces.shape[0]):
        i0, i1, i2 = faces[t, 0], faces[t, 1], faces[t, 2]
        x0, y0 = xy[i0, 0], xy[i0, 1]
        x1, y1 = xy[i1, 0], xy[i1, 1]
        x2, y2 = xy[i2, 0], xy[i2, 1]
        a0, a1, a2 = attr[i0], attr[i1], attr[i2]

        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        if area < 0.0:
            x1, y1, a1, x2, y2, a2 = x2, y2, a2, x1, y1, a1
            area = -area

        bx0 = math.ceil(min(x0, x1, x2) - 0.5)
        bx1 = math.floor(max(x0, x1, x2) - 0.5)
        by0 = math.ceil(min(y0, y1, y2) - 0.5)
        by1 = math.floor(max(y0, y1, y2) - 0.5)
        bx0 = max(bx0, 0)
        by0 = max(by0, 0)
        bx1 = min(bx1, width - 1)
        by1 = min(by1, height - 1)
        if bx0 > bx1 or by0 > by1:
            continue

        cx = np.arange(bx0, bx1 + 1, dtype=np.float64)[None, :] + 0.5
        cy = np.arange(by0, by1 + 1, dtype=np.float64)[:, None] + 0.5

        # edge functions: e_i >= 0 inside (area normalized positive above)
        e0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
        e1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
        e2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)

        # top-left rule: a boundary pixel belongs to the triangle whose
        # edge is horizontal-going-right (top) or going up (left)
        t0 = (y2 - y1) < 0.0 or ((y2 - y1) == 0.0 and (x2 - x1) > 0.0)
        t1 = (y0 - y2) < 0.0 or ((y0 - y2) == 0.0 and (x0 - x2) > 0.0)
        t2 = (y1 - y0) < 0.0 or ((y1 - y0) == 0.0 and (x1 - x0) > 0.0)

        inside = (
            ((e0 > 0.0) | ((e0 == 0.0) & t0))
            & ((e1 > 0.0) | ((e1 == 0.0) & t1))
            & ((e2 > 0.0) | ((e2 == 0.0) & t2))
        )
        if not inside.any():
            continue

        w0 = e0 / area
        w1 = e1 / area
        w2 = e2 / area
        d = (w0 * a0 + w1 * a1) + w2 * a2

        region_v = value[by0 : by1 + 1, bx0 : bx1 + 1]
        region_o = owner[by0 : by1 + 1, bx0 : bx1 + 1]
        write = inside & (d < region_v)
        region_v[write] = d[write]
        region_o[write] = t

    return value, owner
