"""Raster primitives: lines, discs, sticks, oriented rectangles and box overlap."""

import numpy as np


def bresenham(x0, y0, x1, y1):
    """Integer pixels of the segment (x0, y0)-(x1, y1), both endpoints included."""
    x0, y0, x1, y1 = int(round(x0)), int(round(y0)), int(round(x1)), int(round(y1))
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    pts = []
    while True:
        pts.append((x0, y0))
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    return pts


def segment_distance(xs, ys, a, b):
    """Euclidean distance from points (xs, ys) to the segment a-b."""
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    denom = vx * vx + vy * vy
    px = xs - ax
    py = ys - ay
    if denom == 0:
        return np.hypot(px, py)
    t = np.clip((px * vx + py * vy) / denom, 0.0, 1.0)
    return np.hypot(px - t * vx, py - t * vy)


def _window(shape, lo_x, lo_y, hi_x, hi_y):
    h, w = shape
    x0 = max(int(np.floor(lo_x)), 0)
    y0 = max(int(np.floor(lo_y)), 0)
    x1 = min(int(np.ceil(hi_x)) + 1, w)
    y1 = min(int(np.ceil(hi_y)) + 1, h)
    return x0, y0, x1, y1


def paint_disc(mask, center, radius, value=True):
    """Set pixels whose centre lies within `radius` of `center`."""
    cx, cy = center
    x0, y0, x1, y1 = _window(mask.shape, cx - radius, cy - radius,
                             cx + radius, cy + radius)
    if x0 >= x1 or y0 >= y1:
        return mask
    yy, xx = np.mgrid[y0:y1, x0:x1]
    hit = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
    mask[y0:y1, x0:x1][hit] = value
    return mask


def paint_stick(mask, a, b, half_width, value=True):
    """Set pixels within `half_width` of segment a-b."""
    lo_x = min(a[0], b[0]) - half_width
    hi_x = max(a[0], b[0]) + half_width
    lo_y = min(a[1], b[1]) - half_width
    hi_y = max(a[1], b[1]) + half_width
    x0, y0, x1, y1 = _window(mask.shape, lo_x, lo_y, hi_x, hi_y)
    if x0 >= x1 or y0 >= y1:
        return mask
    yy, xx = np.mgrid[y0:y1, x0:x1]
    hit = segment_distance(xx.astype(float), yy.astype(float), a, b) <= half_width
    mask[y0:y1, x0:x1][hit] = value
    return mask


def oriented_rect_window(shape, a, b, width):
    """Pixels inside the rectangle whose major axis is a-b and minor extent `width`.

    Returns (x0, y0, hit) where `hit` is a boolean window anchored at (x0, y0).
    The rectangle spans the segment's length exactly, with `width / 2` on
    either side of the axis; pixel centres on the border count as inside.
    """
    ax, ay = a
    bx, by = b
    length = float(np.hypot(bx - ax, by - ay))
    half = width / 2.0
    x0, y0, x1, y1 = _window(shape, min(ax, bx) - half, min(ay, by) - half,
                             max(ax, bx) + half, max(ay, by) + half)
    if x0 >= x1 or y0 >= y1:
        return x0, y0, np.zeros((0, 0), dtype=bool)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    if length == 0:
        return x0, y0, (xx == round(ax)) & (yy == round(ay))
    ux, uy = (bx - ax) / length, (by - ay) / length
    px = xx - ax
    py = yy - ay
    along = px * ux + py * uy
    across = -px * uy + py * ux
    eps = 1e-9
    hit = (along >= -eps) & (along <= length + eps) & (np.abs(across) <= half + eps)
    return x0, y0, hit


def box_iou(a, b):
    """IOU of two (x, y, w, h) rectangles; 0 when the union is empty."""
    if a is None or b is None:
        return 0.0
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


def points_bbox(points):
    """Tight (x, y, w, h) rectangle over a non-empty point list."""
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return (float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]))
