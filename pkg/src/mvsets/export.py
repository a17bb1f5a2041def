"""Binary PGM masks and SVG contour drawings.

Images put ``x`` along columns and ``y`` along rows with the top row at the
largest ``y``.  Both writers are pure functions of their input, so repeated
exports are byte-identical.
"""
from __future__ import annotations

import colorsys

import numpy as np
from skimage import measure

IN, OUT, EDGE = 255, 0, 128


def _mask_and_edge(obj):
    """Return ``(mask, boundary or None)`` for a set, a Bernoulli state or a raw mask."""
    if hasattr(obj, "boundary") and hasattr(obj, "mask"):
        return np.asarray(obj.mask, bool), np.asarray(obj.boundary, bool)
    if hasattr(obj, "positivity_mask"):
        pos = obj.positivity_mask & obj.operator.unknown
        return pos, np.asarray(obj.free_boundary_cells, bool)
    return np.asarray(obj, dtype=bool), None


def mask_image(obj):
    """Pixel array (rows = decreasing y) with 255 inside, 128 on boundary cells, 0 outside."""
    mask, edge = _mask_and_edge(obj)
    img = np.where(mask, IN, OUT).astype(np.uint8)
    if edge is not None:
        img[edge & mask] = EDGE
    return np.ascontiguousarray(img.T[::-1, :])


def pgm_bytes(obj):
    img = mask_image(obj)
    rows, cols = img.shape
    return b"P5\n%d %d\n255\n" % (cols, rows) + img.tobytes()


def export_mask_pgm(obj, path):
    """Write a P5 PGM with one pixel per cell."""
    data = pgm_bytes(obj)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def read_pgm(data):
    """Parse P5 bytes written by :func:`pgm_bytes` into an image array."""
    magic, dims, maxval, payload = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError("not an 8-bit P5 image")
    w, h = (int(t) for t in dims.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)


def mask_contours(mask, coords):
    """Closed boundary polylines of ``mask`` in coordinates.

    Marching squares runs on the zero-padded mask at level 0.5.  Each
    polyline is made counter-clockwise and starts at its lexicographically
    smallest vertex; polylines are sorted by that vertex.
    """
    mask = np.asarray(mask, dtype=float)
    padded = np.pad(mask, 1)
    h = coords[1] - coords[0]
    out = []
    for c in measure.find_contours(padded, 0.5):
        idx = c - 1.0
        pts = np.column_stack([coords[0] + idx[:, 0] * h, coords[0] + idx[:, 1] * h])
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        x, y = pts[:, 0], pts[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area < 0:
            pts = pts[::-1]
        k = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
        pts = np.roll(pts, -k, axis=0)
        out.append(np.round(pts, 12) + 0.0)
    out.sort(key=lambda p: (p[0, 0], p[0, 1], len(p)))
    return out


def _masks(obj):
    if hasattr(obj, "sets"):
        return [s.mask for s in obj.sets], obj.operator.grid
    if hasattr(obj, "positivity_mask"):
        return [obj.positivity_mask & obj.operator.unknown], obj.operator.grid
    if hasattr(obj, "mask"):
        return [obj.mask], obj.grid
    raise TypeError("expected a family, a mean-value set or a Bernoulli state")


def _hue(k, m):
    t = k / max(m - 1, 1)
    r, g, b = colorsys.hsv_to_rgb(0.66 * t, 0.85, 0.8)
    return "#%02x%02x%02x" % tuple(int(round(255 * v)) for v in (r, g, b))


def svg_text(obj, grid=None):
    """SVG 1.1 drawing of every set's boundary, hue increasing with the index."""
    if isinstance(obj, (list, tuple)):
        masks = list(obj)
    else:
        masks, grid = _masks(obj)
    if grid is None:
        raise ValueError("a grid is needed to place raw masks")
    hw = grid.half_width
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="512" height="512" viewBox="{-hw!r} {-hw!r} {2 * hw!r} {2 * hw!r}">',
        f'<g transform="scale(1,-1)" fill="none" stroke-width="{grid.h / 2!r}">',
    ]
    for k, mask in enumerate(masks):
        color = _hue(k, len(masks))
        for poly in mask_contours(mask, grid.coords):
            pts = " ".join(f"{x:.10g},{y:.10g}" for x, y in poly)
            lines.append(f'<polygon data-set="{k}" stroke="{color}" points="{pts}"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)


def export_contour_svg(obj, path, grid=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg_text(obj, grid))
    return path
