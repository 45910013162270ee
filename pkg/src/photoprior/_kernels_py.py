"""Pure-numpy implementations of the per-pixel manipulation kernels.

The compiled extension (_kernels.pyx) implements the same three functions.
Expression order matters: both backends evaluate the identical float64
expression per pixel so their outputs are bit-identical (the extension is
built with -ffp-contract=off for the same reason).
"""

from __future__ import annotations

import numpy as np


def piecewise_warp(img: np.ndarray, node_dx: np.ndarray,
                   node_dy: np.ndarray) -> np.ndarray:
    """Backward-map `img` through a piecewise-affine displacement field.

    Control nodes sit on a regular (rows x cols) grid spanning the image;
    `node_dx`/`node_dy` hold per-node source displacements in pixels. Each
    grid cell is split along its TL-BR diagonal into two triangles over
    which the displacement interpolates linearly, so the map is affine per
    triangle and continuous across edges. Samples are bilinear with edge
    clamp. Returns a new uint8 image.
    """
    h, w = img.shape[:2]
    rows, cols = node_dx.shape
    cell_h = (h - 1.0) / (rows - 1.0)
    cell_w = (w - 1.0) / (cols - 1.0)

    gx = np.arange(w, dtype=np.float64) / cell_w
    gy = np.arange(h, dtype=np.float64) / cell_h
    jj = np.minimum(np.floor(gx).astype(np.int64), cols - 2)
    ii = np.minimum(np.floor(gy).astype(np.int64), rows - 2)
    u = (gx - jj)[None, :]
    v = (gy - ii)[:, None]
    jj = jj[None, :]
    ii = ii[:, None]

    d_tl_x = node_dx[ii, jj]
    d_tr_x = node_dx[ii, jj + 1]
    d_bl_x = node_dx[ii + 1, jj]
    d_br_x = node_dx[ii + 1, jj + 1]
    d_tl_y = node_dy[ii, jj]
    d_tr_y = node_dy[ii, jj + 1]
    d_bl_y = node_dy[ii + 1, jj]
    d_br_y = node_dy[ii + 1, jj + 1]

    upper = (u + v) <= 1.0
    w_tl = (1.0 - u) - v           # upper-triangle barycentric weights
    w_br = (u + v) - 1.0           # lower-triangle weight of BR node
    dx = np.where(upper,
                  ((w_tl * d_tl_x) + (u * d_tr_x)) + (v * d_bl_x),
                  ((w_br * d_br_x) + ((1.0 - v) * d_tr_x)) + ((1.0 - u) * d_bl_x))
    dy = np.where(upper,
                  ((w_tl * d_tl_y) + (u * d_tr_y)) + (v * d_bl_y),
                  ((w_br * d_br_y) + ((1.0 - v) * d_tr_y)) + ((1.0 - u) * d_bl_y))

    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    sx = np.minimum(np.maximum(xs + dx, 0.0), w - 1.0)
    sy = np.minimum(np.maximum(ys + dy, 0.0), h - 1.0)

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    src = img.astype(np.float64)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        p00 = src[y0, x0, c]
        p01 = src[y0, x1, c]
        p10 = src[y1, x0, c]
        p11 = src[y1, x1, c]
        top = p00 + fx * (p01 - p00)
        bot = p10 + fx * (p11 - p10)
        val = top + fy * (bot - top)
        out[:, :, c] = np.floor(val + 0.5).astype(np.uint8)
    return out


def _erode(mask: np.ndarray) -> np.ndarray:
    """3x3 binary erosion; outside the frame counts as background."""
    padded = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=mask.dtype)
    padded[1:-1, 1:-1] = mask
    out = mask.copy()
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            np.minimum(out, padded[dy:dy + mask.shape[0], dx:dx + mask.shape[1]],
                       out=out)
    return out


def feather_alpha(mask: np.ndarray, band: int) -> np.ndarray:
    """Blend weight for a binary mask: 0 outside, ramping linearly to 1
    over `band` interior pixel rings (chessboard distance). band=0 gives
    the hard mask."""
    cur = (mask != 0).astype(np.uint8)
    depth = np.zeros(mask.shape, dtype=np.int64)
    for k in range(band + 1):
        depth += cur
        if k < band:
            cur = _erode(cur)
    return depth / float(band + 1)


def mirror_blend(img: np.ndarray, alpha: np.ndarray, x0: int, x1: int,
                 y0: int, y1: int, axis: int) -> np.ndarray:
    """Blend the mirror image of the box [y0..y1] x [x0..x1] back over it.

    axis 0 mirrors columns (left-right), axis 1 mirrors rows (top-bottom);
    the mirror axis is the box's own center line. Per pixel:
    out = orig + alpha * (mirrored - orig), so alpha = 0 leaves the pixel
    bit-identical. Returns a new uint8 image.
    """
    out = img.copy()
    sub = img[y0:y1 + 1, x0:x1 + 1].astype(np.float64)
    mirrored = sub[:, ::-1] if axis == 0 else sub[::-1, :]
    a = alpha[y0:y1 + 1, x0:x1 + 1][:, :, None]
    val = sub + a * (mirrored - sub)
    out[y0:y1 + 1, x0:x1 + 1] = np.floor(val + 0.5).astype(np.uint8)
    return out
