"""Synthetic face manipulations used as the positive class of the
classification pretext task.

Images are H x W x 3 uint8 arrays. Landmarks follow the standard 68-point
annotation order; only the eye (36-47) and mouth (48-67) subsets are used.
All operations are pure and seeded: identical inputs give bit-identical
outputs.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from . import kernels
from .errors import DegenerateRegion, DimensionMismatch, InvalidParams

EYE_POINTS = slice(36, 48)
MOUTH_POINTS = slice(48, 68)

DEFAULT_MARGIN_FRAC = 0.05
DEFAULT_FEATHER_BAND = 3
DEFAULT_GRID = (4, 4)
DEFAULT_SCALE = 0.03


class ManipulationKind(enum.Enum):
    EYE_FLIP_H = "eye_flip_h"
    MOUTH_FLIP_H = "mouth_flip_h"
    MOUTH_FLIP_V = "mouth_flip_v"
    PIECEWISE_AFFINE = "piecewise_affine"


MANIPULATION_KINDS = tuple(ManipulationKind)


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DimensionMismatch("expected H x W x 3 uint8 image")
    return np.ascontiguousarray(img)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counterclockwise, collinear points dropped."""
    pts = sorted(set(map(tuple, points.tolist())))
    if len(pts) < 3:
        return np.array(pts, dtype=np.float64)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def region_mask(landmarks: np.ndarray, part: str, shape,
                margin_frac: float = DEFAULT_MARGIN_FRAC) -> np.ndarray:
    """Filled convex hull of a face part's landmarks as a boolean H x W mask.

    The hull is dilated by `margin_frac` of the part's bounding-box diagonal
    (half-plane offsets, mitered corners) and clamped to the frame. Raises
    DegenerateRegion when the hull has zero area or no pixel survives the
    clamp.
    """
    landmarks = np.asarray(landmarks, dtype=np.float64)
    if landmarks.shape != (68, 2):
        raise DimensionMismatch("expected 68 x 2 landmark array")
    if part == "eyes":
        pts = landmarks[EYE_POINTS]
    elif part == "mouth":
        pts = landmarks[MOUTH_POINTS]
    else:
        raise InvalidParams(f"unknown part {part!r}")
    if not np.all(np.isfinite(pts)):
        raise InvalidParams("landmarks must be finite")

    hull = _convex_hull(pts)
    if len(hull) < 3:
        raise DegenerateRegion(f"{part} landmarks are collinear or coincident")

    span = pts.max(axis=0) - pts.min(axis=0)
    margin = margin_frac * math.hypot(span[0], span[1])

    h, w = shape[0], shape[1]
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    inside = np.ones((h, w), dtype=bool)
    for k in range(len(hull)):
        ax, ay = hull[k]
        bx, by = hull[(k + 1) % len(hull)]
        ex, ey = bx - ax, by - ay
        norm = math.hypot(ex, ey)
        # signed distance to the edge line, positive on the hull's inside
        inside &= (ex * (ys - ay) - ey * (xs - ax)) >= -margin * norm
    if not inside.any():
        raise DegenerateRegion(f"{part} region lies outside the frame")
    return inside


def flip_blend(img: np.ndarray, mask: np.ndarray, axis: str,
               band: int = DEFAULT_FEATHER_BAND) -> np.ndarray:
    """Mirror the mask's bounding box about its own center axis and blend
    the mirrored content back in with a feathered weight.

    The weight is 1 deep inside the mask, ramps linearly to 0 over `band`
    boundary pixel rings, and is symmetrized about the flip axis so that a
    hard-mask (band=0) double flip restores the original image exactly.
    Pixels with weight 0 are untouched.
    """
    img = _check_image(img)
    mask = np.asarray(mask)
    if mask.shape != img.shape[:2]:
        raise DimensionMismatch(
            f"mask shape {mask.shape} != image shape {img.shape[:2]}")
    if axis not in ("horizontal", "vertical"):
        raise InvalidParams(f"axis must be horizontal or vertical, got {axis!r}")
    if band < 0:
        raise InvalidParams("band must be >= 0")

    mask_u8 = np.ascontiguousarray((mask != 0).astype(np.uint8))
    ys, xs = np.nonzero(mask_u8)
    if len(ys) == 0:
        return img.copy()
    y0, y1 = int(ys.min()), int(ys.max())
    x0, x1 = int(xs.min()), int(xs.max())

    alpha = kernels.feather_alpha(mask_u8, band)
    sub = alpha[y0:y1 + 1, x0:x1 + 1]
    mirrored = sub[:, ::-1] if axis == "horizontal" else sub[::-1, :]
    alpha[y0:y1 + 1, x0:x1 + 1] = np.maximum(sub, mirrored)

    code = 0 if axis == "horizontal" else 1
    return kernels.mirror_blend(img, alpha, x0, x1, y0, y1, code)


def piecewise_affine(img: np.ndarray, grid=DEFAULT_GRID,
                     scale: float = DEFAULT_SCALE, seed: int = 0) -> np.ndarray:
    """Warp the whole image by jittering a regular control grid.

    Control points on a (rows x cols) grid get i.i.d. uniform offsets in
    [-scale*cell, +scale*cell] from a generator seeded with `seed`; pixels
    are backward-mapped with bilinear interpolation over the triangulated
    grid, clamping to the frame. scale=0 is the identity.
    """
    img = _check_image(img)
    rows, cols = grid
    if rows < 2 or cols < 2:
        raise InvalidParams("grid must be at least 2 x 2")
    if not (0.0 <= scale <= 0.5):
        raise InvalidParams("scale must lie in [0, 0.5]")

    h, w = img.shape[:2]
    cell_h = (h - 1.0) / (rows - 1.0)
    cell_w = (w - 1.0) / (cols - 1.0)
    raw = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(2, rows, cols))
    node_dx = raw[0] * (scale * cell_w)
    node_dy = raw[1] * (scale * cell_h)
    return kernels.piecewise_warp(img, node_dx, node_dy)


def apply_manipulation(img: np.ndarray, landmarks, kind: ManipulationKind,
                       seed: int = 0):
    """Apply one manipulation; returns (manipulated image, label 1).

    Part flips fall back to the piecewise-affine warp when the landmark
    region is degenerate (or landmarks are missing) so that every sample
    can yield a manipulated counterpart.
    """
    img = _check_image(img)
    if kind is ManipulationKind.PIECEWISE_AFFINE:
        return piecewise_affine(img, seed=seed), 1
    try:
        if landmarks is None:
            raise DegenerateRegion("no landmarks for part flip")
        if kind is ManipulationKind.EYE_FLIP_H:
            mask = region_mask(landmarks, "eyes", img.shape)
            return flip_blend(img, mask, "horizontal"), 1
        if kind is ManipulationKind.MOUTH_FLIP_H:
            mask = region_mask(landmarks, "mouth", img.shape)
            return flip_blend(img, mask, "horizontal"), 1
        if kind is ManipulationKind.MOUTH_FLIP_V:
            mask = region_mask(landmarks, "mouth", img.shape)
            return flip_blend(img, mask, "vertical"), 1
    except DegenerateRegion:
        return piecewise_affine(img, seed=seed), 1
    raise InvalidParams(f"unknown manipulation kind {kind!r}")
