"""Point-set geometry: contour spreading, sampling grids, bilinear sampling.

Coordinate convention: points are (x, y) with x the column index and y the
row index; pixel centers sit at integer coordinates. Point sets are plain
(N, 2) float arrays, point sequences (T, N, 2).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _make

__all__ = [
    "GeometryError", "spread_contour", "contour_normals",
    "make_sampling_grid", "make_sampling_grids",
    "bilinear_sample", "point_sample",
]


class GeometryError(ValueError):
    pass


def contour_normals(contour: np.ndarray) -> np.ndarray:
    """Unit outward normals per contour point.

    Tangents come from central differences (one-sided at endpoints); the
    normal is the tangent rotated -90 degrees, flipped to point away from
    the contour centroid. Exact ties keep the rotation convention.
    """
    c = np.asarray(contour, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 3:
        raise GeometryError(f"contour must be (N>=3, 2), got {c.shape}")
    dup = np.where(np.all(c[1:] == c[:-1], axis=1))[0]
    if dup.size:
        raise GeometryError(f"degenerate contour: identical consecutive points at index {int(dup[0])}")
    tang = np.empty_like(c)
    tang[1:-1] = c[2:] - c[:-2]
    tang[0] = c[1] - c[0]
    tang[-1] = c[-1] - c[-2]
    length = np.hypot(tang[:, 0], tang[:, 1])
    zero = np.where(length == 0)[0]
    if zero.size:
        raise GeometryError(f"degenerate contour: zero tangent at index {int(zero[0])}")
    normal = np.stack([tang[:, 1], -tang[:, 0]], axis=1) / length[:, None]
    centroid = c.mean(axis=0)
    flip = np.einsum("ij,ij->i", normal, c - centroid) < 0
    normal[flip] *= -1.0
    return normal


def spread_contour(contour, spacing_px: float = 6.0, rows: int = 3,
                   frame_extent=(224, 224)) -> np.ndarray:
    """Append `rows` outward-offset copies of a contour at spacing_px steps.

    Output is ring-major: the original contour first, then ring 1..rows,
    each preserving contour order. Points are clamped into the frame.
    """
    if spacing_px <= 0:
        raise GeometryError(f"spacing must be positive, got {spacing_px}")
    c = np.asarray(contour, dtype=np.float64)
    normal = contour_normals(c)
    h, w = frame_extent
    rings = [c] + [c + normal * (spacing_px * r) for r in range(1, rows + 1)]
    out = np.concatenate(rings, axis=0)
    out[:, 0] = np.clip(out[:, 0], 0.0, w - 1.0)
    out[:, 1] = np.clip(out[:, 1], 0.0, h - 1.0)
    return out


def make_sampling_grid(point, j: int) -> np.ndarray:
    """j x j grid of (x, y) coordinates centered exactly on one point."""
    return make_sampling_grids(np.asarray(point, dtype=np.float64)[None, :], j)[0]


def make_sampling_grids(points, j: int) -> np.ndarray:
    """Per-point j x j sampling grids: (..., 2) -> (..., j, j, 2).

    Offsets are u - (j-1)/2 for u in [0, j), in both x and y, so the grid
    centroid coincides with the point.
    """
    if j < 1:
        raise GeometryError(f"patch size must be >= 1, got {j}")
    pts = np.asarray(points, dtype=np.float64)
    off = np.arange(j, dtype=np.float64) - (j - 1) / 2.0
    grid = np.empty(pts.shape[:-1] + (j, j, 2), dtype=pts.dtype)
    grid[..., 0] = pts[..., None, None, 0] + off[None, :]
    grid[..., 1] = pts[..., None, None, 1] + off[:, None]
    return grid


def _bilinear_forward(frames: np.ndarray, coords: np.ndarray):
    """Shared kernel: frames (B, H, W), coords (B, M, 2) -> values (B, M).

    Returns the sampled values plus everything backward needs. Coordinates
    are clamped to the frame border (replicate padding).
    """
    b, h, w = frames.shape
    x = np.clip(coords[..., 0], 0.0, w - 1.0)
    y = np.clip(coords[..., 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (x - x0).astype(frames.dtype)
    wy = (y - y0).astype(frames.dtype)

    flat = frames.reshape(b, h * w)
    bi = np.arange(b, dtype=np.int64)[:, None]
    f00 = flat[bi, y0 * w + x0]
    f01 = flat[bi, y0 * w + x1]
    f10 = flat[bi, y1 * w + x0]
    f11 = flat[bi, y1 * w + x1]
    top = f00 + wx * (f01 - f00)
    bot = f10 + wx * (f11 - f10)
    vals = top + wy * (bot - top)

    # clamp zeroes the coordinate gradient outside the frame
    in_x = ((coords[..., 0] >= 0.0) & (coords[..., 0] <= w - 1.0)).astype(frames.dtype)
    in_y = ((coords[..., 1] >= 0.0) & (coords[..., 1] <= h - 1.0)).astype(frames.dtype)
    return vals, (x0, x1, y0, y1, wx, wy, f00, f01, f10, f11, in_x, in_y)


def bilinear_sample(frame, grid) -> np.ndarray:
    """Sample a single frame (H, W) at (…, 2) coordinates; plain numpy."""
    frame = np.asarray(frame)
    grid = np.asarray(grid, dtype=np.float64)
    vals, _ = _bilinear_forward(frame[None], grid.reshape(1, -1, 2))
    return vals.reshape(grid.shape[:-1])


def point_sample(frames: Tensor, coords: Tensor) -> Tensor:
    """Differentiable bilinear sampling of frames at non-integer coordinates.

    frames: Tensor (B, H, W) or (H, W); coords: Tensor (B, ..., 2) or
    (..., 2) matching. Differentiable w.r.t. both the frame intensities and
    the coordinates, with border clamping (zero coordinate gradient where
    clamped).
    """
    squeeze = frames.ndim == 2
    fdata = frames.data[None] if squeeze else frames.data
    cdata = coords.data[None] if squeeze else coords.data
    if fdata.ndim != 3 or cdata.shape[-1] != 2 or cdata.shape[0] != fdata.shape[0]:
        raise GeometryError(
            f"point_sample: frames {frames.shape} incompatible with coords {coords.shape}")
    b, h, w = fdata.shape
    inner = cdata.shape[1:-1]
    flat_coords = cdata.reshape(b, -1, 2)
    vals, ctx = _bilinear_forward(fdata, flat_coords)
    x0, x1, y0, y1, wx, wy, f00, f01, f10, f11, in_x, in_y = ctx
    out = vals.reshape(cdata.shape[:-1] if not squeeze else inner)

    def backward(g):
        gf = g.reshape(b, -1)
        if coords.requires_grad:
            dx = ((1 - wy) * (f01 - f00) + wy * (f11 - f10)) * in_x
            dy = ((1 - wx) * (f10 - f00) + wx * (f11 - f01)) * in_y
            gc = np.stack([gf * dx, gf * dy], axis=-1).reshape(cdata.shape)
            coords._accumulate(gc[0] if squeeze else gc)
        if frames.requires_grad:
            dflat = np.zeros((b, h * w), dtype=fdata.dtype)
            bi = np.repeat(np.arange(b), gf.shape[1])
            w00 = (gf * (1 - wy) * (1 - wx)).reshape(-1)
            w01 = (gf * (1 - wy) * wx).reshape(-1)
            w10 = (gf * wy * (1 - wx)).reshape(-1)
            w11 = (gf * wy * wx).reshape(-1)
            np.add.at(dflat, (bi, (y0 * w + x0).reshape(-1)), w00)
            np.add.at(dflat, (bi, (y0 * w + x1).reshape(-1)), w01)
            np.add.at(dflat, (bi, (y1 * w + x0).reshape(-1)), w10)
            np.add.at(dflat, (bi, (y1 * w + x1).reshape(-1)), w11)
            df = dflat.reshape(b, h, w)
            frames._accumulate(df[0] if squeeze else df)

    return _make(out, (frames, coords), backward)
