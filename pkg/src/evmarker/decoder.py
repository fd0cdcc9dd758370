"""Candidate decoding: unwarp to the canonical square, read cells, look up the code.

The candidate quadrilateral (off edge left, on edge right, as if the marker
always moved leftward) is mapped to an ``s_c`` by ``s_c`` square. Event mass
is then measured with a Gaussian probe at the left edge of every grid cell:
on events there mean the cell to the left was black and this one is white,
off events the reverse, which a row-wise recurrence seeded by the black
border turns into the cell colors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .candidates import Candidate
from .dictionary import MarkerDictionary, lookup
from .event_image import NormImage
from .events import Polarity
from .segments import DEFAULT_MIN_LENGTH

DEFAULT_SQUARE_SIZE = 160
DEFAULT_CELL_SIZE = 20
DEFAULT_DECODE_SIGMA = 3.35
DEFAULT_THRESHOLD = 0.55
HOMOGRAPHY_TOL = 1e-9


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so the bottom-right entry is 1."""

    matrix: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones((*pts.shape[:-1], 1))
        hom = np.concatenate([pts, ones], axis=-1) @ self.matrix.T
        return hom[..., :2] / hom[..., 2:3]

    def inverse(self) -> "Homography":
        inv = np.linalg.inv(self.matrix)
        if inv[2, 2] != 0.0:
            inv = inv / inv[2, 2]
        return Homography(inv)


@dataclass(frozen=True)
class UnwarpedImage:
    """Candidate resampled to the canonical square, with validity mask."""

    values: np.ndarray
    valid: np.ndarray
    polarity: Polarity


@dataclass(frozen=True)
class Detection:
    """A decoded marker: id, rotation, image-space corners, packet mid-time.

    Corners start at the marker's canonical top-left corner and proceed
    clockwise in image coordinates.
    """

    marker_id: int
    rotation: int
    corners: np.ndarray
    t_mid: int


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _is_convex(poly: np.ndarray) -> bool:
    d = np.roll(poly, -1, axis=0) - poly
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    return bool(np.all(cross > 0.0) or np.all(cross < 0.0))


def order_corners(
    cand: Candidate, square_size: int = DEFAULT_SQUARE_SIZE, min_length: float = DEFAULT_MIN_LENGTH
) -> tuple[np.ndarray, np.ndarray] | None:
    """Source corners of the candidate and their destinations in the square.

    Off endpoints map to the square's left edge, on endpoints to the right
    edge. Endpoints are ordered along the segments' shared axis, with the
    ordering sign chosen to preserve orientation: the map must be a rotation
    of the marker, never a mirror image, or the code could not match a
    rotation-indexed dictionary. Rejects non-convex or too-small quads.
    """
    off, on = cand.off_seg, cand.on_seg
    d_off = np.array(off.direction)
    d_on = np.array(on.direction)
    if d_off @ d_on < 0.0:
        d_on = -d_on
    axis = d_off + d_on
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        return None
    axis /= norm

    def ordered(seg):
        pts = np.array([seg.p1, seg.p2], dtype=np.float64)
        return pts if pts[0] @ axis <= pts[1] @ axis else pts[::-1]

    off_pts = ordered(off)
    on_pts = ordered(on)
    # polygon off_a -> off_b -> on_b -> on_a must wind like the destination
    # square (negative here); flipping the shared axis flips the winding
    poly = np.array([off_pts[0], off_pts[1], on_pts[1], on_pts[0]])
    if _signed_area(poly) > 0.0:
        off_pts, on_pts = off_pts[::-1], on_pts[::-1]
        poly = np.array([off_pts[0], off_pts[1], on_pts[1], on_pts[0]])
    if not _is_convex(poly):
        return None
    if abs(_signed_area(poly)) < min_length * min_length / 2.0:
        return None
    s = float(square_size - 1)
    src = np.array([off_pts[0], off_pts[1], on_pts[0], on_pts[1]])
    dst = np.array([[0.0, 0.0], [0.0, s], [s, 0.0], [s, s]])
    return src, dst


def compute_homography(src: np.ndarray, dst: np.ndarray) -> Homography | None:
    """Direct linear transform from 4 point correspondences.

    Solves the 8x8 system with the bottom-right entry fixed to 1 and rejects
    degenerate configurations (collinear points, non-finite solutions, or a
    reprojection residual above 1e-9 px).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for k in range(4):
        x, y = src[k]
        u, v = dst[k]
        a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u]
        a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v]
        b[2 * k] = u
        b[2 * k + 1] = v
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(h)):
        return None
    hom = Homography(np.append(h, 1.0).reshape(3, 3))
    residual = np.abs(hom.apply(src) - dst).max()
    if not residual < HOMOGRAPHY_TOL:
        return None
    return hom


def unwarp(norm: NormImage, hom: Homography, square_size: int = DEFAULT_SQUARE_SIZE) -> UnwarpedImage:
    """Inverse-map the square through the homography with mask-aware bilinear sampling.

    Each destination pixel samples the four source neighbors of its preimage;
    only valid in-bounds neighbors contribute, weighted bilinearly, and the
    destination pixel is valid when the contributing weight exceeds 0.5.
    Ignoring invalid neighbors keeps zeros from bleeding into edge values.
    """
    h, w = norm.values.shape
    inv = hom.inverse().matrix
    dst_x, dst_y = np.meshgrid(
        np.arange(square_size, dtype=np.float64), np.arange(square_size, dtype=np.float64)
    )
    denom = inv[2, 0] * dst_x + inv[2, 1] * dst_y + inv[2, 2]
    safe = np.abs(denom) > 1e-12
    denom = np.where(safe, denom, 1.0)
    sx = (inv[0, 0] * dst_x + inv[0, 1] * dst_y + inv[0, 2]) / denom
    sy = (inv[1, 0] * dst_x + inv[1, 1] * dst_y + inv[1, 2]) / denom

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0

    weight_sum = np.zeros_like(sx)
    value_sum = np.zeros_like(sx)
    for dx, dy, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xs = x0 + dx
        ys = y0 + dy
        inb = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h) & safe
        xc = np.clip(xs, 0, w - 1)
        yc = np.clip(ys, 0, h - 1)
        ok = inb & norm.valid[yc, xc]
        weight_sum += np.where(ok, wgt, 0.0)
        value_sum += np.where(ok, wgt * norm.values[yc, xc], 0.0)

    valid = weight_sum > 0.5
    values = np.zeros_like(sx)
    values[valid] = value_sum[valid] / weight_sum[valid]
    return UnwarpedImage(values, valid, norm.polarity)


def _decode_kernel(n_d: int, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.arange(n_d, dtype=np.int64) - n_d // 2
    g = np.exp(-(offsets[None, :] ** 2 + offsets[:, None] ** 2) / (2.0 * sigma * sigma))
    return offsets, g / g.sum()


def _responses_one(img: UnwarpedImage, centers_x: np.ndarray, centers_y: np.ndarray,
                   offsets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    size = img.values.shape[0]
    xs = centers_x[:, None, None] + offsets[None, None, :]
    ys = centers_y[:, None, None] + offsets[None, :, None]
    inb = (xs >= 0) & (xs < size) & (ys >= 0) & (ys < size)
    xc = np.clip(xs, 0, size - 1)
    yc = np.clip(ys, 0, size - 1)
    contrib = np.where(inb & img.valid[yc, xc], img.values[yc, xc], 0.0)
    return (contrib * weights[None]).sum(axis=(1, 2))


def cell_responses(
    u_on: UnwarpedImage,
    u_off: UnwarpedImage,
    n_d: int = DEFAULT_CELL_SIZE,
    sigma_d: float = DEFAULT_DECODE_SIGMA,
    shift: int | None = None,
    shifted: Polarity = Polarity.OFF,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-probed event mass at every cell's left edge, per polarity.

    The unit-sum kernel of side ``n_d`` is centered on the midpoint of each
    cell's left edge; only valid pixels contribute, so an edge without events
    scores 0. One polarity's probes sit ``shift`` px (default ``n_d / 4``)
    further left to absorb the systematic offset between on and off events.
    """
    size = u_on.values.shape[0]
    if size % n_d != 0:
        raise ValueError("square size must be divisible by the cell size")
    n_cells = size // n_d
    if shift is None:
        shift = n_d // 4
    offsets, weights = _decode_kernel(n_d, sigma_d)
    grid = np.arange(n_cells, dtype=np.int64)
    edge_x = grid * n_d
    mid_y = grid * n_d + n_d // 2
    cx = np.repeat(edge_x[None, :], n_cells, axis=0).ravel()
    cy = np.repeat(mid_y[:, None], n_cells, axis=1).ravel()
    out = []
    for img in (u_on, u_off):
        x = cx - shift if img.polarity == shifted else cx
        out.append(_responses_one(img, x, cy, offsets, weights).reshape(n_cells, n_cells))
    return out[0], out[1]


def threshold_responses(responses: np.ndarray, theta: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Binarize responses relative to their maximum: 1 iff r / max >= theta."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must be in (0, 1]")
    r = np.asarray(responses, dtype=np.float64)
    peak = r.max() if r.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(r, dtype=np.uint8)
    return (r / peak >= theta).astype(np.uint8)


def decode_bits(f_on: np.ndarray, f_off: np.ndarray) -> np.ndarray:
    """Turn per-cell transition flags into cell colors, row by row.

    Each row starts at the black border (0). A cell flips the running color
    when the flags agree with a transition of that color: on events at the
    left edge of a cell turn black into white, off events turn white into
    black; otherwise the color carries over.
    """
    f_on = np.asarray(f_on)
    f_off = np.asarray(f_off)
    if f_on.shape != f_off.shape:
        raise ValueError("flag matrices must have the same shape")
    n = f_on.shape[0]
    bits = np.zeros((n, f_on.shape[1]), dtype=np.uint8)
    for i in range(n):
        prev = 0
        for j in range(f_on.shape[1]):
            if (prev == 0 and f_on[i, j] == 1) or (prev == 1 and f_off[i, j] == 1):
                prev = 1 - prev
            bits[i, j] = prev
    return bits


def decode_candidate(
    cand: Candidate,
    norm_on: NormImage,
    norm_off: NormImage,
    dictionary: MarkerDictionary,
    *,
    square_size: int = DEFAULT_SQUARE_SIZE,
    n_d: int = DEFAULT_CELL_SIZE,
    sigma_d: float = DEFAULT_DECODE_SIGMA,
    theta: float = DEFAULT_THRESHOLD,
    shift: int | None = None,
    shifted: Polarity = Polarity.OFF,
    min_length: float = DEFAULT_MIN_LENGTH,
    t_mid: int = 0,
) -> Detection | None:
    """Full decode of one candidate; any failed stage silently rejects it."""
    expected_cells = dictionary.n_m + 2
    if square_size != expected_cells * n_d:
        raise ValueError(
            f"square size {square_size} must equal (n_m + 2) * n_d = {expected_cells * n_d}"
        )
    ordered = order_corners(cand, square_size, min_length)
    if ordered is None:
        return None
    src, dst = ordered
    hom = compute_homography(src, dst)
    if hom is None:
        return None
    u_on = unwarp(norm_on, hom, square_size)
    u_off = unwarp(norm_off, hom, square_size)
    r_on, r_off = cell_responses(u_on, u_off, n_d, sigma_d, shift, shifted)
    f_on = threshold_responses(r_on[1:-1, 1:-1], theta)
    f_off = threshold_responses(r_off[1:-1, 1:-1], theta)
    bits = decode_bits(f_on, f_off)
    hit = lookup(bits, dictionary)
    if hit is None:
        return None
    marker_id, rotation = hit
    # src is (off_top, off_bottom, on_top, on_bottom); clockwise in the
    # unwarped frame that is (top-left, top-right, bottom-right, bottom-left)
    clockwise = np.array([src[0], src[2], src[3], src[1]])
    start = (-rotation // 90) % 4
    corners = np.roll(clockwise, -start, axis=0)
    return Detection(marker_id, rotation, corners, t_mid)
