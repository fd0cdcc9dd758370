"""Per-polarity event rasters: timestamp image, normalization, hole filling, smoothing.

Each stage carries a value raster together with a validity mask. Rasters are
``(H, W)`` float64 arrays indexed ``[y, x]``; masked-out pixels always hold 0
so the images can be fed directly to pixel-based consumers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .events import EventPacket, Polarity


@dataclass(frozen=True)
class TimeImage:
    """Minimum event timestamp per pixel for one polarity.

    ``t_min``/``t_max`` are the extrema of ``values`` over valid pixels. A
    packet without events of the polarity yields the distinguished empty
    image (no valid pixels, ``t_min == t_max == 0``).
    """

    values: np.ndarray
    valid: np.ndarray
    t_min: int
    t_max: int
    polarity: Polarity

    @property
    def is_empty(self) -> bool:
        return not bool(self.valid.any())


@dataclass(frozen=True)
class NormImage:
    """Timestamps normalized to [0, 1]; ``flipped`` records the 1-v variant."""

    values: np.ndarray
    valid: np.ndarray
    flipped: bool
    polarity: Polarity

    @property
    def is_empty(self) -> bool:
        return not bool(self.valid.any())


@dataclass(frozen=True)
class RefinedImage:
    """Hole-filled / despeckled normalized image (mask is the refined set)."""

    values: np.ndarray
    valid: np.ndarray
    polarity: Polarity

    @property
    def is_empty(self) -> bool:
        return not bool(self.valid.any())


@dataclass(frozen=True)
class SmoothImage:
    """Mask-normalized Gaussian blur of a refined image."""

    values: np.ndarray
    valid: np.ndarray
    polarity: Polarity

    @property
    def is_empty(self) -> bool:
        return not bool(self.valid.any())


@dataclass(frozen=True)
class GaussianKernel:
    """Odd, unit-sum, radially symmetric 2D Gaussian tap grid."""

    size: int
    sigma: float
    weights: np.ndarray

    @classmethod
    def make(cls, size: int, sigma: float) -> "GaussianKernel":
        if size <= 0 or size % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {size}")
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        half = size // 2
        ax = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(ax[None, :] ** 2 + ax[:, None] ** 2) / (2.0 * sigma * sigma))
        return cls(size, sigma, g / g.sum())


def build_time_image(packet: EventPacket, polarity: Polarity) -> TimeImage:
    """Rasterize one polarity's events, keeping the earliest timestamp per pixel."""
    h, w = packet.geometry.height, packet.geometry.width
    ev = packet.by_polarity(polarity)
    values = np.zeros((h, w), dtype=np.float64)
    valid = np.zeros((h, w), dtype=np.bool_)
    if len(ev) == 0:
        return TimeImage(values, valid, 0, 0, polarity)
    t = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(t, (ev["y"], ev["x"]), ev["t"])
    valid = t != np.iinfo(np.int64).max
    values[valid] = t[valid]
    vmin = int(values[valid].min())
    vmax = int(values[valid].max())
    return TimeImage(values, valid, vmin, vmax, polarity)


def normalize(img: TimeImage, flip: bool = False) -> NormImage:
    """Map valid timestamps to ``(t - t_min) / (t_max - t_min)``.

    With ``flip`` the valid values become ``1 - v``, which empirically gives
    the segment detector better input. A degenerate packet where all valid
    timestamps coincide maps to 0.5 everywhere (the mid-window age target).
    """
    values = np.zeros_like(img.values)
    if img.is_empty:
        return NormImage(values, img.valid.copy(), flip, img.polarity)
    span = img.t_max - img.t_min
    if span == 0:
        values[img.valid] = 0.5
    else:
        values[img.valid] = (img.values[img.valid] - img.t_min) / span
    if flip:
        values[img.valid] = 1.0 - values[img.valid]
    return NormImage(values, img.valid.copy(), flip, img.polarity)


def _neighbor_stats(valid: np.ndarray, values: np.ndarray):
    """Per-pixel count/size/value-sum over the 8-neighborhood clipped to the image."""
    kernel = np.ones((3, 3), dtype=np.float64)
    kernel[1, 1] = 0.0
    n_valid = ndimage.convolve(valid.astype(np.float64), kernel, mode="constant", cval=0.0)
    n_total = ndimage.convolve(np.ones_like(values), kernel, mode="constant", cval=0.0)
    v_sum = ndimage.convolve(np.where(valid, values, 0.0), kernel, mode="constant", cval=0.0)
    return n_valid, n_total, v_sum


def refine(img: NormImage) -> RefinedImage:
    """Fill holes and drop speckles based on 8-neighborhood majorities.

    An invalid pixel whose valid neighbors are a strict majority of its
    (border-clipped) neighborhood is filled with their mean; a valid pixel
    whose invalid neighbors are a strict majority is zeroed and invalidated.
    Both sets are decided on the input mask, then applied at once.
    """
    n_valid, n_total, v_sum = _neighbor_stats(img.valid, img.values)
    fill = (~img.valid) & (n_valid > n_total / 2.0)
    drop = img.valid & ((n_total - n_valid) > n_total / 2.0)
    values = img.values.copy()
    values[fill] = v_sum[fill] / n_valid[fill]
    values[drop] = 0.0
    valid = (img.valid | fill) & ~drop
    values[~valid] = 0.0
    return RefinedImage(values, valid, img.polarity)


def smooth(img: RefinedImage, kernel: GaussianKernel) -> SmoothImage:
    """Normalized convolution: blur values and mask separately, then divide.

    Dividing by the blurred mask removes the pull toward zero that invalid
    pixels would otherwise exert; a fully valid image reduces to a plain
    Gaussian blur. Convolution is zero-padded, consistent with the mask
    being zero outside the sensor.
    """
    h, w = img.values.shape
    if kernel.size > min(h, w):
        raise ValueError("kernel larger than image")
    mask = img.valid.astype(np.float64)
    num = ndimage.convolve(img.values * mask, kernel.weights, mode="constant", cval=0.0)
    den = ndimage.convolve(mask, kernel.weights, mode="constant", cval=0.0)
    values = np.zeros_like(img.values)
    if img.valid.any():
        assert den[img.valid].min() > 0.0, "valid pixel with zero mask support"
        values[img.valid] = num[img.valid] / den[img.valid]
    return SmoothImage(values, img.valid.copy(), img.polarity)
