"""Line segment detection on smoothed event images, plus age correction.

A segment's *age* is the mean normalized timestamp of the valid pixels under
it: 0 means the segment lies on the oldest events of the window, 1 on the
newest. Marker edges move during the window, so detected segments are slid
along their normal until their age is the mid-window value 0.5, which aligns
the on and off edges of a candidate to the same instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import cv2
import numpy as np

from .event_image import NormImage, SmoothImage
from .events import Polarity

DEFAULT_MIN_LENGTH = 25.0
DEFAULT_MAX_SHIFT = 20.0
MIN_SLOPE = 1e-6


@dataclass(frozen=True)
class LineSegment:
    """Oriented 2D segment in pixel coordinates with polarity and optional age."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    polarity: Polarity
    age: float | None = None

    @property
    def length(self) -> float:
        return math.hypot(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])

    @property
    def direction(self) -> tuple[float, float]:
        """Unit vector from p1 to p2; undefined for degenerate segments."""
        n = self.length
        if n == 0.0:
            raise ValueError("degenerate segment has no direction")
        return ((self.p2[0] - self.p1[0]) / n, (self.p2[1] - self.p1[1]) / n)

    @property
    def normal(self) -> tuple[float, float]:
        """Unit normal, the direction rotated a quarter turn."""
        dy = self.p2[1] - self.p1[1]
        dx = self.p1[0] - self.p2[0]
        n = math.hypot(dy, dx)
        if n == 0.0:
            raise ValueError("degenerate segment has no normal")
        return (dy / n, dx / n)

    def translated(self, offset: float) -> "LineSegment":
        nx, ny = self.normal
        return replace(
            self,
            p1=(self.p1[0] + offset * nx, self.p1[1] + offset * ny),
            p2=(self.p2[0] + offset * nx, self.p2[1] + offset * ny),
        )


_LSD = None


def _lsd():
    global _LSD
    if _LSD is None:
        # canonical LSD defaults (scale 0.8, standard refinement)
        _LSD = cv2.createLineSegmentDetector(cv2.LSD_REFINE_STD, scale=0.8)
    return _LSD


def detect_segments(
    img: SmoothImage, min_length: float = DEFAULT_MIN_LENGTH, polarity: Polarity | None = None
) -> list[LineSegment]:
    """Run the LSD detector on a smoothed event image and filter short segments.

    The image is scaled to 8-bit grayscale; invalid pixels are already zero.
    Only segments of length >= ``min_length`` survive, which discards marker
    edges too small or too distorted to decode.
    """
    if polarity is None:
        polarity = img.polarity
    if img.is_empty:
        return []
    gray = np.clip(np.round(img.values * 255.0), 0, 255).astype(np.uint8)
    lines = _lsd().detect(gray)[0]
    if lines is None:
        return []
    h, w = gray.shape
    out = []
    for x1, y1, x2, y2 in lines.reshape(-1, 4):
        seg = LineSegment(
            (float(np.clip(x1, 0, w - 1)), float(np.clip(y1, 0, h - 1))),
            (float(np.clip(x2, 0, w - 1)), float(np.clip(y2, 0, h - 1))),
            polarity,
        )
        if seg.length >= min_length:
            out.append(seg)
    return out


def segment_pixels(seg: LineSegment) -> np.ndarray:
    """Integer pixels under the segment, stepping along the dominant axis.

    Rounds with floor(v + 0.5) so the rule is stable across platforms, keeps
    both endpoints' pixels and never repeats a pixel. Returns an (n, 2)
    array of (x, y).
    """
    x1, y1 = seg.p1
    x2, y2 = seg.p2
    steps = int(math.floor(max(abs(x2 - x1), abs(y2 - y1)) + 0.5))
    ts = np.linspace(0.0, 1.0, steps + 1)
    xs = np.floor(x1 + ts * (x2 - x1) + 0.5).astype(np.int64)
    ys = np.floor(y1 + ts * (y2 - y1) + 0.5).astype(np.int64)
    pts = np.stack([xs, ys], axis=1)
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    return pts[keep]


def _age_and_support(pixels: np.ndarray, norm: NormImage) -> tuple[float | None, int]:
    """Mean normalized timestamp over valid in-bounds pixels and their count."""
    h, w = norm.values.shape
    xs, ys = pixels[:, 0], pixels[:, 1]
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    if not inside.any():
        return None, 0
    xs, ys = xs[inside], ys[inside]
    valid = norm.valid[ys, xs]
    count = int(valid.sum())
    if count == 0:
        return None, 0
    return float(norm.values[ys, xs][valid].mean()), count


def segment_age(seg: LineSegment, norm: NormImage) -> float | None:
    """Mean of the unflipped normalized image over the segment's valid pixels.

    ``None`` when no pixel under the segment is valid, which makes the
    segment uncorrectable.
    """
    if norm.flipped:
        raise ValueError("segment age must be measured on the unflipped image")
    age, _ = _age_and_support(segment_pixels(seg), norm)
    return age


def correct_age(
    seg: LineSegment, norm: NormImage, max_shift: float = DEFAULT_MAX_SHIFT
) -> LineSegment | None:
    """Slide a segment along its normal so its age becomes 0.5.

    Walks outward in both directions in 1 px steps while at least half of the
    slid segment's pixels are still valid, collecting (offset, age) samples,
    then fits age = a*offset + b and translates by (0.5 - b) / a. Returns
    ``None`` (segment dropped) when there are fewer than two samples, the
    age has no usable slope, or the required shift exceeds ``max_shift``.
    """
    base_age = segment_age(seg, norm)
    if base_age is None:
        return None
    samples = [(0.0, base_age)]
    # shifts beyond max_shift are rejected below anyway, so the walk can stop
    # there too; this bounds the cost on degenerate wide-support images
    max_steps = int(math.ceil(max_shift))
    for direction in (-1.0, 1.0):
        for step in range(1, max_steps + 1):
            slid = seg.translated(direction * step)
            pixels = segment_pixels(slid)
            age, support = _age_and_support(pixels, norm)
            if support < len(pixels) / 2.0:
                break
            samples.append((direction * step, age))
    if len(samples) < 2:
        return None
    offsets = np.array([s[0] for s in samples])
    ages = np.array([s[1] for s in samples])
    alpha, beta = np.polyfit(offsets, ages, 1)
    if abs(alpha) < MIN_SLOPE:
        return None
    shift = (0.5 - beta) / alpha
    if abs(shift) > max_shift:
        return None
    corrected = seg.translated(float(shift))
    return replace(corrected, age=segment_age(corrected, norm))
