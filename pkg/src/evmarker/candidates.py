"""Pairing of age-corrected on/off segments into marker candidates.

A moving marker shows its leading border as a line of off events and its
trailing border as a line of on events, so a candidate is an (on, off)
segment pair whose geometry is consistent with two opposite edges of one
square: comparable lengths, nearly parallel, and overlapping when projected
onto each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .segments import LineSegment

MAX_PAIR_ANGLE = math.pi / 6.0
DEFAULT_CANDIDATE_CAP = 64


@dataclass(frozen=True)
class Candidate:
    """An (on-segment, off-segment) marker hypothesis."""

    on_seg: LineSegment
    off_seg: LineSegment


def min_angle(l1: LineSegment, l2: LineSegment) -> float:
    """Angle between the undirected segment directions, in [0, pi/2]."""
    d1 = l1.direction
    d2 = l2.direction
    dot = abs(d1[0] * d2[0] + d1[1] * d2[1])
    return math.acos(min(dot, 1.0))


def project(l1: LineSegment, l2: LineSegment) -> bool:
    """True iff an endpoint of ``l2`` projects onto the span of ``l1``.

    The scalar projection of ``l2.p1 - l1.p1`` (or ``l2.p2 - l1.p1``) onto the
    unit direction of ``l1`` must land inside [0, length(l1)].
    """
    dx, dy = l1.direction
    length = l1.length
    for px, py in (l2.p1, l2.p2):
        s = (px - l1.p1[0]) * dx + (py - l1.p1[1]) * dy
        if 0.0 <= s <= length:
            return True
    return False


def compatible(on_seg: LineSegment, off_seg: LineSegment) -> bool:
    """All four pairing constraints, exactly as used by :func:`form_candidates`."""
    if on_seg.length == 0.0 or off_seg.length == 0.0:
        return False
    if not on_seg.length < 2.0 * off_seg.length:
        return False
    if not off_seg.length < 2.0 * on_seg.length:
        return False
    if not (project(on_seg, off_seg) or project(off_seg, on_seg)):
        return False
    return min_angle(on_seg, off_seg) <= MAX_PAIR_ANGLE


def form_candidates(
    on_segments: list[LineSegment],
    off_segments: list[LineSegment],
    cap: int | None = DEFAULT_CANDIDATE_CAP,
) -> list[Candidate]:
    """All compatible (on, off) pairs, in stable (on index, off index) order.

    ``cap`` bounds the unwarping cost on pathological packets; when it binds,
    the pairs with the smallest inter-segment angle are kept.
    """
    pairs = [
        (i, j, min_angle(a, b))
        for i, a in enumerate(on_segments)
        for j, b in enumerate(off_segments)
        if compatible(a, b)
    ]
    if cap is not None and len(pairs) > cap:
        pairs = sorted(pairs, key=lambda p: (p[2], p[0], p[1]))[:cap]
        pairs.sort(key=lambda p: (p[0], p[1]))
    return [Candidate(on_segments[i], off_segments[j]) for i, j, _ in pairs]
