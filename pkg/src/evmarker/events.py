"""Core event data types, packetization and background-activity noise filtering.

An event stream is stored as a numpy structured array (``EVENT_DTYPE``) sorted
by timestamp; :class:`EventPacket` groups the events of one fixed time window
together with the sensor geometry. All containers are treated as immutable
after construction so packets can be processed in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a normal dependency
    njit = None

DEFAULT_WINDOW_US = 10_000

EVENT_DTYPE = np.dtype([("t", np.int64), ("x", np.int32), ("y", np.int32), ("p", np.int8)])


class Polarity(IntEnum):
    """Sign of the brightness change an event reports."""

    OFF = 0
    ON = 1


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel resolution of the event sensor."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 8 or self.height < 8:
            raise ValueError(f"sensor must be at least 8x8 pixels, got {self.width}x{self.height}")


def event_array(events: Iterable[tuple[int, int, int, int]]) -> np.ndarray:
    """Build an event array from ``(t_us, x, y, polarity)`` tuples."""
    rows = list(events)
    out = np.zeros(len(rows), dtype=EVENT_DTYPE)
    for i, (t, x, y, p) in enumerate(rows):
        out[i] = (t, x, y, p)
    return out


def empty_events() -> np.ndarray:
    return np.zeros(0, dtype=EVENT_DTYPE)


def validate_stream(events: np.ndarray, geometry: SensorGeometry) -> None:
    """Reject unsorted streams and out-of-range coordinates."""
    if events.dtype != EVENT_DTYPE:
        raise TypeError(f"expected event array with dtype {EVENT_DTYPE}, got {events.dtype}")
    if len(events) == 0:
        return
    dt = np.diff(events["t"])
    if np.any(dt < 0):
        bad = int(np.argmax(dt < 0)) + 1
        raise ValueError(f"event stream is not sorted by timestamp (first violation at index {bad})")
    x, y = events["x"], events["y"]
    if x.min() < 0 or y.min() < 0 or x.max() >= geometry.width or y.max() >= geometry.height:
        raise ValueError("event coordinates outside sensor geometry")
    if events["t"].min() < 0:
        raise ValueError("negative timestamps are not allowed")
    p = events["p"]
    if np.any((p != Polarity.ON) & (p != Polarity.OFF)):
        raise ValueError("event polarity must be 0 (off) or 1 (on)")


@dataclass(frozen=True)
class EventPacket:
    """All events of one fixed time window.

    Invariant: every event satisfies ``t_start <= t < t_end`` and
    ``t_end - t_start`` equals the configured window length.
    """

    events: np.ndarray
    t_start: int
    t_end: int
    geometry: SensorGeometry

    def __post_init__(self) -> None:
        if self.t_end <= self.t_start:
            raise ValueError("packet window must have positive duration")
        if len(self.events) > 0:
            t = self.events["t"]
            if t.min() < self.t_start or t.max() >= self.t_end:
                raise ValueError("packet contains events outside its window")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def t_mid(self) -> int:
        return (self.t_start + self.t_end) // 2

    def by_polarity(self, polarity: Polarity) -> np.ndarray:
        return self.events[self.events["p"] == int(polarity)]


def window_bounds(t_first: int, t_last: int, window_us: int) -> tuple[int, int]:
    """Anchor and packet count for a stream spanning ``[t_first, t_last]``.

    The first window starts at ``t_first`` rounded down to a multiple of the
    window length, which makes packetization reproducible from the file alone.
    """
    anchor = (t_first // window_us) * window_us
    count = (t_last - anchor) // window_us + 1
    return anchor, int(count)


def packetize(
    events: np.ndarray, window_us: int, geometry: SensorGeometry
) -> list[EventPacket]:
    """Split a sorted event stream into contiguous fixed-length packets.

    The windows tile the stream without gaps, so quiet periods between the
    first and last event yield empty packets. Concatenating the packets'
    event arrays reproduces the input exactly.
    """
    if window_us <= 0:
        raise ValueError("window_us must be positive")
    validate_stream(events, geometry)
    if len(events) == 0:
        return []
    t = events["t"]
    anchor, count = window_bounds(int(t[0]), int(t[-1]), window_us)
    edges = anchor + window_us * np.arange(count + 1, dtype=np.int64)
    splits = np.searchsorted(t, edges[1:-1], side="left")
    chunks = np.split(events, splits)
    return [
        EventPacket(chunk, int(edges[i]), int(edges[i + 1]), geometry)
        for i, chunk in enumerate(chunks)
    ]


def _noise_filter_python(
    t: np.ndarray, x: np.ndarray, y: np.ndarray,
    width: int, height: int, radius: int, window_us: int,
) -> np.ndarray:
    # sentinel is "long before any timestamp" but far from int64 min so the
    # subtraction below cannot overflow
    last = np.full((height + 2 * radius, width + 2 * radius), -(2**62), dtype=np.int64)
    keep = np.zeros(len(t), dtype=np.bool_)
    for i in range(len(t)):
        xi = x[i] + radius
        yi = y[i] + radius
        recent = last[yi - radius : yi + radius + 1, xi - radius : xi + radius + 1].max()
        keep[i] = t[i] - recent <= window_us
        last[yi, xi] = t[i]
    return keep


if njit is not None:
    _noise_filter_kernel = njit(cache=True)(_noise_filter_python)
else:  # pragma: no cover
    _noise_filter_kernel = _noise_filter_python


def noise_filter(
    packet: EventPacket, support_radius: int = 1, support_window_us: int = 2000
) -> EventPacket:
    """Drop events without recent spatiotemporal support.

    An event survives iff some earlier event (any polarity) occurred within
    Chebyshev distance ``support_radius`` during the preceding
    ``support_window_us``. Earlier means earlier in stream order, so among
    equal timestamps the first event can support the later ones but not the
    other way round. Output order is preserved and the result is always a
    subset of the input.
    """
    if support_radius < 0 or support_window_us < 0:
        raise ValueError("noise filter parameters must be non-negative")
    ev = packet.events
    if len(ev) == 0:
        return packet
    keep = _noise_filter_kernel(
        ev["t"].astype(np.int64),
        ev["x"].astype(np.int64),
        ev["y"].astype(np.int64),
        packet.geometry.width,
        packet.geometry.height,
        support_radius,
        support_window_us,
    )
    return EventPacket(ev[keep], packet.t_start, packet.t_end, packet.geometry)
