"""Marker code dictionary: bit-grid serialization, rotation lookup, rendering.

A marker code is the row-major, MSB-first concatenation of its inner cell
grid (row 0 first, leftmost cell most significant). Dictionaries are closed
against rotation collisions: no entry is a rotation of another entry, so a
lookup over the four rotations is unambiguous.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

BUILTIN_DICT_RESOURCE = "dict16_6x6.txt"


def bits_to_code(bits: np.ndarray) -> int:
    """Pack a binary grid into an integer, row-major, MSB first."""
    code = 0
    for bit in np.asarray(bits, dtype=np.uint8).ravel():
        code = (code << 1) | int(bit)
    return code


def code_to_bits(code: int, n: int) -> np.ndarray:
    """Unpack an ``n*n``-bit code into an ``(n, n)`` binary grid."""
    flat = [(code >> (n * n - 1 - i)) & 1 for i in range(n * n)]
    return np.array(flat, dtype=np.uint8).reshape(n, n)


def rotate_grid(bits: np.ndarray) -> np.ndarray:
    """Rotate a square grid 90 degrees clockwise."""
    b = np.asarray(bits)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError("grid must be square")
    return np.rot90(b, k=-1).copy()


def _rotation_codes(code: int, n: int) -> list[int]:
    bits = code_to_bits(code, n)
    out = []
    for _ in range(4):
        out.append(bits_to_code(bits))
        bits = rotate_grid(bits)
    return out


def orbit_distance(a: int, b: int, n: int) -> int:
    """Minimum Hamming distance between ``a`` and any rotation of ``b``."""
    return min((a ^ r).bit_count() for r in _rotation_codes(b, n))


@dataclass(frozen=True)
class MarkerDictionary:
    """Ordered list of marker codes with a rotation-aware lookup index."""

    name: str
    n_m: int
    codes: tuple[int, ...]
    _index: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_m < 2:
            raise ValueError("code grid side must be at least 2")
        if len(self.codes) == 0:
            raise ValueError("dictionary must hold at least one code")
        limit = 1 << (self.n_m * self.n_m)
        index: dict[int, int] = {}
        seen_orbits: dict[int, int] = {}
        for marker_id, code in enumerate(self.codes):
            if not 0 <= code < limit:
                raise ValueError(f"code {code:#x} does not fit a {self.n_m}x{self.n_m} grid")
            for rotated in _rotation_codes(code, self.n_m):
                if seen_orbits.get(rotated, marker_id) != marker_id:
                    raise ValueError(
                        f"codes {seen_orbits[rotated]} and {marker_id} collide under rotation"
                    )
                seen_orbits[rotated] = marker_id
            index[code] = marker_id
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.codes)

    def lookup_code(self, code: int) -> int | None:
        return self._index.get(code)


def lookup(bits: np.ndarray, dictionary: MarkerDictionary) -> tuple[int, int] | None:
    """Find ``bits`` in the dictionary, trying rotations 0/90/180/270 in order.

    Returns ``(marker_id, rotation_degrees)`` where rotation is the number of
    clockwise quarter turns that map the observed grid onto the stored entry.
    A miss returns ``None`` and is a normal outcome, not an error.
    """
    b = np.asarray(bits)
    if b.shape != (dictionary.n_m, dictionary.n_m):
        raise ValueError(f"grid shape {b.shape} does not match dictionary side {dictionary.n_m}")
    for k in range(4):
        marker_id = dictionary.lookup_code(bits_to_code(b))
        if marker_id is not None:
            return marker_id, k * 90
        b = rotate_grid(b)
    return None


def render_marker(marker_id: int, dictionary: MarkerDictionary, cell_px: int = 1) -> np.ndarray:
    """Render a dictionary marker as a binary image (1 = white).

    The output is ``(n_m + 2) * cell_px`` square: a one-cell black border ring
    around the code grid, matching the printed marker layout.
    """
    if not 0 <= marker_id < len(dictionary):
        raise ValueError(f"marker id {marker_id} not in dictionary of size {len(dictionary)}")
    if cell_px < 1:
        raise ValueError("cell_px must be positive")
    n = dictionary.n_m
    grid = np.zeros((n + 2, n + 2), dtype=np.uint8)
    grid[1:-1, 1:-1] = code_to_bits(dictionary.codes[marker_id], n)
    return np.kron(grid, np.ones((cell_px, cell_px), dtype=np.uint8))


def save_dictionary(dictionary: MarkerDictionary, path: str | Path) -> None:
    """Write the text format: first line ``N_m <n>``, then one hex code per line."""
    lines = [f"N_m {dictionary.n_m}"]
    lines += [f"{code:x}" for code in dictionary.codes]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_dictionary(text: str, name: str) -> MarkerDictionary:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("N_m"):
        raise ValueError("dictionary file must start with an 'N_m <n>' line")
    try:
        n_m = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed dictionary header: {lines[0]!r}") from exc
    codes = tuple(int(ln, 16) for ln in lines[1:])
    return MarkerDictionary(name, n_m, codes)


def load_dictionary(path: str | Path) -> MarkerDictionary:
    p = Path(path)
    return _parse_dictionary(p.read_text(), p.stem)


def builtin_dictionary() -> MarkerDictionary:
    """The 16-entry 6x6 dictionary shipped with the package."""
    text = resources.files("evmarker.data").joinpath(BUILTIN_DICT_RESOURCE).read_text()
    return _parse_dictionary(text, "builtin16")


def generate_dictionary(
    count: int, n_m: int = 6, seed: int = 0, min_distance: int = 10, name: str = "generated"
) -> MarkerDictionary:
    """Rejection-sample codes with pairwise rotation-orbit distance >= ``min_distance``.

    Self-rotations are held to the same distance so a noisy grid cannot match
    one entry under two different rotations.
    """
    if min_distance > n_m * n_m:
        raise ValueError("min_distance exceeds the number of code bits")
    rng = random.Random(seed)
    accepted: list[int] = []
    attempts = 0
    while len(accepted) < count:
        attempts += 1
        if attempts > 1_000_000:
            raise RuntimeError("dictionary generation did not converge; relax the constraints")
        cand = rng.getrandbits(n_m * n_m)
        self_rots = _rotation_codes(cand, n_m)[1:]
        if min(((cand ^ r).bit_count() for r in self_rots), default=min_distance) < min_distance:
            continue
        if any(orbit_distance(cand, a, n_m) < min_distance for a in accepted):
            continue
        accepted.append(cand)
    return MarkerDictionary(name, n_m, tuple(accepted))
