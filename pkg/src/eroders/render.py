"""Plain-PGM rendering of space-time diagrams."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .noise import NoisyTrajectory
from .rule import RuleError

MAXVAL = 255


def pixels(grid: np.ndarray, m: int) -> np.ndarray:
    """Grey levels floor(255 * state / m); row 0 is time 0."""
    if m < 1:
        raise RuleError("rendering needs at least two states")
    return (np.asarray(grid, dtype=np.int64) * MAXVAL) // m


def to_pgm(image: np.ndarray) -> str:
    height, width = image.shape
    lines = ["P2", f"{width} {height}", str(MAXVAL)]
    lines.extend(" ".join(map(str, row)) for row in image.tolist())
    return "\n".join(lines) + "\n"


def render(traj: NoisyTrajectory, m: int, marks: Iterable[tuple[int, int]] = ()) -> str:
    """PGM of a trajectory; ``marks`` are absolute (coordinate, time) cells drawn at 255."""
    image = pixels(traj.grid, m)
    for i, t in marks:
        col = i - traj.lo
        if 0 <= t < image.shape[0] and 0 <= col < image.shape[1]:
            image[t, col] = MAXVAL
    return to_pgm(image)


def parse_pgm(text: str) -> np.ndarray:
    """Read back a plain PGM written by :func:`to_pgm`."""
    tokens = text.split()
    if not tokens or tokens[0] != "P2":
        raise RuleError("not a plain PGM (missing P2)")
    width, height, maxval = map(int, tokens[1:4])
    values = np.array(tokens[4:], dtype=np.int64)
    if values.size != width * height or maxval != MAXVAL:
        raise RuleError("PGM size or maxval mismatch")
    return values.reshape(height, width)
