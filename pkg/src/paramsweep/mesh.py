"""Uniform parameter meshes and user-supplied parameter point files.

A mesh is the Cartesian product of per-parameter grids, each axis either
a fixed complex value or an inclusive real range.  Points are ordered
with the FIRST parameter varying fastest; ``index_to_multi`` /
``multi_to_index`` expose the exact bijection so grid-shaped exports can
reshape the flat point list.

Point files are whitespace-separated real/imaginary pairs, one parameter
point per line::

    0.5 0.0   1.0 -1.0      % point (0.5, 1-1j)

Blank lines and lines starting with ``%`` or ``#`` are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Fixed",
    "Range",
    "MeshSpec",
    "PointList",
    "generate_mesh",
    "index_to_multi",
    "multi_to_index",
    "load_param_file",
    "format_param_file",
]


@dataclass(frozen=True)
class Fixed:
    value: complex

    @property
    def count(self) -> int:
        return 1

    def grid(self) -> np.ndarray:
        return np.array([self.value], dtype=complex)


@dataclass(frozen=True)
class Range:
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("range count must be >= 1")
        if self.lo > self.hi:
            raise ValueError(f"range has min {self.lo} > max {self.hi}")

    def grid(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.lo], dtype=complex)
        return np.linspace(self.lo, self.hi, self.count).astype(complex)


@dataclass(frozen=True)
class MeshSpec:
    axes: tuple[Fixed | Range, ...]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(ax.count for ax in self.axes)

    @property
    def size(self) -> int:
        out = 1
        for c in self.counts:
            out *= c
        return out

    @property
    def n_params(self) -> int:
        return len(self.axes)


@dataclass(frozen=True)
class PointList:
    points: tuple[np.ndarray, ...]
    source: str  # "mesh" or "file"
    mesh: MeshSpec | None = None

    def __len__(self) -> int:
        return len(self.points)


def generate_mesh(spec: MeshSpec) -> PointList:
    """Cartesian product of the axis grids, first parameter fastest."""
    grids = [ax.grid() for ax in spec.axes]
    points = []
    for flat in range(spec.size):
        multi = index_to_multi(spec, flat)
        points.append(np.array([grids[j][multi[j]] for j in range(len(grids))]))
    return PointList(points=tuple(points), source="mesh", mesh=spec)


def index_to_multi(spec: MeshSpec, index: int) -> tuple[int, ...]:
    if not (0 <= index < spec.size):
        raise IndexError(f"index {index} out of range for mesh of {spec.size}")
    multi = []
    for c in spec.counts:
        multi.append(index % c)
        index //= c
    return tuple(multi)


def multi_to_index(spec: MeshSpec, multi) -> int:
    if len(multi) != spec.n_params:
        raise IndexError("multi-index has wrong length")
    index = 0
    stride = 1
    for m, c in zip(multi, spec.counts):
        if not (0 <= m < c):
            raise IndexError(f"multi-index {tuple(multi)} out of range")
        index += m * stride
        stride *= c
    return index


def load_param_file(text: str, n_params: int | None = None) -> PointList:
    """Parse whitespace-separated re/im pairs, one point per line."""
    points = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "%#":
            continue
        tokens = line.split()
        if n_params is None:
            if len(tokens) % 2 != 0:
                raise ValueError(
                    f"line {lineno}: expected an even number of values "
                    f"(re/im pairs), got {len(tokens)}"
                )
            n_params = len(tokens) // 2
        if len(tokens) != 2 * n_params:
            raise ValueError(
                f"line {lineno}: expected {2 * n_params} values, got {len(tokens)}"
            )
        try:
            vals = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        points.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    if not points:
        raise ValueError("parameter file contains no points")
    return PointList(points=tuple(points), source="file")


def format_param_file(points) -> str:
    """Inverse of load_param_file (round-trips exactly)."""
    lines = []
    for p in points:
        p = np.asarray(p, dtype=complex)
        lines.append(" ".join(f"{float(c.real)!r} {float(c.imag)!r}" for c in p))
    return "\n".join(lines) + "\n"
