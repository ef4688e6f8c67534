"""Uniform structured meshes with cell-centred discrete calculus.

Grid functions are plain numpy arrays of shape ``grid.shape``; face fields are
tuples holding one array per axis, of length ``n - 1`` along that axis (only
interior faces are stored, boundary faces carry zero flux).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if not (len(lo) == len(hi) == len(n)):
            raise ValueError("lo, hi and n must have the same number of axes")
        if len(n) not in (1, 2, 3):
            raise ValueError(f"unsupported dimension {len(n)}")
        for a in range(len(n)):
            if not hi[a] > lo[a]:
                raise ValueError(f"axis {a}: need hi > lo, got [{lo[a]}, {hi[a]}]")
            if n[a] < 2:
                raise ValueError(f"axis {a}: need at least 2 cells, got {n[a]}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int, dim: int = 1) -> "Grid":
        return cls((lo,) * dim, (hi,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> tuple:
        return tuple((h - l) / n for l, h, n in zip(self.lo, self.hi, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def face_area(self, axis: int) -> float:
        return self.cell_volume / self.spacing[axis]

    @cached_property
    def axes(self) -> tuple:
        """Cell-centre coordinates along each axis."""
        return tuple(l + (np.arange(n) + 0.5) * h for l, n, h in zip(self.lo, self.n, self.spacing))

    @cached_property
    def centers(self) -> tuple:
        """Cell-centre coordinate arrays, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def radius_sq(self) -> np.ndarray:
        return sum(c * c for c in self.centers)

    def face_coordinates(self, axis: int) -> np.ndarray:
        return self.lo[axis] + np.arange(1, self.n[axis]) * self.spacing[axis]

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[axis] = 0
            mask[tuple(sl)] = True
            sl[axis] = -1
            mask[tuple(sl)] = True
        return mask

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.lo, self.hi, tuple(n * factor for n in self.n))

    # discrete calculus

    def face_gradient(self, f: np.ndarray) -> tuple:
        return tuple(np.diff(f, axis=a) / h for a, h in enumerate(self.spacing))

    def face_average(self, f: np.ndarray) -> tuple:
        out = []
        for a in range(self.dim):
            left = np.take(f, np.arange(self.n[a] - 1), axis=a)
            right = np.take(f, np.arange(1, self.n[a]), axis=a)
            out.append(0.5 * (left + right))
        return tuple(out)

    def divergence(self, flux: Sequence[np.ndarray]) -> np.ndarray:
        """Cell divergence of a face flux with zero flux through the boundary."""
        div = np.zeros(self.shape)
        for a, (fa, h) in enumerate(zip(flux, self.spacing)):
            pad = [(0, 0)] * self.dim
            pad[a] = (1, 1)
            div += np.diff(np.pad(fa, pad), axis=a) / h
        return div

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f) * self.cell_volume)

    def face_integral(self, face_values: Sequence[np.ndarray]) -> float:
        """Sum over axes and interior faces of value times the dual cell volume."""
        return float(sum(np.sum(v) for v in face_values) * self.cell_volume)

    def lp_norm(self, f: np.ndarray, p: float) -> float:
        if p == np.inf or p == "inf":
            return float(np.max(np.abs(f))) if np.size(f) else 0.0
        p = float(p)
        if p < 1:
            raise ValueError(f"lp_norm needs p >= 1, got {p}")
        return self.integrate(np.abs(f) ** p) ** (1.0 / p)

    def second_moment(self, f: np.ndarray) -> float:
        return self.integrate(0.5 * self.radius_sq * f)

    def weighted_integral(self, w: np.ndarray, f: np.ndarray) -> float:
        return self.integrate(w * f)

    def restrict(self, f: np.ndarray, factor: int = 2) -> np.ndarray:
        """Average blocks of ``factor**dim`` cells onto the grid coarsened by ``factor``."""
        shape = []
        for n in self.n:
            if n % factor:
                raise ValueError(f"cannot coarsen {n} cells by {factor}")
            shape += [n // factor, factor]
        return f.reshape(shape).mean(axis=tuple(range(1, 2 * self.dim, 2)))

    def metadata(self) -> dict:
        return {
            "dim": self.dim,
            "lo": " ".join(repr(v) for v in self.lo),
            "hi": " ".join(repr(v) for v in self.hi),
            "n": " ".join(str(v) for v in self.n),
        }


def format_float(x: float) -> str:
    return repr(float(x))


def write_snapshot(path, grid: Grid, psi: np.ndarray, phi: np.ndarray, time: float, meta: dict | None = None):
    """Write a field snapshot: one row per cell with coordinates, psi and phi."""
    names = ["x", "y", "z"][: grid.dim]
    buf = io.StringIO()
    buf.write(f"# time = {format_float(time)}\n")
    for k, v in grid.metadata().items():
        buf.write(f"# grid.{k} = {v}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k} = {v}\n")
    buf.write(",".join(names + ["psi", "phi"]) + "\n")
    coords = [c.ravel() for c in grid.centers]
    for i, (p, q) in enumerate(zip(psi.ravel(), phi.ravel())):
        buf.write(",".join([format_float(c[i]) for c in coords] + [format_float(p), format_float(q)]) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_comment_meta(lines) -> dict:
    meta = {}
    for line in lines:
        if line.startswith("#") and "=" in line:
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
    return meta


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns ``(grid, psi, phi, time)``."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta = read_comment_meta(lines)
    grid = Grid(
        tuple(float(v) for v in meta["grid.lo"].split()),
        tuple(float(v) for v in meta["grid.hi"].split()),
        tuple(int(v) for v in meta["grid.n"].split()),
    )
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    header = body[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]])
    psi = data[:, header.index("psi")].reshape(grid.shape)
    phi = data[:, header.index("phi")].reshape(grid.shape)
    return grid, psi, phi, float(meta.get("time", "0"))
