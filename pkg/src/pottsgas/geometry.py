"""Multiscale lattice geometry: boxes, cube partitions, boundaries, averaging.

Space is partitioned, for every mesh ``ell``, into half-open cubes
``C_x = [x*ell, x*ell + ell)`` indexed by integer vectors ``x``.  All
coarse-graining in the package (density fields, phase labels, contour
supports) lives on these partitions.  Two cells are *connected* when their
closures intersect, i.e. the index vectors differ by at most 1 in every
coordinate (Moore adjacency, corner contact counts).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Box",
    "CellSet",
    "DensityField",
    "cell_of",
    "moore_neighbors",
    "connected_components",
    "delta_out",
    "delta_in",
    "block_average",
    "block_average_field",
]

_DIV_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-aligned simulation box, periodic or with external conditions.

    Side lengths must be exact multiples of every mesh used against the box;
    this is checked on each call that takes a mesh.
    """

    sides: tuple
    periodic: bool = True

    def __post_init__(self):
        sides = tuple(float(s) for s in self.sides)
        object.__setattr__(self, "sides", sides)
        if self.d not in (2, 3):
            raise ValueError(f"only d=2 and d=3 are supported, got d={self.d}")
        if any(s <= 0 for s in sides):
            raise ValueError("box sides must be positive")

    @property
    def d(self) -> int:
        return len(self.sides)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def ncells(self, mesh: float) -> tuple:
        """Number of mesh-cells per axis; mesh must divide every side."""
        if mesh <= 0:
            raise ValueError("mesh must be positive")
        counts = []
        for s in self.sides:
            n = s / mesh
            if abs(n - round(n)) > _DIV_TOL * max(1.0, n):
                raise ValueError(f"mesh {mesh} does not divide box side {s}")
            counts.append(int(round(n)))
        return tuple(counts)

    def wrap_point(self, r):
        """Map a point into [0, L) per axis (periodic boxes only)."""
        r = np.asarray(r, dtype=float)
        L = np.asarray(self.sides)
        return np.mod(r, L)

    def wrap_cell(self, x, mesh: float):
        n = self.ncells(mesh)
        return tuple(int(np.mod(xi, ni)) for xi, ni in zip(x, n))


@dataclass(frozen=True)
class CellSet:
    """A finite set of cells, all at one mesh."""

    mesh: float
    cells: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "cells", frozenset(tuple(int(c) for c in x)
                                                    for x in self.cells))

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __contains__(self, x):
        return tuple(x) in self.cells

    def union(self, other: "CellSet") -> "CellSet":
        self._check_mesh(other)
        return CellSet(self.mesh, self.cells | other.cells)

    def difference(self, other: "CellSet") -> "CellSet":
        self._check_mesh(other)
        return CellSet(self.mesh, self.cells - other.cells)

    def intersection(self, other: "CellSet") -> "CellSet":
        self._check_mesh(other)
        return CellSet(self.mesh, self.cells & other.cells)

    def issubset(self, other: "CellSet") -> bool:
        self._check_mesh(other)
        return self.cells <= other.cells

    def _check_mesh(self, other):
        if not math.isclose(self.mesh, other.mesh, rel_tol=1e-12):
            raise ValueError("cell sets have different meshes")

    def volume(self, d: int) -> float:
        return len(self.cells) * self.mesh ** d

    def to_json(self) -> str:
        cells = sorted(self.cells)
        return json.dumps({"mesh": self.mesh, "cells": [list(c) for c in cells]})

    @staticmethod
    def from_json(text: str) -> "CellSet":
        obj = json.loads(text)
        return CellSet(float(obj["mesh"]), frozenset(tuple(c) for c in obj["cells"]))


def cell_of(r, mesh: float, box: Box | None = None) -> tuple:
    """Index of the half-open cube containing the point ``r``.

    With a periodic box the point is wrapped first.  For a non-periodic box
    a point outside raises ValueError.
    """
    if mesh <= 0:
        raise ValueError("mesh must be positive")
    r = np.asarray(r, dtype=float)
    if box is not None:
        if box.periodic:
            r = box.wrap_point(r)
        else:
            L = np.asarray(box.sides)
            if np.any(r < 0) or np.any(r >= L):
                raise ValueError(f"point {tuple(r)} outside non-periodic box")
    return tuple(int(np.floor(ri / mesh)) for ri in r)


def moore_neighbors(x, box: Box | None = None, mesh: float | None = None):
    """The 3^d - 1 cells whose closures touch cell ``x``."""
    d = len(x)
    out = []
    for off in itertools.product((-1, 0, 1), repeat=d):
        if all(o == 0 for o in off):
            continue
        y = tuple(xi + oi for xi, oi in zip(x, off))
        if box is not None and box.periodic:
            y = box.wrap_cell(y, mesh)
        out.append(y)
    return out


def connected_components(A: CellSet, box: Box | None = None) -> list:
    """Maximal Moore-connected components of ``A``, deterministic order.

    Components are sorted by their lexicographically smallest cell.  Periodic
    wrapping is honored when a periodic box is given.
    """
    remaining = set(A.cells)
    comps = []
    while remaining:
        seed = min(remaining)
        stack = [seed]
        remaining.discard(seed)
        comp = {seed}
        while stack:
            x = stack.pop()
            for y in moore_neighbors(x, box, A.mesh):
                if y in remaining:
                    remaining.discard(y)
                    comp.add(y)
                    stack.append(y)
        comps.append(CellSet(A.mesh, frozenset(comp)))
    comps.sort(key=lambda c: min(c.cells))
    return comps


def delta_out(A: CellSet, box: Box | None = None) -> CellSet:
    """Cells of the complement Moore-connected to ``A``.

    On a periodic box the complement is taken inside the torus; otherwise in
    the full integer lattice.
    """
    ring = set()
    for x in A.cells:
        for y in moore_neighbors(x, box, A.mesh):
            if y not in A.cells:
                ring.add(y)
    return CellSet(A.mesh, frozenset(ring))


def delta_in(A: CellSet, box: Box | None = None) -> CellSet:
    """Cells of ``A`` Moore-connected to the complement."""
    inner = set()
    if box is not None and box.periodic:
        n = box.ncells(A.mesh)
        full = int(np.prod(n))
        if len(A.cells) == full:
            return CellSet(A.mesh, frozenset())
    for x in A.cells:
        for y in moore_neighbors(x, box, A.mesh):
            if y not in A.cells:
                inner.add(x)
                break
    return CellSet(A.mesh, frozenset(inner))


@dataclass
class DensityField:
    """Nonnegative per-species density, constant on cells of one mesh.

    ``values`` has shape ``(*ncells, S)``.  ``origin`` shifts the index
    window, which lets external-condition geometries carry a collar of cells
    outside the box proper (negative indices).
    """

    box: Box
    mesh: float
    values: np.ndarray
    origin: tuple = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.origin is None:
            self.origin = (0,) * self.box.d
        if self.values.ndim != self.box.d + 1:
            raise ValueError("values must have shape (*ncells, S)")
        if np.any(self.values < 0):
            raise ValueError("densities must be nonnegative")

    @property
    def S(self) -> int:
        return self.values.shape[-1]

    @property
    def shape(self):
        return self.values.shape[:-1]

    def index_of(self, cell) -> tuple:
        return tuple(c - o for c, o in zip(cell, self.origin))

    def at(self, cell) -> np.ndarray:
        return self.values[self.index_of(cell)]

    @staticmethod
    def constant(box: Box, mesh: float, rho, origin=None, shape=None) -> "DensityField":
        rho = np.asarray(rho, dtype=float)
        if shape is None:
            shape = box.ncells(mesh)
        vals = np.broadcast_to(rho, shape + (rho.size,)).copy()
        return DensityField(box, mesh, vals, origin)

    def total_per_species(self) -> np.ndarray:
        """Particle count per species implied by the field (density * volume)."""
        cellvol = self.mesh ** self.box.d
        return self.values.reshape(-1, self.S).sum(axis=0) * cellvol


def block_average(positions, spins, S: int, mesh: float, box: Box) -> DensityField:
    """Empirical density of a particle configuration on the mesh partition.

    Per cell and species: (number of particles in the cell) / mesh^d.
    """
    n = box.ncells(mesh)
    vals = np.zeros(n + (S,), dtype=float)
    positions = np.asarray(positions, dtype=float).reshape(-1, box.d)
    spins = np.asarray(spins, dtype=int).reshape(-1)
    if positions.shape[0] != spins.shape[0]:
        raise ValueError("positions and spins disagree in length")
    if positions.size:
        if box.periodic:
            positions = box.wrap_point(positions)
        idx = np.floor(positions / mesh).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(n)):
            raise ValueError("particle outside box")
        if np.any(spins < 1) or np.any(spins > S):
            raise ValueError("spin out of range")
        flat = np.ravel_multi_index(tuple(idx.T), n)
        lin = flat * S + (spins - 1)
        counts = np.bincount(lin, minlength=int(np.prod(n)) * S)
        vals = counts.reshape(n + (S,)).astype(float)
    return DensityField(box, mesh, vals / mesh ** box.d)


def block_average_field(f: DensityField, mesh: float) -> DensityField:
    """Average a field onto a coarser mesh (arithmetic mean of fine cells).

    The source mesh must divide the target mesh, and the field window must
    tile into coarse cells exactly (origin on a coarse-cell boundary).
    """
    ratio = mesh / f.mesh
    if abs(ratio - round(ratio)) > _DIV_TOL * max(1.0, ratio):
        raise ValueError(f"source mesh {f.mesh} does not divide target {mesh}")
    m = int(round(ratio))
    if m == 1:
        return DensityField(f.box, mesh, f.values.copy(), f.origin)
    if any(o % m for o in f.origin) or any(s % m for s in f.shape):
        raise ValueError("field window is not alignable with the coarser mesh")
    d = f.box.d
    vals = f.values
    new_shape = []
    for ax in range(d):
        new_shape.extend([vals.shape[ax] // m, m])
    new_shape.append(f.S)
    vals = vals.reshape(new_shape)
    # average over the per-axis block dimensions (odd positions)
    vals = vals.mean(axis=tuple(range(1, 2 * d, 2)))
    origin = tuple(o // m for o in f.origin)
    return DensityField(f.box, mesh, vals, origin)
