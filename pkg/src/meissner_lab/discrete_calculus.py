"""Staggered grids with exact discrete grad, curl and div.

The grid is always stored as three axes.  A one dimensional slab is the
special case where the two lateral axes are periodic with a single cell, so
every lateral difference vanishes identically and the same sparse operators
serve both geometries.

Positions along an axis come in two flavours: primal points ``P`` (the cell
vertices, ``n + 1`` of them on a wall axis and ``n`` on a periodic one) and
dual points ``D`` (the ``n`` cell midpoints).  Placements are

    NODE     P P P
    EDGE(a)  D along a, P elsewhere
    FACE(a)  P along a, D elsewhere
    CELL     D D D

and every difference maps ``P`` to ``D`` along one axis, so grad, curl and
div are Kronecker products of the same one dimensional stencil and commute
exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridMismatch, InvalidSpec, PlacementMismatch, SolverFailure

AXES = "xyz"


class Placement(str, Enum):
    NODE = "NODE"
    EDGE = "EDGE"
    FACE = "FACE"
    CELL = "CELL"


class BoundaryKind(str, Enum):
    WALL = "WALL"
    PERIODIC = "PERIODIC"


class DiffKind(str, Enum):
    GRAD = "GRAD"
    CURL = "CURL"
    DIV = "DIV"


def axis_types(placement: Placement, comp: int | None = None) -> tuple[str, str, str]:
    """Primal/dual flavour of each axis for a placement component."""
    placement = Placement(placement)
    if placement is Placement.NODE:
        return ("P", "P", "P")
    if placement is Placement.CELL:
        return ("D", "D", "D")
    if comp is None:
        raise PlacementMismatch(f"{placement.value} fields need a component index")
    if placement is Placement.EDGE:
        return tuple("D" if a == comp else "P" for a in range(3))
    return tuple("P" if a == comp else "D" for a in range(3))


def _as_kind(value) -> BoundaryKind:
    try:
        return BoundaryKind(str(value).upper())
    except ValueError as exc:
        raise InvalidSpec(f"unknown boundary kind {value!r}") from exc


@dataclass(frozen=True)
class StaggeredGrid:
    """Axis-aligned box (or slab) with per-axis cell counts and spacings."""

    dims: int
    extents: tuple[int, int, int]
    spacing: tuple[float, float, float]
    boundary: tuple[BoundaryKind, BoundaryKind, BoundaryKind]

    def __post_init__(self):
        if self.dims not in (1, 3):
            raise InvalidSpec("dims must be 1 or 3", field="dims")
        if len(self.extents) != 3 or len(self.spacing) != 3 or len(self.boundary) != 3:
            raise InvalidSpec("extents, spacing and boundary need three entries")
        for a in range(3):
            n, h, kind = self.extents[a], self.spacing[a], self.boundary[a]
            if int(n) != n or n < 1:
                raise InvalidSpec(f"axis {AXES[a]}: cell count must be a positive integer", field="extents")
            if not np.isfinite(h) or h <= 0:
                raise InvalidSpec(f"axis {AXES[a]}: spacing must be positive", field="spacing")
            if kind is BoundaryKind.WALL and n < 2:
                raise InvalidSpec(f"axis {AXES[a]}: a WALL axis needs at least 2 cells", field="extents")
        if self.dims == 1 and (self.extents[0] != 1 or self.extents[1] != 1
                               or self.boundary[0] is not BoundaryKind.PERIODIC
                               or self.boundary[1] is not BoundaryKind.PERIODIC):
            raise InvalidSpec("1D grids use single-cell periodic lateral axes")

    # -- geometry -----------------------------------------------------------
    @property
    def lengths(self) -> tuple[float, float, float]:
        return tuple(n * h for n, h in zip(self.extents, self.spacing))

    @property
    def wall_axes(self) -> tuple[int, ...]:
        return tuple(a for a in range(3) if self.boundary[a] is BoundaryKind.WALL)

    def is_wall(self, axis: int) -> bool:
        return self.boundary[axis] is BoundaryKind.WALL

    def count(self, axis: int, kind: str) -> int:
        n = self.extents[axis]
        return n + 1 if (kind == "P" and self.is_wall(axis)) else n

    def shape(self, placement, comp: int | None = None) -> tuple[int, int, int]:
        t = axis_types(placement, comp)
        return tuple(self.count(a, t[a]) for a in range(3))

    def size(self, placement, comp: int | None = None) -> int:
        return int(np.prod(self.shape(placement, comp)))

    def components(self, placement) -> tuple[int, ...]:
        return (0, 1, 2) if Placement(placement) in (Placement.EDGE, Placement.FACE) else (None,)

    def offsets(self, placement) -> np.ndarray:
        """Start index of each component inside a flattened vector field."""
        sizes = [self.size(placement, c) for c in self.components(placement)]
        return np.concatenate([[0], np.cumsum(sizes)])

    def axis_coords(self, axis: int, kind: str) -> np.ndarray:
        h = self.spacing[axis]
        k = np.arange(self.count(axis, kind), dtype=float)
        return k * h if kind == "P" else (k + 0.5) * h

    def coords(self, placement, comp: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Meshgrid of sample positions for a placement component."""
        t = axis_types(placement, comp)
        return np.meshgrid(*[self.axis_coords(a, t[a]) for a in range(3)], indexing="ij")

    def line(self, placement, comp: int | None = None) -> np.ndarray:
        """Coordinates along the slab axis (1D grids)."""
        return self.axis_coords(2, axis_types(placement, comp)[2])

    # -- one dimensional building blocks -----------------------------------
    def dual_lengths(self, axis: int, kind: str) -> np.ndarray:
        h = self.spacing[axis]
        w = np.full(self.count(axis, kind), h)
        if kind == "P" and self.is_wall(axis):
            w[0] = w[-1] = 0.5 * h
        return w

    def _d1(self, axis: int, weights=(-1.0, 1.0), scale=None) -> sp.csr_matrix:
        """P -> D two point stencil along one axis."""
        n = self.extents[axis]
        rows = np.repeat(np.arange(n), 2)
        left = np.arange(n)
        right = left + 1 if self.is_wall(axis) else (left + 1) % n
        cols = np.column_stack([left, right]).ravel()
        vals = np.tile(np.asarray(weights, dtype=float), n)
        if scale is not None:
            vals = vals * scale
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, self.count(axis, "P")))

    def diff1d(self, axis: int) -> sp.csr_matrix:
        return self._d1(axis, scale=1.0 / self.spacing[axis])

    def down1d(self, axis: int) -> sp.csr_matrix:
        return self._d1(axis, weights=(0.5, 0.5))

    def up1d(self, axis: int, extrapolate: bool = False) -> sp.csr_matrix:
        """D -> P averaging; wall ends copy or linearly extrapolate."""
        n = self.extents[axis]
        if not self.is_wall(axis):
            rows = np.repeat(np.arange(n), 2)
            cols = np.column_stack([(np.arange(n) - 1) % n, np.arange(n)]).ravel()
            return sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n))
        r, c, v = [], [], []
        for i in range(1, n):
            r += [i, i]
            c += [i - 1, i]
            v += [0.5, 0.5]
        if extrapolate and n >= 3:
            # quadratic through the three nearest dual points
            r += [0, 0, 0, n, n, n]
            c += [0, 1, 2, n - 1, n - 2, n - 3]
            v += [1.875, -1.25, 0.375, 1.875, -1.25, 0.375]
        elif extrapolate:
            r += [0, 0, n, n]
            c += [0, 1, n - 1, n - 2]
            v += [1.5, -0.5, 1.5, -0.5]
        else:
            r += [0, n]
            c += [0, n - 1]
            v += [1.0, 1.0]
        return sp.csr_matrix((v, (r, c)), shape=(n + 1, n))

    def _kron(self, mats: Sequence) -> sp.csr_matrix:
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return sp.csr_matrix(out)

    def along(self, axis: int, mat, types: Sequence[str]) -> sp.csr_matrix:
        mats = [mat if b == axis else sp.identity(self.count(b, types[b]), format="csr") for b in range(3)]
        return self._kron(mats)

    # -- global operators ---------------------------------------------------
    @cached_property
    def grad_op(self) -> sp.csr_matrix:
        t = axis_types(Placement.NODE)
        return sp.vstack([self.along(a, self.diff1d(a), t) for a in range(3)], format="csr")

    @cached_property
    def curl_op(self) -> sp.csr_matrix:
        blocks = [[None] * 3 for _ in range(3)]
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            blocks[a][c] = self.along(b, self.diff1d(b), axis_types(Placement.EDGE, c))
            blocks[a][b] = -self.along(c, self.diff1d(c), axis_types(Placement.EDGE, b))
        return sp.bmat(blocks, format="csr")

    @cached_property
    def div_op(self) -> sp.csr_matrix:
        return sp.hstack([self.along(a, self.diff1d(a), axis_types(Placement.FACE, a)) for a in range(3)],
                         format="csr")

    def mass(self, placement) -> np.ndarray:
        """Dual-cell volumes, flattened in field order."""
        out = []
        for c in self.components(placement):
            t = axis_types(placement, c)
            w = np.multiply.outer(np.multiply.outer(self.dual_lengths(0, t[0]), self.dual_lengths(1, t[1])),
                                  self.dual_lengths(2, t[2]))
            out.append(w.ravel())
        return np.concatenate(out)

    @cached_property
    def node_mass(self) -> np.ndarray:
        return self.mass(Placement.NODE)

    @cached_property
    def edge_mass(self) -> np.ndarray:
        return self.mass(Placement.EDGE)

    @cached_property
    def face_mass(self) -> np.ndarray:
        return self.mass(Placement.FACE)

    @cached_property
    def cell_mass(self) -> np.ndarray:
        return self.mass(Placement.CELL)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    # -- boundary bookkeeping ----------------------------------------------
    def _end_mask(self, placement, comp, axes: Iterable[int]) -> np.ndarray:
        shape = self.shape(placement, comp)
        t = axis_types(placement, comp)
        mask = np.zeros(shape, dtype=bool)
        for a in axes:
            if not self.is_wall(a) or t[a] != "P":
                continue
            idx = [slice(None)] * 3
            idx[a] = 0
            mask[tuple(idx)] = True
            idx[a] = -1
            mask[tuple(idx)] = True
        return mask

    @cached_property
    def wall_node_mask(self) -> np.ndarray:
        return self._end_mask(Placement.NODE, None, range(3)).ravel()

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        """Edges lying in a wall plane (the tangential trace)."""
        return np.concatenate([
            self._end_mask(Placement.EDGE, c, [a for a in range(3) if a != c]).ravel() for c in range(3)])

    @cached_property
    def wall_face_mask(self) -> np.ndarray:
        """Faces lying in a wall plane (their value is the normal component)."""
        return np.concatenate([self._end_mask(Placement.FACE, c, [c]).ravel() for c in range(3)])

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edge_mask)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.wall_node_mask)

    # -- interpolation between placements ----------------------------------
    @cached_property
    def node_to_face(self) -> sp.csr_matrix:
        """Average of the nodes surrounding each face."""
        blocks = []
        for a in range(3):
            mats = [sp.identity(self.count(b, "P"), format="csr") if b == a else self.down1d(b) for b in range(3)]
            blocks.append(self._kron(mats))
        return sp.vstack(blocks, format="csr")

    @cached_property
    def face_to_node(self) -> sp.csr_matrix:
        """Per component face-to-node interpolation, summed over components.

        Interior nodes average the neighbouring faces; wall nodes use linear
        extrapolation from the two nearest face layers so that the sample is
        second order accurate on the wall itself.
        """
        blocks = []
        for a in range(3):
            mats = [sp.identity(self.count(b, "P"), format="csr") if b == a else self.up1d(b, extrapolate=True)
                    for b in range(3)]
            blocks.append(self._kron(mats))
        return sp.hstack(blocks, format="csr")

    @cached_property
    def face_cross(self) -> list[list[sp.csr_matrix | None]]:
        """``face_cross[a][b]`` carries FACE(b) values to FACE(a) positions."""
        out = [[None] * 3 for _ in range(3)]
        for a in range(3):
            for b in range(3):
                if a == b:
                    continue
                mats = []
                for c in range(3):
                    if c == a:
                        mats.append(self.up1d(c))
                    elif c == b:
                        mats.append(self.down1d(c))
                    else:
                        mats.append(sp.identity(self.count(c, "D"), format="csr"))
                out[a][b] = self._kron(mats)
        return out

    @cached_property
    def edge_to_node(self) -> sp.csr_matrix:
        blocks = []
        for a in range(3):
            mats = [self.up1d(b) if b == a else sp.identity(self.count(b, "P"), format="csr") for b in range(3)]
            blocks.append(self._kron(mats))
        return sp.bmat([[blk if i == j else None for j, blk in enumerate(blocks)] for i in range(3)], format="csr")

    def face_magnitude_sq(self, w: np.ndarray) -> np.ndarray:
        """|w|^2 at every face: own component plus the others interpolated."""
        offs = self.offsets(Placement.FACE)
        parts = [w[offs[c]:offs[c + 1]] for c in range(3)]
        out = []
        for a in range(3):
            s = parts[a] ** 2
            for b in range(3):
                if b != a:
                    s = s + (self.face_cross[a][b] @ parts[b]) ** 2
            out.append(s)
        return np.concatenate(out)

    def face_magnitude_sq_jac(self, w: np.ndarray) -> sp.csr_matrix:
        """Jacobian of :meth:`face_magnitude_sq` with respect to ``w``."""
        offs = self.offsets(Placement.FACE)
        parts = [w[offs[c]:offs[c + 1]] for c in range(3)]
        rows = []
        for a in range(3):
            row = [None] * 3
            row[a] = sp.diags(2.0 * parts[a])
            for b in range(3):
                if b != a:
                    X = self.face_cross[a][b]
                    row[b] = sp.diags(2.0 * (X @ parts[b])) @ X
            rows.append(row)
        return sp.bmat(rows, format="csr")


def build_grid(dims: int = 3, cells=None, lengths=None, spacing=None, boundary=None) -> StaggeredGrid:
    """Create a grid from a compact description.

    For ``dims=1`` give ``cells`` (int) and either ``lengths`` (the slab width)
    or ``spacing``; ``boundary`` defaults to ``"WALL"`` at both ends.  For
    ``dims=3`` give three cell counts, three lengths or spacings, and three
    boundary kinds.
    """
    if cells is None:
        raise InvalidSpec("cells is required", field="cells")
    if dims == 1:
        n = cells[0] if isinstance(cells, (list, tuple)) else cells
        if isinstance(lengths, (list, tuple)):
            lengths = lengths[0]
        if isinstance(spacing, (list, tuple)):
            spacing = spacing[0]
        if isinstance(boundary, (list, tuple)):
            boundary = boundary[0]
        if spacing is None and lengths is None:
            raise InvalidSpec("need lengths or spacing", field="lengths")
        try:
            n = int(n)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec("cells must be an integer", field="cells") from exc
        if n < 1:
            raise InvalidSpec("cells must be positive", field="cells")
        h = float(spacing) if spacing is not None else float(lengths) / n
        kind = _as_kind(boundary or "WALL")
        return StaggeredGrid(1, (1, 1, n), (1.0, 1.0, h),
                             (BoundaryKind.PERIODIC, BoundaryKind.PERIODIC, kind))
    if dims != 3:
        raise InvalidSpec("dims must be 1 or 3", field="dims")
    try:
        cells = tuple(int(c) for c in cells)
    except (TypeError, ValueError) as exc:
        raise InvalidSpec("cells must be three integers", field="cells") from exc
    if len(cells) != 3:
        raise InvalidSpec("cells must have three entries", field="cells")
    if spacing is None:
        if lengths is None or len(lengths) != 3:
            raise InvalidSpec("need three lengths or spacings", field="lengths")
        spacing = tuple(float(L) / max(n, 1) for L, n in zip(lengths, cells))
    spacing = tuple(float(h) for h in spacing)
    if len(spacing) != 3:
        raise InvalidSpec("spacing must have three entries", field="spacing")
    boundary = boundary or ("PERIODIC", "PERIODIC", "WALL")
    if len(boundary) != 3:
        raise InvalidSpec("boundary must have three entries", field="boundary")
    return StaggeredGrid(3, cells, spacing, tuple(_as_kind(b) for b in boundary))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: StaggeredGrid
    placement: Placement
    values: np.ndarray

    def __post_init__(self):
        placement = Placement(self.placement)
        if placement not in (Placement.NODE, Placement.CELL):
            raise PlacementMismatch("scalar fields live on NODE or CELL")
        object.__setattr__(self, "placement", placement)
        vals = np.asarray(self.values, dtype=float)
        shape = self.grid.shape(placement)
        if vals.size != int(np.prod(shape)):
            raise GridMismatch(f"expected {int(np.prod(shape))} values, got {vals.size}")
        object.__setattr__(self, "values", _frozen(vals.reshape(shape)))

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def from_flat(cls, grid, placement, vec) -> "ScalarField":
        return cls(grid, Placement(placement), np.asarray(vec).reshape(grid.shape(placement)))

    @classmethod
    def from_function(cls, grid, placement, fn) -> "ScalarField":
        return cls(grid, Placement(placement), fn(*grid.coords(placement)))

    def line(self) -> np.ndarray:
        """Values along the slab axis of a 1D grid."""
        return np.array(self.values[0, 0, :])


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: StaggeredGrid
    placement: Placement
    components: tuple

    def __post_init__(self):
        placement = Placement(self.placement)
        if placement not in (Placement.EDGE, Placement.FACE):
            raise PlacementMismatch("vector fields live on EDGE or FACE")
        object.__setattr__(self, "placement", placement)
        if len(self.components) != 3:
            raise GridMismatch("vector fields carry three component arrays")
        comps = []
        for c, arr in enumerate(self.components):
            arr = np.asarray(arr, dtype=float)
            shape = self.grid.shape(placement, c)
            if arr.size != int(np.prod(shape)):
                raise GridMismatch(f"component {AXES[c]}: expected {int(np.prod(shape))} values, got {arr.size}")
            comps.append(_frozen(arr.reshape(shape)))
        object.__setattr__(self, "components", tuple(comps))

    def flat(self) -> np.ndarray:
        return np.concatenate([c.ravel() for c in self.components])

    @classmethod
    def from_flat(cls, grid, placement, vec) -> "VectorField":
        offs = grid.offsets(placement)
        vec = np.asarray(vec, dtype=float)
        if vec.size != offs[-1]:
            raise GridMismatch(f"expected {offs[-1]} values, got {vec.size}")
        return cls(grid, Placement(placement), tuple(vec[offs[c]:offs[c + 1]] for c in range(3)))

    @classmethod
    def from_function(cls, grid, placement, fn) -> "VectorField":
        """``fn(x, y, z)`` returns a 3-tuple; component c is sampled at its own points."""
        comps = []
        for c in range(3):
            comps.append(np.broadcast_to(fn(*grid.coords(placement, c))[c], grid.shape(placement, c)))
        return cls(grid, Placement(placement), tuple(comps))

    @classmethod
    def zeros(cls, grid, placement) -> "VectorField":
        return cls.from_flat(grid, placement, np.zeros(grid.offsets(placement)[-1]))

    def line(self, comp: int) -> np.ndarray:
        return np.array(self.components[comp][0, 0, :])

    def normal_trace(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Normal component on the two walls of a WALL axis (FACE fields)."""
        if self.placement is not Placement.FACE:
            raise PlacementMismatch("normal traces are read from FACE fields")
        if not self.grid.is_wall(axis):
            raise PlacementMismatch(f"axis {AXES[axis]} is periodic")
        comp = self.components[axis]
        return np.take(comp, 0, axis=axis), np.take(comp, -1, axis=axis)

    def tangential_trace(self, axis: int) -> dict:
        """Tangential components on the walls normal to ``axis`` (EDGE fields)."""
        if self.placement is not Placement.EDGE:
            raise PlacementMismatch("tangential traces are read from EDGE fields")
        if not self.grid.is_wall(axis):
            raise PlacementMismatch(f"axis {AXES[axis]} is periodic")
        return {AXES[c]: (np.take(self.components[c], 0, axis=axis), np.take(self.components[c], -1, axis=axis))
                for c in range(3) if c != axis}


def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch("fields live on different grids")


def apply_diff(kind, fld):
    """Apply GRAD (NODE->EDGE), CURL (EDGE->FACE) or DIV (FACE->CELL)."""
    kind = DiffKind(str(kind).upper() if not isinstance(kind, DiffKind) else kind)
    g = fld.grid
    if kind is DiffKind.GRAD:
        if not isinstance(fld, ScalarField) or fld.placement is not Placement.NODE:
            raise PlacementMismatch("GRAD acts on NODE scalars")
        return VectorField.from_flat(g, Placement.EDGE, g.grad_op @ fld.flat())
    if kind is DiffKind.CURL:
        if not isinstance(fld, VectorField) or fld.placement is not Placement.EDGE:
            raise PlacementMismatch("CURL acts on EDGE vectors")
        return VectorField.from_flat(g, Placement.FACE, g.curl_op @ fld.flat())
    if not isinstance(fld, VectorField) or fld.placement is not Placement.FACE:
        raise PlacementMismatch("DIV acts on FACE vectors")
    return ScalarField.from_flat(g, Placement.CELL, g.div_op @ fld.flat())


def dual_curl(A: VectorField) -> VectorField:
    """Metric adjoint of CURL: FACE -> EDGE, ``M_E^{-1} C^T M_F``."""
    if A.placement is not Placement.FACE:
        raise PlacementMismatch("dual curl acts on FACE vectors")
    g = A.grid
    return VectorField.from_flat(g, Placement.EDGE, (g.curl_op.T @ (g.face_mass * A.flat())) / g.edge_mass)


def dual_div(H: VectorField) -> ScalarField:
    """Divergence of an EDGE field at nodes, ``-M_N^{-1} G^T M_E``.

    On interior nodes this is the centred finite-volume divergence; on wall
    nodes it is the net outflow through the interior side of the half cell.
    """
    if H.placement is not Placement.EDGE:
        raise PlacementMismatch("dual divergence acts on EDGE vectors")
    g = H.grid
    return ScalarField.from_flat(g, Placement.NODE, -(g.grad_op.T @ (g.edge_mass * H.flat())) / g.node_mass)


def inner(u, v) -> float:
    """Discrete L2 inner product with the placement's dual-cell volumes."""
    _check_same_grid(u, v)
    if u.placement is not v.placement:
        raise GridMismatch("inner product of fields on different placements")
    return float(np.sum(u.grid.mass(u.placement) * u.flat() * v.flat()))


def integration_by_parts(u: VectorField, v: VectorField) -> tuple[float, float]:
    """Return ``<CURL u, v>_F - <u, CURL' v>_E`` and the boundary-edge term.

    ``CURL'`` is the finite-volume dual curl evaluated on interior edges
    only; the difference is carried entirely by the tangential edges lying
    on walls.
    """
    g = u.grid
    lhs = inner(apply_diff("CURL", u), v)
    ct = g.curl_op.T @ (g.face_mass * v.flat())
    interior = ~g.boundary_edge_mask
    rhs = float(np.sum(u.flat()[interior] * ct[interior]))
    boundary = float(np.sum(u.flat()[~interior] * ct[~interior]))
    return lhs - rhs, boundary


# ---------------------------------------------------------------------------
# Hodge-type splitting
# ---------------------------------------------------------------------------

def _cg(K, rhs, tol=1e-12, what="Poisson"):
    if rhs.size == 0 or not np.any(rhs):
        return np.zeros_like(rhs)
    d = K.diagonal()
    M = sp.diags(1.0 / d)
    x, info = spla.cg(K, rhs, rtol=tol, atol=0.0, maxiter=20 * rhs.size + 1000, M=M)
    if info != 0:
        raise SolverFailure(f"{what} conjugate gradient stalled", info=int(info))
    return x


def hodge_decompose(A: VectorField) -> tuple[ScalarField, VectorField]:
    """Split ``A = grad p + B`` with ``div B = 0`` and ``p = 0`` on walls.

    EDGE fields use a nodal potential and the nodal (dual) divergence;
    FACE fields use a cell potential, the dual gradient and the exact
    FACE -> CELL divergence.  Grids without walls fix the constant by a
    mean-zero projection.
    """
    g = A.grid
    a = A.flat()
    if A.placement is Placement.EDGE:
        G = g.grad_op
        K = (G.T @ sp.diags(g.edge_mass) @ G).tocsr()
        rhs = G.T @ (g.edge_mass * a)
        free = g.interior_nodes
        p = np.zeros(g.size(Placement.NODE))
        # without walls the system is singular but consistent; CG stays in range
        p[free] = _cg(K[free][:, free].tocsr(), rhs[free])
        if not g.wall_axes:
            p -= np.sum(g.node_mass * p) / np.sum(g.node_mass)
        B = a - G @ p
        return ScalarField.from_flat(g, Placement.NODE, p), VectorField.from_flat(g, Placement.EDGE, B)
    if A.placement is Placement.FACE:
        D = g.div_op
        K = (D @ sp.diags(1.0 / g.face_mass) @ D.T).tocsr()
        rhs = -(D @ a)
        q = _cg(K, rhs)
        if not g.wall_axes:
            q -= q.mean()
        p = q / g.cell_mass
        gradp = -(D.T @ q) / g.face_mass
        return ScalarField.from_flat(g, Placement.CELL, p), VectorField.from_flat(g, Placement.FACE, a - gradp)
    raise PlacementMismatch("hodge_decompose acts on EDGE or FACE fields")


def dual_grad(p: ScalarField) -> VectorField:
    """Gradient of a CELL potential onto faces, zero Dirichlet value on walls."""
    if p.placement is not Placement.CELL:
        raise PlacementMismatch("dual gradient acts on CELL scalars")
    g = p.grid
    return VectorField.from_flat(g, Placement.FACE, -(g.div_op.T @ (g.cell_mass * p.flat())) / g.face_mass)


# ---------------------------------------------------------------------------
# norms and probes
# ---------------------------------------------------------------------------

def _arrays(fld):
    if isinstance(fld, ScalarField):
        return [(fld.values, axis_types(fld.placement))]
    return [(c, axis_types(fld.placement, k)) for k, c in enumerate(fld.components)]


def _diff_along(grid, arr, axis, kind):
    h = grid.spacing[axis]
    if grid.is_wall(axis):
        return np.diff(arr, axis=axis) / h
    if arr.shape[axis] == 1:
        return np.zeros_like(arr)
    return (np.roll(arr, -1, axis=axis) - arr) / h


def field_norm(fld, kind: str = "L2") -> float:
    """L2, H1, H2 or SUP norm by grid quadrature.

    Derivatives are one-sided differences along each axis (centred at the
    midpoint between samples); the H2 part sums every pair of repeated
    differences.  SUP is the largest absolute component value.
    """
    kind = kind.upper()
    g = fld.grid
    vals = fld.flat()
    if kind == "SUP":
        return float(np.max(np.abs(vals))) if vals.size else 0.0
    l2sq = float(np.sum(g.mass(fld.placement) * vals ** 2))
    if kind == "L2":
        return float(np.sqrt(l2sq))
    cell = float(np.prod(g.spacing))
    h1sq = 0.0
    h2sq = 0.0
    for arr, types in _arrays(fld):
        for a in range(3):
            da = _diff_along(g, arr, a, types[a])
            h1sq += cell * float(np.sum(da ** 2))
            if kind == "H2":
                for b in range(3):
                    if da.shape[b] < 2 and g.is_wall(b):
                        continue
                    dab = _diff_along(g, da, b, types[b])
                    h2sq += cell * float(np.sum(dab ** 2))
    if kind == "H1":
        return float(np.sqrt(l2sq + h1sq))
    if kind == "H2":
        return float(np.sqrt(l2sq + h1sq + h2sq))
    raise ValueError(f"unknown norm {kind!r}")


def divcurl_probe(u: VectorField, eps: float = 1e-30) -> float:
    """Empirical ratio ||u||_H1 / (||div u|| + ||curl u|| + ||n.u||_boundary + eps)."""
    g = u.grid
    if not np.any(u.flat()):
        return 0.0
    if u.placement is Placement.FACE:
        div = apply_diff("DIV", u)
        div_n = field_norm(div, "L2")
        ct = dual_curl(u).flat()
        interior = ~g.boundary_edge_mask
        curl_n = float(np.sqrt(np.sum(g.edge_mass[interior] * ct[interior] ** 2)))
        bsq = 0.0
        for a in g.wall_axes:
            area = np.prod([g.spacing[b] for b in range(3) if b != a])
            lo, hi = u.normal_trace(a)
            bsq += area * float(np.sum(lo ** 2) + np.sum(hi ** 2))
    else:
        dv = dual_div(u).flat()
        inner_nodes = g.interior_nodes
        div_n = float(np.sqrt(np.sum(g.node_mass[inner_nodes] * dv[inner_nodes] ** 2)))
        curl_n = field_norm(apply_diff("CURL", u), "L2")
        bsq = 0.0
        for a in g.wall_axes:
            area = np.prod([g.spacing[b] for b in range(3) if b != a])
            comp = u.components[a]
            bsq += area * float(np.sum(np.take(comp, 0, axis=a) ** 2) + np.sum(np.take(comp, -1, axis=a) ** 2))
    return field_norm(u, "H1") / (div_n + curl_n + np.sqrt(bsq) + eps)


def _manufactured(lengths):
    """Smooth periodic test fields and their exact derivatives."""
    kx, ky, kz = (2 * np.pi / L for L in lengths)
    sx, cx = (lambda x: np.sin(kx * x)), (lambda x: np.cos(kx * x))
    sy, cy = (lambda y: np.sin(ky * y)), (lambda y: np.cos(ky * y))
    sz, cz = (lambda z: np.sin(kz * z)), (lambda z: np.cos(kz * z))
    return {
        "GRAD": (lambda x, y, z: sx(x) * cy(y) * sz(z),
                 lambda x, y, z: (kx * cx(x) * cy(y) * sz(z), -ky * sx(x) * sy(y) * sz(z),
                                  kz * sx(x) * cy(y) * cz(z))),
        "CURL": (lambda x, y, z: (sy(y) * cz(z), sz(z) * cx(x), sx(x) * cy(y)),
                 lambda x, y, z: (-ky * sx(x) * sy(y) - kz * cz(z) * cx(x),
                                  -kz * sy(y) * sz(z) - kx * cx(x) * cy(y),
                                  -kx * sz(z) * sx(x) - ky * cy(y) * cz(z))),
        "DIV": (lambda x, y, z: (cx(x) * sy(y), cy(y) * sz(z), cz(z) * sx(x)),
                lambda x, y, z: -kx * sx(x) * sy(y) - ky * sy(y) * sz(z) - kz * sz(z) * sx(x)),
    }


def operator_errors(cells: int, lengths=(1.0, 1.0, 1.0)) -> dict:
    """L2 errors of GRAD, CURL and DIV on smooth fields at ``cells``^3 resolution."""
    g = build_grid(3, (cells,) * 3, lengths=lengths)
    out = {}
    for kind, (fn, exact) in _manufactured(lengths).items():
        if kind == "GRAD":
            src, dst = ScalarField.from_function(g, Placement.NODE, fn), Placement.EDGE
        elif kind == "CURL":
            src, dst = VectorField.from_function(g, Placement.EDGE, fn), Placement.FACE
        else:
            src, dst = VectorField.from_function(g, Placement.FACE, fn), Placement.CELL
        got = apply_diff(kind, src)
        if dst is Placement.CELL:
            ref = ScalarField.from_function(g, dst, exact)
        else:
            ref = VectorField.from_function(g, dst, exact)
        err = got.flat() - ref.flat()
        out[kind] = float(np.sqrt(np.sum(g.mass(dst) * err * err)))
    return out


def operator_convergence(cells=(8, 16, 32), lengths=(1.0, 1.0, 1.0)) -> dict:
    """Observed order of each operator under grid doubling (fitted log-log slope)."""
    rows = [operator_errors(n, lengths) for n in cells]
    h = np.log(1.0 / np.asarray(cells, dtype=float))
    return {k: float(np.polyfit(h, np.log([r[k] for r in rows]), 1)[0]) for k in rows[0]}


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

FIELD_HEADER = "placement,axis,i,j,k,value"


def fmt(x: float) -> str:
    """Shortest round-trip text for a float."""
    return repr(float(x))


def field_to_csv(fld, comments: Sequence[str] = ()) -> str:
    """Serialize a field as ``placement,axis,i,j,k,value`` rows."""
    out = io.StringIO()
    for line in comments:
        out.write(f"# {line}\n")
    out.write(FIELD_HEADER + "\n")
    for arr, comp in ((a, k) for k, a in enumerate(fld.components)) if isinstance(fld, VectorField) \
            else [(fld.values, None)]:
        axis = "" if comp is None else AXES[comp]
        for (i, j, k), v in np.ndenumerate(arr):
            out.write(f"{fld.placement.value},{axis},{i},{j},{k},{fmt(v)}\n")
    return out.getvalue()


def field_from_csv(text: str, grid: StaggeredGrid):
    """Inverse of :func:`field_to_csv` for a known grid."""
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not rows or rows[0].strip() != FIELD_HEADER:
        raise InvalidSpec("missing field CSV header")
    parsed = [r.split(",") for r in rows[1:]]
    if not parsed:
        raise InvalidSpec("empty field CSV")
    placement = Placement(parsed[0][0])
    if placement in (Placement.NODE, Placement.CELL):
        vals = np.zeros(grid.shape(placement))
        for _, _, i, j, k, v in parsed:
            vals[int(i), int(j), int(k)] = float(v)
        return ScalarField(grid, placement, vals)
    comps = [np.zeros(grid.shape(placement, c)) for c in range(3)]
    for _, ax, i, j, k, v in parsed:
        comps[AXES.index(ax)][int(i), int(j), int(k)] = float(v)
    return VectorField(grid, placement, tuple(comps))
