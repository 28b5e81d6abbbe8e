"""Polygonal meshes of the unit square: uniform, tanh-graded, and
boundary-refined with hanging nodes.

Meshes are immutable after construction.  A hanging node is an ordinary
vertex of the coarse neighbor's loop, splitting one straight side into two
collinear faces; no constraint equations exist anywhere downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .basis import is_convex_loop, polygon_centroid_area

__all__ = [
    "BoundarySide",
    "Face",
    "Cell",
    "PolygonalMesh",
    "MeshFamily",
    "ValidationReport",
    "build_uniform_square",
    "build_anisotropic_tanh",
    "build_imh",
    "tanh_grading",
    "validate_mesh",
    "save_mesh_json",
    "load_mesh_json",
]


class BoundarySide(IntEnum):
    INTERIOR = 0
    BOTTOM = 1
    RIGHT = 2
    TOP = 3
    LEFT = 4


@dataclass(frozen=True)
class Face:
    endpoint_ids: tuple[int, int]
    neighbor_cells: tuple[int, ...]
    boundary_marker: BoundarySide


@dataclass(frozen=True)
class Cell:
    vertex_loop: np.ndarray
    face_ids: np.ndarray
    h_T: float
    area: float
    barycenter: np.ndarray


@dataclass
class PolygonalMesh:
    vertices: np.ndarray               # (nv, 2)
    cells: list[np.ndarray]            # CCW vertex loops
    faces: np.ndarray                  # (nf, 2), endpoints sorted ascending
    face_cells: np.ndarray             # (nf, 2), -1 where absent
    cell_faces: list[np.ndarray]       # face ids in loop order
    boundary_markers: np.ndarray       # (nf,), BoundarySide values
    areas: np.ndarray = field(default=None)
    centroids: np.ndarray = field(default=None)
    diameters: np.ndarray = field(default=None)
    _locator: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.areas is None:
            self._compute_geometry()

    def _compute_geometry(self):
        n = len(self.cells)
        self.areas = np.empty(n)
        self.centroids = np.empty((n, 2))
        self.diameters = np.empty(n)
        for i, loop in enumerate(self.cells):
            pts = self.vertices[loop]
            c, a = polygon_centroid_area(pts)
            if a <= 0:
                raise ValueError(f"cell {i} is degenerate or misoriented (area {a})")
            self.areas[i] = a
            self.centroids[i] = c
            d = pts[:, None, :] - pts[None, :, :]
            self.diameters[i] = math.sqrt(float(np.max(np.sum(d * d, axis=-1))))

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def h(self) -> float:
        return float(np.max(self.diameters))

    def face(self, i: int) -> Face:
        nb = tuple(int(c) for c in self.face_cells[i] if c >= 0)
        return Face(tuple(int(v) for v in self.faces[i]), nb, BoundarySide(self.boundary_markers[i]))

    def cell(self, i: int) -> Cell:
        return Cell(self.cells[i], self.cell_faces[i], float(self.diameters[i]),
                    float(self.areas[i]), self.centroids[i])

    def cell_geometry(self, i: int) -> tuple[float, np.ndarray, float]:
        """(area, barycenter, diameter) of one cell."""
        return float(self.areas[i]), self.centroids[i], float(self.diameters[i])

    def min_face_length(self, i: int) -> float:
        loop = self.vertices[self.cells[i]]
        e = np.roll(loop, -1, axis=0) - loop
        return float(np.min(np.hypot(e[:, 0], e[:, 1])))

    def boundary_face_ids(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_markers != BoundarySide.INTERIOR)

    # -- point location -----------------------------------------------------

    def locate(self, point) -> int:
        """Index of the cell containing the point; ties go to the lowest id.

        Raises ValueError for points outside the domain.
        """
        if self._locator is None:
            object.__setattr__(self, "_locator", _CellLocator(self))
        idx = self._locator.find(np.asarray(point, float))
        if idx < 0:
            raise ValueError(f"point {point} lies outside the mesh")
        return idx


class _CellLocator:
    """Uniform-grid bucketing of cell bounding boxes."""

    def __init__(self, mesh: PolygonalMesh, tol: float = 1e-12):
        self.mesh = mesh
        self.tol = tol
        self.n = max(1, int(math.sqrt(mesh.n_cells)))
        self.buckets = [[] for _ in range(self.n * self.n)]
        for ci, loop in enumerate(mesh.cells):
            pts = mesh.vertices[loop]
            i0, j0 = self._bucket(pts.min(axis=0) - tol)
            i1, j1 = self._bucket(pts.max(axis=0) + tol)
            for j in range(j0, j1 + 1):
                for i in range(i0, i1 + 1):
                    self.buckets[j * self.n + i].append(ci)

    def _bucket(self, p):
        i = min(max(int(p[0] * self.n), 0), self.n - 1)
        j = min(max(int(p[1] * self.n), 0), self.n - 1)
        return i, j

    def find(self, p) -> int:
        i, j = self._bucket(p)
        for ci in sorted(self.buckets[j * self.n + i]):
            if _point_in_polygon(self.mesh.vertices[self.mesh.cells[ci]], p, self.tol):
                return ci
        return -1


def _point_in_polygon(loop: np.ndarray, p: np.ndarray, tol: float) -> bool:
    """Ray casting with on-boundary points counted inside."""
    x, y = p
    n = len(loop)
    inside = False
    for i in range(n):
        x0, y0 = loop[i]
        x1, y1 = loop[(i + 1) % n]
        # on-segment check
        cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
        if abs(cross) <= tol * max(1.0, abs(x1 - x0) + abs(y1 - y0)):
            if min(x0, x1) - tol <= x <= max(x0, x1) + tol and min(y0, y1) - tol <= y <= max(y0, y1) + tol:
                return True
        if (y0 > y) != (y1 > y):
            xin = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < xin:
                inside = not inside
    return inside


# ---------------------------------------------------------------------------
# construction helpers


def _marker_for(p0: np.ndarray, p1: np.ndarray, tol: float = 1e-14) -> BoundarySide:
    if abs(p0[1]) <= tol and abs(p1[1]) <= tol:
        return BoundarySide.BOTTOM
    if abs(p0[0] - 1.0) <= tol and abs(p1[0] - 1.0) <= tol:
        return BoundarySide.RIGHT
    if abs(p0[1] - 1.0) <= tol and abs(p1[1] - 1.0) <= tol:
        return BoundarySide.TOP
    if abs(p0[0]) <= tol and abs(p1[0]) <= tol:
        return BoundarySide.LEFT
    return BoundarySide.INTERIOR


def mesh_from_loops(vertices: np.ndarray, loops: list[np.ndarray]) -> PolygonalMesh:
    """Assemble faces, adjacency, and boundary markers from vertex loops.

    Loops are normalized to counterclockwise orientation.
    """
    vertices = np.asarray(vertices, float)
    norm_loops = []
    for loop in loops:
        loop = np.asarray(loop, dtype=np.int64)
        pts = vertices[loop]
        twice_area = float(np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]))
        norm_loops.append(loop if twice_area > 0 else loop[::-1].copy())

    face_index: dict[tuple[int, int], int] = {}
    faces: list[tuple[int, int]] = []
    face_cells: list[list[int]] = []
    cell_faces = []
    for ci, loop in enumerate(norm_loops):
        ids = []
        for a, b in zip(loop, np.roll(loop, -1)):
            key = (int(min(a, b)), int(max(a, b)))
            fi = face_index.get(key)
            if fi is None:
                fi = len(faces)
                face_index[key] = fi
                faces.append(key)
                face_cells.append([])
            face_cells[fi].append(ci)
            ids.append(fi)
        cell_faces.append(np.array(ids, dtype=np.int64))

    nf = len(faces)
    fc = np.full((nf, 2), -1, dtype=np.int64)
    markers = np.zeros(nf, dtype=np.int64)
    for fi, cs in enumerate(face_cells):
        if len(cs) > 2:
            raise ValueError(f"face {fi} shared by more than two cells")
        fc[fi, : len(cs)] = cs
        if len(cs) == 1:
            a, b = faces[fi]
            markers[fi] = _marker_for(vertices[a], vertices[b])
            if markers[fi] == BoundarySide.INTERIOR:
                raise ValueError(f"boundary face {fi} not on the unit-square boundary")
    return PolygonalMesh(vertices, norm_loops, np.array(faces, dtype=np.int64), fc, cell_faces, markers)


# ---------------------------------------------------------------------------
# generators


def _tensor_product_mesh(xs: np.ndarray, ys: np.ndarray) -> PolygonalMesh:
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: j * (nx + 1) + i
    loops = [
        np.array([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
        for j in range(ny)
        for i in range(nx)
    ]
    return mesh_from_loops(vertices, loops)


def build_uniform_square(n: int) -> PolygonalMesh:
    """n x n axis-aligned unit squares of side 1/n."""
    if n < 2:
        raise ValueError("n must be >= 2")
    nodes = np.arange(n + 1) / n
    return _tensor_product_mesh(nodes, nodes)


def tanh_grading(xi):
    """Boundary-clustered grading of [0, 1]: 0.5*(1 + tanh(4*xi - 2)/tanh(2))."""
    return 0.5 * (1.0 + np.tanh(4.0 * np.asarray(xi, float) - 2.0) / math.tanh(2.0))


def build_anisotropic_tanh(n: int) -> PolygonalMesh:
    """Tensor-product rectangles with 1D nodes clustered at both walls."""
    if n < 2:
        raise ValueError("n must be >= 2")
    nodes = tanh_grading(np.arange(n + 1) / n)
    nodes[0], nodes[-1] = 0.0, 1.0
    return _tensor_product_mesh(nodes, nodes)


def build_imh(n0: int, levels: int = 1, delta0: float = 0.175) -> PolygonalMesh:
    """Isotropic mesh with hanging nodes: boundary band split by four per level.

    At level l every square whose barycenter lies strictly closer than
    delta0/2^l to the boundary (distance along the outward normal of the
    nearest side) is split into four congruent squares.  Split faces leave
    hanging nodes recorded as ordinary loop vertices of coarse neighbors.
    """
    if n0 < 2:
        raise ValueError("n0 must be >= 2")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if not (1.0 / n0 <= delta0 < 0.5 - 1.0 / n0):
        raise ValueError(f"delta0 must lie in [1/n0, 0.5 - 1/n0), got {delta0}")

    res = n0 * (1 << levels)  # integer lattice resolution
    s0 = 1 << levels
    squares = [(i * s0, j * s0, s0) for j in range(n0) for i in range(n0)]
    for level in range(1, levels + 1):
        delta = delta0 / (1 << level)
        out = []
        for (ix, iy, s) in squares:
            bx = (ix + s / 2.0) / res
            by = (iy + s / 2.0) / res
            dist = min(bx, by, 1.0 - bx, 1.0 - by)
            if s > 1 and dist < delta - 1e-12:
                half = s // 2
                out.extend([
                    (ix, iy, half), (ix + half, iy, half),
                    (ix, iy + half, half), (ix + half, iy + half, half),
                ])
            else:
                out.append((ix, iy, s))
        squares = out

    corner_set: dict[tuple[int, int], int] = {}
    for (ix, iy, s) in squares:
        for c in ((ix, iy), (ix + s, iy), (ix + s, iy + s), (ix, iy + s)):
            corner_set.setdefault(c, len(corner_set))

    on_vline: dict[int, list[int]] = {}
    on_hline: dict[int, list[int]] = {}
    for (cx, cy) in corner_set:
        on_vline.setdefault(cx, []).append(cy)
        on_hline.setdefault(cy, []).append(cx)
    for v in on_vline.values():
        v.sort()
    for v in on_hline.values():
        v.sort()

    def edge_chain(fixed, lo, hi, table, reverse):
        mids = [m for m in table.get(fixed, ()) if lo < m < hi]
        return mids[::-1] if reverse else mids

    loops = []
    for (ix, iy, s) in squares:
        chain: list[tuple[int, int]] = [(ix, iy)]
        chain += [(m, iy) for m in edge_chain(iy, ix, ix + s, on_hline, False)]
        chain.append((ix + s, iy))
        chain += [(ix + s, m) for m in edge_chain(ix + s, iy, iy + s, on_vline, False)]
        chain.append((ix + s, iy + s))
        chain += [(m, iy + s) for m in edge_chain(iy + s, ix, ix + s, on_hline, True)]
        chain.append((ix, iy + s))
        chain += [(ix, m) for m in edge_chain(ix, iy, iy + s, on_vline, True)]
        loops.append(np.array([corner_set[c] for c in chain], dtype=np.int64))

    vertices = np.empty((len(corner_set), 2))
    for (cx, cy), vi in corner_set.items():
        vertices[vi] = (cx / res, cy / res)
    return mesh_from_loops(vertices, loops)


@dataclass(frozen=True)
class MeshFamily:
    """Mesh family selector for the cavity campaign."""

    kind: str            # "usm" | "arm" | "imh"
    n: int
    imh_levels: int = 1
    imh_delta0: float = 0.175

    def build(self) -> PolygonalMesh:
        if self.kind == "usm":
            return build_uniform_square(self.n)
        if self.kind == "arm":
            return build_anisotropic_tanh(self.n)
        if self.kind == "imh":
            return build_imh(self.n, self.imh_levels, self.imh_delta0)
        raise ValueError(f"unknown mesh family {self.kind!r}")


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    nonconvex_cells: list[int]
    irregular_faces: list[tuple[int, int, float]]  # (cell, face, h_F/h_T)
    orientation_defects: list[int]
    adjacency_defects: list[int]

    @property
    def ok(self) -> bool:
        return not (self.nonconvex_cells or self.irregular_faces
                    or self.orientation_defects or self.adjacency_defects)


def validate_mesh(mesh: PolygonalMesh, rho: float) -> ValidationReport:
    """Report star-shapedness (convexity proxy), shape regularity, and
    orientation/adjacency defects.  Report-only, never raises."""
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0, 1)")
    nonconvex = []
    irregular = []
    orientation = []
    for ci, loop in enumerate(mesh.cells):
        pts = mesh.vertices[loop]
        twice_area = float(np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]))
        if twice_area <= 0:
            orientation.append(ci)
        if not is_convex_loop(pts):
            nonconvex.append(ci)
        hT = mesh.diameters[ci]
        for fi in mesh.cell_faces[ci]:
            a, b = mesh.faces[fi]
            hF = float(np.hypot(*(mesh.vertices[b] - mesh.vertices[a])))
            if hF < rho * hT:
                irregular.append((ci, int(fi), hF / hT))
    adjacency = []
    for fi in range(len(mesh.faces)):
        owners = mesh.face_cells[fi][mesh.face_cells[fi] >= 0]
        if mesh.boundary_markers[fi] == BoundarySide.INTERIOR:
            if len(owners) != 2:
                adjacency.append(fi)
        elif len(owners) != 1:
            adjacency.append(fi)
    return ValidationReport(nonconvex, irregular, orientation, adjacency)


# ---------------------------------------------------------------------------
# file format


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_mesh_json(mesh: PolygonalMesh, path) -> None:
    """Write the mesh as JSON with 17-significant-digit reals."""
    parts = ['{\n"vertices": [']
    parts.append(",\n".join(f"[{_fmt(x)},{_fmt(y)}]" for x, y in mesh.vertices))
    parts.append('],\n"cells": [')
    parts.append(",\n".join("[" + ",".join(str(int(v)) for v in loop) + "]" for loop in mesh.cells))
    parts.append('],\n"boundary_markers": {')
    entries = []
    for fi in mesh.boundary_face_ids():
        a, b = mesh.faces[fi]
        entries.append(f'"{a}-{b}": "{BoundarySide(mesh.boundary_markers[fi]).name.lower()}"')
    parts.append(",\n".join(entries))
    parts.append("}\n}\n")
    with open(path, "w") as fh:
        fh.write("".join(parts))


def load_mesh_json(path) -> PolygonalMesh:
    with open(path) as fh:
        data = json.load(fh)
    vertices = np.array(data["vertices"], float)
    loops = [np.array(c, dtype=np.int64) for c in data["cells"]]
    mesh = mesh_from_loops(vertices, loops)
    # cross-check stored markers against recomputed ones
    for key, name in data.get("boundary_markers", {}).items():
        a, b = (int(t) for t in key.split("-"))
        fi = _find_face(mesh, a, b)
        if BoundarySide(mesh.boundary_markers[fi]).name.lower() != name:
            raise ValueError(f"marker mismatch on face {key}: file says {name}")
    return mesh


def _find_face(mesh: PolygonalMesh, a: int, b: int) -> int:
    key = (min(a, b), max(a, b))
    hits = np.flatnonzero((mesh.faces[:, 0] == key[0]) & (mesh.faces[:, 1] == key[1]))
    if len(hits) != 1:
        raise ValueError(f"face {key} not found")
    return int(hits[0])
