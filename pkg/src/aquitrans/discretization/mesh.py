"""
Conforming triangular meshes of polygonal domains.

Builds structured meshes of rectangles, reads/writes the plain-text
node/element format and computes every geometric quantity the solvers and
the discrete norms need:

- cell areas, centroids, circumcenters and diameters
- edges with adjacent cells, boundary flag and a unit normal whose global
  orientation points from the lower cell index to the higher one (outward
  on the boundary)
- per-edge distances d and transmissibility-like ratios sigma = |edge| / d

Format:
    vertices <V> cells <C>
    x y          (V lines)
    i j k        (C lines, 0-based vertex indices)
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, TypedDict, Union

import numpy as np
from scipy.spatial import cKDTree

from aquitrans.errors import MeshError

logger = logging.getLogger(__name__)

# d below FALLBACK_RATIO * h means the circumcenters (nearly) coincide
FALLBACK_RATIO = 1e-10
# a vertex closer than ON_EDGE_RATIO * extent to an edge lies on it
ON_EDGE_RATIO = 1e-10


@dataclass(frozen=True)
class Rectangle:
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise MeshError(f"Degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


class MeshMetrics(TypedDict):
    h: float
    quasi_uniformity: float


def _signed_areas(cell_vertices: np.ndarray) -> np.ndarray:
    e1 = cell_vertices[:, 1] - cell_vertices[:, 0]
    e2 = cell_vertices[:, 2] - cell_vertices[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _circumcenters(cell_vertices: np.ndarray) -> np.ndarray:
    a = cell_vertices[:, 0]
    b = cell_vertices[:, 1] - a
    c = cell_vertices[:, 2] - a
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    b2 = np.sum(b * b, axis=1)
    c2 = np.sum(c * c, axis=1)
    ux = (c[:, 1] * b2 - b[:, 1] * c2) / d
    uy = (b[:, 0] * c2 - c[:, 0] * b2) / d
    return a + np.stack([ux, uy], axis=1)


def circumcenter(cell_vertices: Sequence[Sequence[float]]) -> np.ndarray:
    """Center of the circle through the three vertices of a triangle"""
    pts = np.asarray(cell_vertices, dtype=float).reshape(1, 3, 2)
    area = _signed_areas(pts)[0]
    scale = max(np.ptp(pts[0], axis=0).max(), 1e-300)
    if abs(area) <= 1e-14 * scale * scale:
        raise MeshError(f"Degenerate cell {pts[0].tolist()} has no circumcenter")
    return _circumcenters(pts)[0]


def _point_line_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    t = b - a
    r = points - a
    cross = t[:, 0] * r[:, 1] - t[:, 1] * r[:, 0]
    return np.abs(cross) / np.linalg.norm(t, axis=1)


class Mesh:
    """
    Immutable conforming triangulation. All arrays are read-only after
    construction; local edge k of a cell is the edge opposite its vertex k.
    """

    def __init__(
        self,
        vertices: np.ndarray,
        cells: np.ndarray,
        cell_lines: Optional[Sequence[int]] = None,
    ):
        vertices = np.array(vertices, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError(f"Vertices must have shape (V, 2), got {vertices.shape}")
        if cells.ndim != 2 or cells.shape[1] != 3 or cells.shape[0] == 0:
            raise MeshError(f"Cells must have shape (C, 3) with C >= 1, got {cells.shape}")
        self._cell_lines = None if cell_lines is None else list(cell_lines)

        self._validate_indices(vertices, cells)
        cells = self._orient_cells(vertices, cells)

        self.vertices = vertices
        self.cells = cells
        self._build_cell_geometry()
        self._build_edges()
        self._check_hanging_vertices()
        self._build_distances()

        for name in (
            "vertices", "cells", "areas", "centroids", "circumcenters", "diameters",
            "edges", "edge_cells", "boundary", "normals", "edge_lengths",
            "edge_midpoints", "cell_edges", "cell_edge_signs", "distances",
            "sigma", "distance_fallback",
        ):
            getattr(self, name).setflags(write=False)

        logger.debug(
            f"Mesh built: {self.n_vertices} vertices, {self.n_cells} cells, "
            f"{self.n_edges} edges, {int(self.distance_fallback.sum())} centroid-distance fallbacks"
        )

    # ------------------------------------------------------------------ checks
    def _line_of(self, cell: int) -> Optional[int]:
        if self._cell_lines is None:
            return None
        return self._cell_lines[cell]

    def _validate_indices(self, vertices: np.ndarray, cells: np.ndarray) -> None:
        n_vertices = vertices.shape[0]
        if not np.all(np.isfinite(vertices)):
            raise MeshError("Vertex coordinates must be finite")
        bad = np.flatnonzero((cells < 0).any(axis=1) | (cells >= n_vertices).any(axis=1))
        if bad.size:
            c = int(bad[0])
            raise MeshError(
                f"Cell {c} references a vertex outside 0..{n_vertices - 1}: {cells[c].tolist()}",
                line=self._line_of(c),
            )
        s = np.sort(cells, axis=1)
        repeated = np.flatnonzero((s[:, 0] == s[:, 1]) | (s[:, 1] == s[:, 2]))
        if repeated.size:
            c = int(repeated[0])
            raise MeshError(f"Cell {c} repeats a vertex: {cells[c].tolist()}", line=self._line_of(c))
        _, first, counts = np.unique(s, axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup_key = s[first[np.argmax(counts > 1)]]
            dups = np.flatnonzero((s == dup_key).all(axis=1))
            raise MeshError(
                f"Non-conforming connectivity: cell {int(dups[1])} duplicates cell {int(dups[0])}",
                line=self._line_of(int(dups[1])),
            )

    def _orient_cells(self, vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
        areas = _signed_areas(vertices[cells])
        extent = np.ptp(vertices, axis=0).max()
        tol = 1e-14 * extent * extent
        flat = np.flatnonzero(np.abs(areas) <= tol)
        if flat.size:
            c = int(flat[0])
            raise MeshError(f"Cell {c} has zero area (collinear vertices)", line=self._line_of(c))
        cells = cells.copy()
        negative = areas < 0
        if np.any(negative):
            logger.debug(f"Reorienting {int(negative.sum())} clockwise cells")
            cells[negative] = cells[negative][:, [0, 2, 1]]
        return cells

    # ---------------------------------------------------------------- geometry
    def _build_cell_geometry(self) -> None:
        pts = self.vertices[self.cells]
        self.areas = _signed_areas(pts)
        self.centroids = pts.mean(axis=1)
        self.circumcenters = _circumcenters(pts)
        sides = np.stack(
            [np.linalg.norm(pts[:, (k + 2) % 3] - pts[:, (k + 1) % 3], axis=1) for k in range(3)],
            axis=1,
        )
        self.diameters = sides.max(axis=1)
        self._inradii = self.areas / (0.5 * sides.sum(axis=1))

    def _build_edges(self) -> None:
        n_cells = self.n_cells
        local = np.stack(
            [
                np.sort(self.cells[:, [(k + 1) % 3, (k + 2) % 3]], axis=1)
                for k in range(3)
            ],
            axis=1,
        )  # (C, 3, 2)
        flat = local.reshape(-1, 2)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.edges = edges
        self.cell_edges = inverse.reshape(n_cells, 3)

        owner_cell = np.repeat(np.arange(n_cells), 3)
        counts = np.bincount(inverse, minlength=edges.shape[0])
        if np.any(counts > 2):
            e = int(np.flatnonzero(counts > 2)[0])
            offenders = owner_cell[inverse == e]
            raise MeshError(
                f"Non-conforming connectivity: edge {edges[e].tolist()} is shared by cells "
                f"{offenders.tolist()}",
                line=self._line_of(int(offenders[-1])),
            )

        # stable sort keeps cell order, so column 0 holds the lower cell index
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        sorted_cells = owner_cell[order]
        starts = np.searchsorted(sorted_edges, np.arange(edges.shape[0]))
        edge_cells = np.full((edges.shape[0], 2), -1, dtype=np.int64)
        edge_cells[:, 0] = sorted_cells[starts]
        two = counts == 2
        edge_cells[two, 1] = sorted_cells[starts[two] + 1]
        self.edge_cells = edge_cells
        self.boundary = edge_cells[:, 1] < 0

        a = self.vertices[edges[:, 0]]
        b = self.vertices[edges[:, 1]]
        t = b - a
        self.edge_lengths = np.linalg.norm(t, axis=1)
        self.edge_midpoints = 0.5 * (a + b)
        normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / self.edge_lengths[:, None]
        outward = np.sum(normals * (self.edge_midpoints - self.centroids[edge_cells[:, 0]]), axis=1)
        normals[outward < 0] *= -1.0
        self.normals = normals

        self.cell_edge_signs = np.where(
            edge_cells[self.cell_edges, 0] == np.arange(n_cells)[:, None], 1.0, -1.0
        )

    def _check_hanging_vertices(self) -> None:
        """A vertex strictly inside a boundary edge is a T-junction: the edge is really interior"""
        on_boundary = np.flatnonzero(self.boundary)
        used = np.unique(self.cells)
        a = self.vertices[self.edges[on_boundary, 0]]
        b = self.vertices[self.edges[on_boundary, 1]]
        tol = ON_EDGE_RATIO * np.ptp(self.vertices, axis=0).max()
        radii = 0.5 * np.linalg.norm(b - a, axis=1) + tol
        near = cKDTree(self.vertices[used]).query_ball_point(0.5 * (a + b), radii)
        for i, candidates in enumerate(near):
            e = int(on_boundary[i])
            t = b[i] - a[i]
            length_sq = t @ t
            for v in used[candidates]:
                if v in self.edges[e]:
                    continue
                r = self.vertices[v] - a[i]
                along = (r @ t) / length_sq
                off = abs(r[0] * t[1] - r[1] * t[0]) / np.sqrt(length_sq)
                if off <= tol and ON_EDGE_RATIO < along < 1.0 - ON_EDGE_RATIO:
                    c = int(self.edge_cells[e, 0])
                    raise MeshError(
                        f"Non-conforming connectivity: vertex {int(v)} lies inside edge {self.edges[e].tolist()} "
                        f"of cell {c} (hanging node)",
                        line=self._line_of(c),
                    )

    def _build_distances(self) -> None:
        h = self.h
        first = self.edge_cells[:, 0]
        second = self.edge_cells[:, 1]
        interior = ~self.boundary
        distances = np.empty(self.n_edges)
        fallback = np.zeros(self.n_edges, dtype=bool)

        d_int = np.linalg.norm(
            self.circumcenters[first[interior]] - self.circumcenters[second[interior]], axis=1
        )
        d_int_centroid = np.linalg.norm(
            self.centroids[first[interior]] - self.centroids[second[interior]], axis=1
        )
        fb_int = d_int < FALLBACK_RATIO * h
        distances[interior] = np.where(fb_int, d_int_centroid, d_int)
        fallback[interior] = fb_int

        bnd = self.boundary
        a = self.vertices[self.edges[bnd, 0]]
        b = self.vertices[self.edges[bnd, 1]]
        d_bnd = _point_line_distance(self.circumcenters[first[bnd]], a, b)
        d_bnd_centroid = _point_line_distance(self.centroids[first[bnd]], a, b)
        fb_bnd = d_bnd < FALLBACK_RATIO * h
        distances[bnd] = np.where(fb_bnd, d_bnd_centroid, d_bnd)
        fallback[bnd] = fb_bnd

        self.distances = distances
        self.distance_fallback = fallback
        self.sigma = self.edge_lengths / distances

    # -------------------------------------------------------------- accessors
    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def cell_vertices(self) -> np.ndarray:
        """Vertex coordinates per cell, shape (C, 3, 2)"""
        return self.vertices[self.cells]

    def metrics(self) -> MeshMetrics:
        return mesh_metrics(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            self.vertices.shape == other.vertices.shape
            and self.cells.shape == other.cells.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Mesh(vertices={self.n_vertices}, cells={self.n_cells}, edges={self.n_edges})"


def mesh_metrics(mesh: Mesh) -> MeshMetrics:
    """Global size h and quasi-uniformity ratio (max diameter / min inscribed diameter)"""
    return MeshMetrics(
        h=mesh.h,
        quasi_uniformity=float(mesh.diameters.max() / (2.0 * mesh._inradii.min())),
    )


def build_structured_mesh(n: int, domain: Rectangle = Rectangle()) -> Mesh:
    """
    n x n squares, each split into two triangles by the diagonal from its
    lower-left to its upper-right corner.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError(f"Structured mesh needs n >= 1 subdivisions, got {n!r}")
    n = int(n)
    xs = np.linspace(domain.x0, domain.x1, n + 1)
    ys = np.linspace(domain.y0, domain.y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, cells)


def load_mesh(path: Union[str, Path]) -> Mesh:
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except UnicodeDecodeError as e:
        raise MeshError(f"{path} is not ASCII: {e}")
    except OSError as e:
        raise MeshError(f"Cannot read mesh file {path}: {e}")

    # keep original line numbers, skip blank lines
    numbered = [(i + 1, line.split()) for i, line in enumerate(lines) if line.strip()]
    if not numbered:
        raise MeshError("Empty mesh file", line=1)

    line_no, header = numbered[0]
    if len(header) != 4 or header[0] != "vertices" or header[2] != "cells":
        raise MeshError("Header must read 'vertices <V> cells <C>'", line=line_no)
    try:
        n_vertices, n_cells = int(header[1]), int(header[3])
    except ValueError:
        raise MeshError("Vertex and cell counts must be integers", line=line_no)
    if n_vertices < 3 or n_cells < 1:
        raise MeshError(f"Need at least 3 vertices and 1 cell, got {n_vertices} and {n_cells}", line=line_no)

    body = numbered[1:]
    if len(body) != n_vertices + n_cells:
        last = body[-1][0] if body else line_no
        raise MeshError(
            f"Expected {n_vertices} vertex lines and {n_cells} cell lines, found {len(body)} data lines",
            line=last,
        )

    vertices = np.empty((n_vertices, 2))
    for k, (ln, tokens) in enumerate(body[:n_vertices]):
        if len(tokens) != 2:
            raise MeshError(f"Vertex line needs 2 coordinates, got {len(tokens)}", line=ln)
        try:
            vertices[k] = [float(tokens[0]), float(tokens[1])]
        except ValueError:
            raise MeshError(f"Invalid vertex coordinates {tokens}", line=ln)

    cells = np.empty((n_cells, 3), dtype=np.int64)
    cell_lines = []
    for k, (ln, tokens) in enumerate(body[n_vertices:]):
        if len(tokens) != 3:
            raise MeshError(f"Cell line needs 3 vertex indices, got {len(tokens)}", line=ln)
        try:
            cells[k] = [int(t) for t in tokens]
        except ValueError:
            raise MeshError(f"Invalid cell indices {tokens}", line=ln)
        cell_lines.append(ln)

    mesh = Mesh(vertices, cells, cell_lines=cell_lines)
    logger.info(f"Loaded {mesh!r} from {path}")
    return mesh


def write_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    path = Path(path)
    out = [f"vertices {mesh.n_vertices} cells {mesh.n_cells}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    path.write_text("\n".join(out) + "\n", encoding="ascii")
    return path
