"""Triangle meshes, the per-triangle gradient operator and bilateral symmetry.

The mesh is the shared template every per-vertex signal lives on. All signal
processing downstream (stitching, hole filling) happens in the gradient
domain, so the one non-trivial object here is the linear operator taking a
per-vertex scalar field to per-triangle spatial gradients.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import DegenerateTriangleError, DimensionMismatchError, MissingSymmetryMapError
from .validation import as_float_matrix, as_index_matrix, check_signal

# Squared-length units. Triangles below this area have no usable gradient.
AREA_EPS = 1e-12


class TriangleMesh:
    """Immutable-by-convention triangle mesh with an optional symmetry map.

    Parameters
    ----------
    vertices : (n, 3) array_like of float
        Vertex positions.
    triangles : (t, 3) array_like of int
        Corner indices, 0-based. Degenerate triangles (area < 1e-12) are
        rejected here rather than poisoning solves later.
    symmetry_map : (n,) array_like of int, optional
        Involutive permutation pairing each vertex with its bilateral
        mirror. Midline vertices map to themselves.
    """

    def __init__(self, vertices, triangles, symmetry_map=None):
        self.vertices = as_float_matrix(vertices, cols=3, name="vertices")
        self.triangles = as_index_matrix(triangles, cols=3, name="triangles")
        n = self.vertices.shape[0]
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= n:
                raise DimensionMismatchError("triangle indices out of range")
        areas = triangle_areas(self.vertices, self.triangles)
        bad = np.flatnonzero(areas < AREA_EPS)
        if bad.size:
            raise DegenerateTriangleError(
                f"{bad.size} degenerate triangle(s), first at index {bad[0]}")
        if symmetry_map is not None:
            symmetry_map = np.asarray(symmetry_map)
            if not np.issubdtype(symmetry_map.dtype, np.integer):
                raise ValueError("symmetry map must be integer")
            symmetry_map = symmetry_map.astype(np.int64).reshape(-1)
            if symmetry_map.shape != (n,):
                raise DimensionMismatchError(
                    f"symmetry map has length {symmetry_map.size}, expected {n}")
            if symmetry_map.size and (symmetry_map.min() < 0 or symmetry_map.max() >= n):
                raise DimensionMismatchError("symmetry map indices out of range")
            if not np.array_equal(symmetry_map[symmetry_map], np.arange(n)):
                raise ValueError("symmetry map is not an involution")
        self.symmetry_map = symmetry_map

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same topology and symmetry on new positions."""
        return TriangleMesh(vertices, self.triangles, self.symmetry_map)

    def __repr__(self) -> str:  # pragma: no cover
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles})"


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)


def triangle_normals(mesh: TriangleMesh) -> np.ndarray:
    """Unit normals, orientation from the corner winding."""
    v, tri = mesh.vertices, mesh.triangles
    cross = np.cross(v[tri[:, 1]] - v[tri[:, 0]], v[tri[:, 2]] - v[tri[:, 0]])
    return cross / np.linalg.norm(cross, axis=1, keepdims=True)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted average of incident triangle normals, unit length.

    An isolated vertex gets a zero normal rather than an error; it cannot be
    lit or weighted meaningfully either way.
    """
    v, tri = mesh.vertices, mesh.triangles
    # Cross product length is twice the area, so the raw cross products are
    # already area-weighted normals.
    cross = np.cross(v[tri[:, 1]] - v[tri[:, 0]], v[tri[:, 2]] - v[tri[:, 0]])
    acc = np.zeros_like(v)
    np.add.at(acc, tri[:, 0], cross)
    np.add.at(acc, tri[:, 1], cross)
    np.add.at(acc, tri[:, 2], cross)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    nonzero = norm[:, 0] > 0
    acc[nonzero] /= norm[nonzero]
    return acc


def build_gradient_operator(mesh: TriangleMesh) -> sparse.csr_matrix:
    """Sparse (3t, n) operator taking per-vertex scalars to triangle gradients.

    Rows 3j, 3j+1, 3j+2 hold the x, y, z components of the gradient of the
    piecewise-linear interpolant over triangle j. For corner a of triangle
    (a, b, c) the hat-function gradient is ``n_hat x (p_c - p_b) / (2 area)``.

    Raises
    ------
    DegenerateTriangleError
        If any triangle area falls below 1e-12.
    """
    v, tri = mesh.vertices, mesh.triangles
    t = tri.shape[0]
    n = v.shape[0]
    p0, p1, p2 = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    cross = np.cross(p1 - p0, p2 - p0)
    double_area = np.linalg.norm(cross, axis=1)
    if np.any(double_area < 2.0 * AREA_EPS):
        raise DegenerateTriangleError("triangle area below 1e-12")
    normal = cross / double_area[:, None]
    # (t, 3) gradient of each corner hat function
    g = np.empty((t, 3, 3))
    g[:, 0] = np.cross(normal, p2 - p1) / double_area[:, None]
    g[:, 1] = np.cross(normal, p0 - p2) / double_area[:, None]
    g[:, 2] = np.cross(normal, p1 - p0) / double_area[:, None]
    # row 3j+k (component k) gets entries at the three corner columns
    rows = (3 * np.arange(t)[:, None, None] + np.arange(3)[None, :, None])
    rows = np.broadcast_to(rows, (t, 3, 3)).ravel()
    cols = np.broadcast_to(tri[:, None, :], (t, 3, 3)).ravel()
    vals = np.swapaxes(g, 1, 2).ravel()  # (t, corner, component) -> component-major rows
    op = sparse.csr_matrix((vals, (rows, cols)), shape=(3 * t, n))
    op.sum_duplicates()
    op.sort_indices()
    return op


def reflect_signal(signal, mesh: TriangleMesh) -> np.ndarray:
    """Mirror a per-vertex signal through the mesh's bilateral symmetry.

    Pure permutation of rows; involutive, norm preserving.
    """
    if mesh.symmetry_map is None:
        raise MissingSymmetryMapError("mesh has no symmetry map")
    values = check_signal(signal, n_vertices=mesh.n_vertices, channels=None)
    return values[mesh.symmetry_map]


def vertex_components(n_vertices: int, triangles: np.ndarray) -> np.ndarray:
    """Connected-component label per vertex under triangle adjacency.

    Vertices in no triangle are singleton components.
    """
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if triangles.size == 0:
        return np.arange(n_vertices)
    i = triangles[:, [0, 1, 2]].ravel()
    j = triangles[:, [1, 2, 0]].ravel()
    adj = sparse.coo_matrix((np.ones(i.size), (i, j)), shape=(n_vertices, n_vertices))
    _, labels = csgraph.connected_components(adj, directed=False)
    return labels
