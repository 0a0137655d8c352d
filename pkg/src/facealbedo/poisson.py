"""Screened Poisson least-squares systems on triangle meshes.

Two solver entry points cover all gradient-domain work in the pipeline:

* :func:`solve_screened_poisson` — soft anchoring. Gradient rows are matched
  in the least-squares sense and selected vertices are pulled towards target
  values through rows weighted by a small screening weight.  Used by
  :func:`stitch`, where the reference view provides the anchor.

* :func:`solve_pinned_poisson` — hard anchoring.  Constrained vertices are
  eliminated from the system entirely, so their values pass through exactly.
  Used for hole filling, which must never touch vertices outside the hole.

Both solve the normal equations per colour channel with a single sparse
factorisation shared across channels.  Systems whose constrained part fails
to reach every connected piece of the unknowns are rejected up front.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as sparse_linalg

from .errors import (
    DimensionMismatchError,
    NoReferenceCoverageError,
    SingularSystemError,
)
from .mesh import TriangleMesh, build_gradient_operator
from .validation import check_signal, check_weights

# above this many vertices the normal matrix is solved iteratively
DIRECT_SOLVE_LIMIT = 100_000
CG_RELATIVE_TOL = 1e-10


@dataclass(frozen=True)
class ViewSample:
    """Per-vertex colours sampled from one calibrated view.

    Attributes
    ----------
    colors : (n, c) float array
        Sampled colours; rows with zero weight are ignored downstream
        (convention: zero).
    vertex_weight : (n,) float array
        Non-negative sampling confidence per vertex; zero marks vertices
        this view cannot see or trust.
    triangle_weight : (t,) float array
        Per-triangle confidence, the minimum over the triangle's corners.
    """

    colors: np.ndarray
    vertex_weight: np.ndarray
    triangle_weight: np.ndarray

    def __post_init__(self):
        colors = check_signal(self.colors, channels=None, name="colors")
        vw = check_weights(self.vertex_weight, colors.shape[0], name="vertex_weight")
        tw = np.asarray(self.triangle_weight, dtype=np.float64).reshape(-1)
        tw = check_weights(tw, tw.shape[0], name="triangle_weight")
        object.__setattr__(self, "colors", colors)
        object.__setattr__(self, "vertex_weight", vw)
        object.__setattr__(self, "triangle_weight", tw)

    @classmethod
    def from_vertex_weights(cls, mesh: TriangleMesh, colors, vertex_weight) -> "ViewSample":
        """Build a sample, deriving triangle weights as corner minima."""
        vw = check_weights(vertex_weight, mesh.n_vertices, name="vertex_weight")
        tw = vw[mesh.triangles].min(axis=1)
        return cls(colors, vw, tw)


def build_selections(samples: list[ViewSample] | tuple[ViewSample, ...]
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Assign each triangle and vertex to the view with the largest weight.

    Ties go to the lowest view index; entries no view covers (all weights
    zero) get -1.

    Returns
    -------
    triangle_owner : (t,) int64
    vertex_owner : (n,) int64
    """
    if not samples:
        raise ValueError("need at least one view sample")
    tw = np.stack([s.triangle_weight for s in samples])
    vw = np.stack([s.vertex_weight for s in samples])
    if len({s.colors.shape for s in samples}) != 1:
        raise DimensionMismatchError("view samples disagree in colour shape")
    triangle_owner = np.argmax(tw, axis=0).astype(np.int64)
    triangle_owner[tw.max(axis=0) <= 0.0] = -1
    vertex_owner = np.argmax(vw, axis=0).astype(np.int64)
    vertex_owner[vw.max(axis=0) <= 0.0] = -1
    return triangle_owner, vertex_owner


def _require_anchored(normal_matrix: sparse.spmatrix, anchored: np.ndarray,
                      what: str) -> None:
    """Every connected component of the system graph must contain an anchor.

    The graph couples vertices sharing a retained gradient row (the sparsity
    pattern of the normal matrix); isolated vertices are their own
    components and must be anchored directly.
    """
    pattern = normal_matrix.copy()
    pattern.data = np.ones_like(pattern.data)
    n_comp, labels = csgraph.connected_components(pattern, directed=False)
    ok = np.zeros(n_comp, dtype=bool)
    ok[labels[anchored]] = True
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise SingularSystemError(
            f"{what}: connected component {bad} has no anchoring constraint")


def _factorized_solve(normal_matrix: sparse.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    """Solve SPD normal equations for each right-hand-side column."""
    n = normal_matrix.shape[0]
    out = np.empty_like(rhs)
    if n <= DIRECT_SOLVE_LIMIT:
        try:
            lu = sparse_linalg.splu(normal_matrix.tocsc())
        except RuntimeError as exc:  # singular factorisation slipping past the graph check
            raise SingularSystemError(str(exc)) from exc
        for c in range(rhs.shape[1]):
            out[:, c] = lu.solve(rhs[:, c])
        return out
    for c in range(rhs.shape[1]):
        x, info = sparse_linalg.cg(normal_matrix, rhs[:, c],
                                   rtol=CG_RELATIVE_TOL, maxiter=10 * n)
        if info != 0:
            raise SingularSystemError(f"conjugate gradient failed (info={info})")
        out[:, c] = x
    return out


def solve_screened_poisson(gradient_op: sparse.spmatrix,
                           target_gradients: np.ndarray,
                           gradient_row_mask: np.ndarray,
                           screen_vertices: np.ndarray,
                           screen_values: np.ndarray,
                           screen_weight: float) -> np.ndarray:
    """Least-squares solve of gradient matching with soft vertex anchors.

    Minimises, per channel,

        || G_kept x - g_kept ||^2  +  w^2 || x_S - v_S ||^2

    where ``G_kept`` keeps the three rows of every triangle whose entry in
    ``gradient_row_mask`` is True, S is the screened vertex set and w the
    screening weight.

    Parameters
    ----------
    gradient_op : (3t, n) sparse matrix
    target_gradients : (3t, c)
        Target gradient per kept row; rows of dropped triangles are ignored.
    gradient_row_mask : (t,) bool
        Which triangles contribute gradient rows.
    screen_vertices : (n,) bool
        Vertices receiving soft anchor rows.
    screen_values : (n_screened, c)
        Anchor values, ordered like ``np.flatnonzero(screen_vertices)``.
    screen_weight : float
        Positive row weight w of the anchors.

    Returns
    -------
    (n, c) solution.

    Raises
    ------
    SingularSystemError
        If some connected piece of the kept-gradient graph contains no
        screened vertex (the minimiser would not be unique).
    """
    n = gradient_op.shape[1]
    t = gradient_op.shape[0] // 3
    row_mask = np.asarray(gradient_row_mask, dtype=bool).reshape(-1)
    if row_mask.shape != (t,):
        raise DimensionMismatchError("gradient_row_mask must have one entry per triangle")
    screen_vertices = np.asarray(screen_vertices, dtype=bool).reshape(-1)
    if screen_vertices.shape != (n,):
        raise DimensionMismatchError("screen_vertices must have one entry per vertex")
    if not screen_vertices.any():
        raise SingularSystemError("no screened vertices: system has a constant nullspace")
    if not screen_weight > 0:
        raise ValueError("screen_weight must be positive")
    targets = check_signal(target_gradients, n_vertices=3 * t, channels=None,
                           name="target_gradients")
    values = check_signal(screen_values, n_vertices=int(screen_vertices.sum()),
                          channels=targets.shape[1], name="screen_values")

    kept = np.repeat(row_mask, 3)
    g_kept = gradient_op.tocsr()[kept]
    normal = (g_kept.T @ g_kept).tocsr()
    _require_anchored(normal, screen_vertices, "screened solve")

    w2 = float(screen_weight) ** 2
    screen_diag = sparse.diags(screen_vertices.astype(np.float64) * w2)
    rhs = np.asarray(g_kept.T @ targets[kept])
    rhs[screen_vertices] += w2 * values
    return _factorized_solve((normal + screen_diag).tocsc(), rhs)


def solve_pinned_poisson(gradient_op: sparse.spmatrix,
                         target_gradients: np.ndarray,
                         gradient_row_mask: np.ndarray,
                         free_vertices: np.ndarray,
                         boundary_values: np.ndarray) -> np.ndarray:
    """Gradient matching over free vertices with the rest pinned exactly.

    Pinned vertices are eliminated: their contribution moves to the right
    hand side and their output rows are copies of ``boundary_values``.

    Parameters
    ----------
    gradient_op : (3t, n) sparse matrix
    target_gradients : (3t, c)
    gradient_row_mask : (t,) bool
        Triangles contributing gradient rows.
    free_vertices : (n,) bool
        True where the solver owns the value.
    boundary_values : (n, c)
        Full signal; rows of pinned vertices are the hard constraints and
        pass through to the output bit-for-bit.

    Raises
    ------
    SingularSystemError
        If some free vertex sits in no kept triangle, or a connected piece
        of kept triangles contains no pinned vertex.
    """
    n = gradient_op.shape[1]
    t = gradient_op.shape[0] // 3
    row_mask = np.asarray(gradient_row_mask, dtype=bool).reshape(-1)
    free = np.asarray(free_vertices, dtype=bool).reshape(-1)
    if row_mask.shape != (t,) or free.shape != (n,):
        raise DimensionMismatchError("mask shapes do not match the operator")
    boundary = check_signal(boundary_values, n_vertices=n, channels=None,
                            name="boundary_values")
    targets = check_signal(target_gradients, n_vertices=3 * t,
                           channels=boundary.shape[1], name="target_gradients")
    if not free.any():
        return boundary.copy()

    kept = np.repeat(row_mask, 3)
    g_kept = gradient_op.tocsr()[kept]
    # anchoring check runs on the full vertex graph so pinned neighbours count
    full_normal = (g_kept.T @ g_kept).tocsr()
    _require_anchored(full_normal, ~free, "pinned solve")

    g_free = g_kept[:, free]
    g_pinned = g_kept[:, ~free]
    normal = (g_free.T @ g_free).tocsc()
    rhs = np.asarray(g_free.T @ (targets[kept] - g_pinned @ boundary[~free]))
    solution = _factorized_solve(normal, rhs)
    out = boundary.copy()
    out[free] = solution
    return out


def stitch(mesh: TriangleMesh,
           samples: list[ViewSample] | tuple[ViewSample, ...],
           reference_view: int = 0,
           screen_weight: float = 0.1,
           gradient_op: sparse.spmatrix | None = None) -> np.ndarray:
    """Merge per-view colour samples into one seamless per-vertex signal.

    Each triangle takes its target gradient from the view owning it (largest
    triangle weight); triangles no view covers ask for zero gradient, which
    fills them smoothly.  Absolute level comes from softly anchoring the
    vertices owned by the reference view to that view's colours.

    Parameters
    ----------
    mesh : TriangleMesh
    samples : list of ViewSample
        One entry per view, all on the mesh's vertex set.
    reference_view : int
        Index into ``samples`` of the view fixing overall colour.
    screen_weight : float
        Soft anchor weight; small values preserve gradients, large values
        pin the reference colours.
    gradient_op : sparse matrix, optional
        Pass a prebuilt operator to amortise assembly across calls.

    Returns
    -------
    (n, c) stitched signal.
    """
    if not 0 <= reference_view < len(samples):
        raise ValueError(f"reference_view {reference_view} out of range")
    for s in samples:
        if s.colors.shape[0] != mesh.n_vertices:
            raise DimensionMismatchError("sample colour rows do not match the mesh")
        if s.triangle_weight.shape[0] != mesh.n_triangles:
            raise DimensionMismatchError("sample triangle weights do not match the mesh")
    triangle_owner, vertex_owner = build_selections(samples)
    anchors = vertex_owner == reference_view
    if not anchors.any():
        raise NoReferenceCoverageError(
            f"reference view {reference_view} owns no vertex")

    if gradient_op is None:
        gradient_op = build_gradient_operator(mesh)
    c = samples[0].colors.shape[1]
    targets = np.zeros((3 * mesh.n_triangles, c))
    for k, sample in enumerate(samples):
        owned = np.repeat(triangle_owner == k, 3)
        if owned.any():
            targets[owned] = (gradient_op @ sample.colors)[owned]

    return solve_screened_poisson(
        gradient_op,
        targets,
        np.ones(mesh.n_triangles, dtype=bool),
        anchors,
        samples[reference_view].colors[anchors],
        screen_weight,
    )
