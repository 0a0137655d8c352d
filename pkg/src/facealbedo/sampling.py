"""Per-view vertex visibility, sampling weights and image lookup.

Turning one calibrated photograph into a :class:`~facealbedo.poisson.ViewSample`
takes three steps: decide which vertices the camera actually sees (ray
casting against the mesh itself), weight the trustworthy ones by how
frontally the surface faces the camera (zeroing a band around the occluding
contour, where a projected vertex would blend foreground and background),
and read colours out of the image with bilinear interpolation.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .camera import CameraView, project_vertices
from .errors import DimensionMismatchError
from .mesh import TriangleMesh, vertex_normals
from .poisson import ViewSample

# a hit at parameter >= 1 - RAY_EPS is the target vertex itself
RAY_EPS = 1e-6
# rays grazing a shared edge must not slip between the two triangles
BARY_EPS = 1e-9
_CHUNK = 128


def compute_visibility(mesh: TriangleMesh, camera: CameraView) -> np.ndarray:
    """Boolean (n,) array: vertex projects inside the image, in front of the
    camera, with no triangle blocking the segment from the camera centre."""
    pixels, depth = project_vertices(mesh, camera)
    w, h = camera.image_size
    visible = (
        (depth > 0)
        & (pixels[:, 0] >= 0.0) & (pixels[:, 0] <= w - 1.0)
        & (pixels[:, 1] >= 0.0) & (pixels[:, 1] <= h - 1.0)
    )
    candidates = np.flatnonzero(visible)
    if candidates.size:
        blocked = _segments_blocked(camera.center, mesh.vertices[candidates],
                                    mesh.vertices, mesh.triangles)
        visible[candidates[blocked]] = False
    return visible


def _segments_blocked(origin: np.ndarray, endpoints: np.ndarray,
                      vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Moeller-Trumbore over all triangles, chunked over endpoints.

    A segment is blocked when a triangle intersects it at a parameter
    within [1e-9, 1 - 1e-6]; the upper margin keeps the endpoint's own
    incident triangles from occluding it.  Barycentric tests carry a small
    tolerance so a ray through a shared edge registers on each neighbour
    instead of slipping between them.
    """
    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    tvec = origin[None, :] - v0          # (t, 3), shared by all segments
    qvec = np.cross(tvec, e1)            # (t, 3)
    e2q = np.einsum("tk,tk->t", e2, qvec)
    blocked = np.zeros(endpoints.shape[0], dtype=bool)
    for start in range(0, endpoints.shape[0], _CHUNK):
        d = endpoints[start:start + _CHUNK] - origin[None, :]  # (m, 3)
        pvec = np.cross(d[:, None, :], e2[None, :, :])         # (m, t, 3)
        det = np.einsum("mtk,tk->mt", pvec, e1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_det = 1.0 / det
            u = np.einsum("tk,mtk->mt", tvec, pvec) * inv_det
            v = np.einsum("mk,tk->mt", d, qvec) * inv_det
            tpar = e2q[None, :] * inv_det
            hits = (
                (np.abs(det) > 1e-300)
                & (u >= -BARY_EPS) & (v >= -BARY_EPS) & (u + v <= 1.0 + BARY_EPS)
                & (tpar >= 1e-9) & (tpar <= 1.0 - RAY_EPS)
            )
        blocked[start:start + _CHUNK] = hits.any(axis=1)
    return blocked


def compute_weights(mesh: TriangleMesh, camera: CameraView,
                    visibility: np.ndarray,
                    boundary_threshold_px: float = 3.0
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex and per-triangle sampling confidence for one view.

    Weight is the clamped cosine between the outward vertex normal and the
    direction to the camera; invisible vertices and vertices projecting
    within ``boundary_threshold_px`` pixels of the occluding contour get
    zero.  Triangle weight is the minimum over the triangle's corners.
    """
    visibility = np.asarray(visibility, dtype=bool).reshape(-1)
    if visibility.shape != (mesh.n_vertices,):
        raise DimensionMismatchError("visibility length does not match the mesh")
    normals = vertex_normals(mesh)
    to_cam = camera.center[None, :] - mesh.vertices
    to_cam /= np.maximum(np.linalg.norm(to_cam, axis=1, keepdims=True), 1e-300)
    weight = np.clip(np.einsum("ij,ij->i", normals, to_cam), 0.0, None)
    weight[~visibility] = 0.0

    if boundary_threshold_px > 0 and weight.any():
        contour_dist = _contour_distance(mesh, camera)
        if contour_dist is not None:
            pixels, _ = project_vertices(mesh, camera)
            w, h = camera.image_size
            px = np.clip(np.rint(pixels[:, 0]), 0, w - 1).astype(np.int64)
            py = np.clip(np.rint(pixels[:, 1]), 0, h - 1).astype(np.int64)
            near = contour_dist[py, px] <= boundary_threshold_px
            weight[near & visibility] = 0.0

    triangle_weight = weight[mesh.triangles].min(axis=1)
    return weight, triangle_weight


def _coverage_raster(mesh: TriangleMesh, camera: CameraView) -> np.ndarray:
    """(h, w) boolean raster of pixels whose centre lies inside some
    projected triangle (front-of-camera triangles only)."""
    w, h = camera.image_size
    pixels, depth = project_vertices(mesh, camera)
    cover = np.zeros((h, w), dtype=bool)
    tri = mesh.triangles
    front = (depth[tri] > 0).all(axis=1)
    p = pixels[tri]  # (t, 3, 2)
    for a, b, c in p[front]:
        xmin = max(int(np.ceil(min(a[0], b[0], c[0]))), 0)
        xmax = min(int(np.floor(max(a[0], b[0], c[0]))), w - 1)
        ymin = max(int(np.ceil(min(a[1], b[1], c[1]))), 0)
        ymax = min(int(np.floor(max(a[1], b[1], c[1]))), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        xs = np.arange(xmin, xmax + 1)
        ys = np.arange(ymin, ymax + 1)
        gx, gy = np.meshgrid(xs, ys)
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(det) < 1e-300:
            continue
        l1 = ((gx - a[0]) * (c[1] - a[1]) - (gy - a[1]) * (c[0] - a[0])) / det
        l2 = ((b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0])) / det
        inside = (l1 >= 0) & (l2 >= 0) & (l1 + l2 <= 1)
        cover[ymin:ymax + 1, xmin:xmax + 1] |= inside
    return cover


def _contour_distance(mesh: TriangleMesh, camera: CameraView) -> np.ndarray | None:
    """Pixel distance to the occluding contour, or None when there is none.

    The contour is the inner boundary of the coverage raster; the image
    border does not count (erosion runs with border_value=1), so a mesh
    extending past the frame is not penalised at the frame's edge.
    """
    cover = _coverage_raster(mesh, camera)
    if not cover.any():
        return None
    eroded = ndimage.binary_erosion(cover, structure=np.ones((3, 3), bool),
                                    border_value=1)
    contour = cover & ~eroded
    if not contour.any():
        return None
    return ndimage.distance_transform_edt(~contour)


def sample_view(mesh: TriangleMesh, camera: CameraView, image: np.ndarray,
                visibility: np.ndarray) -> np.ndarray:
    """Bilinear image lookup at the projected position of each visible
    vertex; invisible vertices get zero rows.

    ``image`` is (h, w, c) float with pixel centres at integer coordinates.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise DimensionMismatchError("image must be (h, w, c)")
    h, w = image.shape[:2]
    if (w, h) != camera.image_size:
        raise DimensionMismatchError(
            f"image is {w}x{h} but the camera expects "
            f"{camera.image_size[0]}x{camera.image_size[1]}")
    visibility = np.asarray(visibility, dtype=bool).reshape(-1)
    pixels, _ = project_vertices(mesh, camera)
    out = np.zeros((mesh.n_vertices, image.shape[2]))
    idx = np.flatnonzero(visibility)
    if idx.size == 0:
        return out
    x = np.clip(pixels[idx, 0], 0.0, w - 1.0)
    y = np.clip(pixels[idx, 1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, w - 2) if w > 1 else np.zeros(idx.size, np.int64)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, h - 2) if h > 1 else np.zeros(idx.size, np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    out[idx] = (
        image[y0, x0] * (1 - fx) * (1 - fy)
        + image[y0, x1] * fx * (1 - fy)
        + image[y1, x0] * (1 - fx) * fy
        + image[y1, x1] * fx * fy
    )
    return out


def make_view_sample(mesh: TriangleMesh, camera: CameraView, image: np.ndarray,
                     boundary_threshold_px: float = 3.0) -> ViewSample:
    """Full per-view extraction: visibility, weights, colour lookup."""
    visibility = compute_visibility(mesh, camera)
    weight, triangle_weight = compute_weights(mesh, camera, visibility,
                                              boundary_threshold_px)
    colors = sample_view(mesh, camera, image, visibility)
    colors[weight == 0.0] = 0.0
    return ViewSample(colors, weight, triangle_weight)
