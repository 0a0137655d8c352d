"""Pinhole cameras with radial distortion, projection and DLT resection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import rq
from scipy.spatial.transform import Rotation

from .errors import DegenerateConfigurationError, DimensionMismatchError
from .validation import as_float_matrix

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class CameraView:
    """Calibrated view: intrinsics, pose, two-term radial distortion.

    The camera maps a world point p to camera coordinates
    ``x = R p + t``; after perspective division the normalised coordinates
    are distorted radially with ``1 + k1 r^2 + k2 r^4`` and pushed through
    the intrinsic matrix.  Pixel coordinates address pixel centres, origin
    at the top-left pixel.

    Attributes
    ----------
    intrinsics : (3, 3) upper-triangular, positive focal lengths
    rotation : (3, 3) with R R^T = I and det R = +1 (to 1e-9)
    translation : (3,)
    distortion : (k1, k2)
    image_size : (width, height) in pixels
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    distortion: tuple[float, float] = (0.0, 0.0)
    image_size: tuple[int, int] = (0, 0)

    def __post_init__(self):
        k = as_float_matrix(self.intrinsics, cols=3, name="intrinsics")
        r = as_float_matrix(self.rotation, cols=3, name="rotation")
        if k.shape != (3, 3) or r.shape != (3, 3):
            raise DimensionMismatchError("intrinsics and rotation must be 3x3")
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if t.shape != (3,):
            raise DimensionMismatchError("translation must have 3 entries")
        if np.abs(r @ r.T - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must be proper (det +1)")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if abs(k[1, 0]) > 0 or abs(k[2, 0]) > 0 or abs(k[2, 1]) > 0:
            raise ValueError("intrinsics must be upper-triangular")
        if abs(k[2, 2] - 1.0) > 1e-12:
            raise ValueError("intrinsics must be normalised (K[2,2] = 1)")
        dist = (float(self.distortion[0]), float(self.distortion[1]))
        w, h = self.image_size
        if int(w) <= 0 or int(h) <= 0:
            raise ValueError("image_size must be positive")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "distortion", dist)
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation


def project_points(points: np.ndarray, camera: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Project world points to pixel coordinates.

    Returns
    -------
    pixels : (n, 2)
        Pixel coordinates (may fall outside the image, or be meaningless
        where depth <= 0; callers filter on depth).
    depth : (n,)
        Distance along the optical axis (camera z).
    """
    pts = as_float_matrix(points, cols=3, name="points")
    cam = pts @ camera.rotation.T + camera.translation
    depth = cam[:, 2].copy()
    safe = np.where(np.abs(depth) > 1e-300, depth, 1e-300)
    xn = cam[:, 0] / safe
    yn = cam[:, 1] / safe
    k1, k2 = camera.distortion
    r2 = xn * xn + yn * yn
    radial = 1.0 + k1 * r2 + k2 * r2 * r2
    xd = xn * radial
    yd = yn * radial
    k = camera.intrinsics
    px = k[0, 0] * xd + k[0, 1] * yd + k[0, 2]
    py = k[1, 1] * yd + k[1, 2]
    return np.stack([px, py], axis=1), depth


def project_vertices(mesh, camera: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Project mesh vertices; see :func:`project_points`."""
    return project_points(mesh.vertices, camera)


def _normalise_2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centroid = x.mean(axis=0)
    d = np.linalg.norm(x - centroid, axis=1).mean()
    s = np.sqrt(2.0) / max(d, 1e-300)
    t = np.array([[s, 0, -s * centroid[0]],
                  [0, s, -s * centroid[1]],
                  [0, 0, 1.0]])
    xh = np.column_stack([x, np.ones(len(x))]) @ t.T
    return xh, t


def _normalise_3d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centroid = x.mean(axis=0)
    d = np.linalg.norm(x - centroid, axis=1).mean()
    s = np.sqrt(3.0) / max(d, 1e-300)
    t = np.eye(4)
    t[:3, :3] *= s
    t[:3, 3] = -s * centroid
    xh = np.column_stack([x, np.ones(len(x))]) @ t.T
    return xh, t


def _decompose_projection(p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split P ~ K [R | t] with K upper-triangular, diag(K) > 0, det R = +1."""
    m = p[:, :3]
    if np.linalg.det(m) < 0:
        p = -p
        m = p[:, :3]
    k, r = rq(m)
    signs = np.sign(np.diag(k))
    signs[signs == 0] = 1.0
    d = np.diag(signs)
    k = k @ d
    r = d @ r
    t = np.linalg.solve(k, p[:, 3])
    k = k / k[2, 2]
    return k, r, t


def calibrate_camera_dlt(points3d, points2d, image_size: tuple[int, int],
                         refine_distortion: bool = False,
                         max_iterations: int = 50,
                         step_tolerance: float = 1e-10) -> CameraView:
    """Resect a camera from 3D-2D correspondences via the normalised DLT.

    Needs at least 6 correspondences in general (non-coplanar) position.
    With ``refine_distortion`` a Gauss-Newton pass re-estimates all
    intrinsics, the pose and the two radial coefficients by minimising
    reprojection error.

    Raises
    ------
    DegenerateConfigurationError
        If the design matrix is rank-deficient (e.g. coplanar points).
    """
    x3 = as_float_matrix(points3d, cols=3, name="points3d")
    x2 = as_float_matrix(points2d, cols=2, name="points2d")
    if x3.shape[0] != x2.shape[0]:
        raise DimensionMismatchError("points3d and points2d differ in length")
    m = x3.shape[0]
    if m < 6:
        raise ValueError("need at least 6 correspondences")

    xh2, t2 = _normalise_2d(x2)
    xh3, t3 = _normalise_3d(x3)
    a = np.zeros((2 * m, 12))
    zeros4 = np.zeros(4)
    for i in range(m):
        big_x = xh3[i]
        u, v, _ = xh2[i]
        a[2 * i] = np.concatenate([zeros4, -big_x, v * big_x])
        a[2 * i + 1] = np.concatenate([big_x, zeros4, -u * big_x])
    _, s, vt = np.linalg.svd(a)
    if s[-2] <= 1e-9 * s[0]:
        raise DegenerateConfigurationError(
            "correspondences are degenerate (rank < 11)")
    p = vt[-1].reshape(3, 4)
    p = np.linalg.inv(t2) @ p @ t3
    k, r, t = _decompose_projection(p)
    view = CameraView(k, r, t, (0.0, 0.0), image_size)
    if refine_distortion:
        view = _refine_camera(view, x3, x2, max_iterations, step_tolerance)
    return view


def _pack(view: CameraView) -> np.ndarray:
    k = view.intrinsics
    rv = Rotation.from_matrix(view.rotation).as_rotvec()
    return np.concatenate([
        [k[0, 0], k[1, 1], k[0, 1], k[0, 2], k[1, 2]],
        rv, view.translation, view.distortion,
    ])


def _unpack(theta: np.ndarray, image_size) -> CameraView:
    fx, fy, skew, cx, cy = theta[:5]
    k = np.array([[fx, skew, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    r = Rotation.from_rotvec(theta[5:8]).as_matrix()
    return CameraView(k, r, theta[8:11], (theta[11], theta[12]), image_size)


def _refine_camera(view: CameraView, x3: np.ndarray, x2: np.ndarray,
                   max_iterations: int, step_tolerance: float) -> CameraView:
    """Gauss-Newton over 13 parameters with central-difference Jacobians."""

    def residual(theta):
        cam = _unpack(theta, view.image_size)
        proj, _ = project_points(x3, cam)
        return (proj - x2).ravel()

    theta = _pack(view)
    for _ in range(max_iterations):
        r0 = residual(theta)
        jac = np.empty((r0.size, theta.size))
        for j in range(theta.size):
            h = 1e-6 * max(1.0, abs(theta[j]))
            plus = theta.copy()
            minus = theta.copy()
            plus[j] += h
            minus[j] -= h
            jac[:, j] = (residual(plus) - residual(minus)) / (2.0 * h)
        step, *_ = np.linalg.lstsq(jac, -r0, rcond=None)
        theta = theta + step
        if np.linalg.norm(step) < step_tolerance:
            break
    return _unpack(theta, view.image_size)
