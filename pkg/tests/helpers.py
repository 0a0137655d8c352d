"""Shared synthetic geometry and naive oracle implementations for tests.

Oracles here are written independently of the package internals: plain
loops and dense linear algebra, slow but obviously correct.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from facealbedo.mesh import TriangleMesh


def icosphere(subdivisions: int = 2) -> TriangleMesh:
    """Unit icosphere with consistent outward winding and a bilateral
    symmetry map about the x = 0 plane (the vertex set is mirror-closed)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]

    def midpoint(cache, a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdivisions):
        cache: dict = {}
        new_faces = []
        for a, b, c in faces:
            ab = midpoint(cache, a, b)
            bc = midpoint(cache, b, c)
            ca = midpoint(cache, c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    vertices = np.array(verts)
    triangles = np.array(faces, dtype=np.int64)
    sym = mirror_map(vertices, axis=0)
    return TriangleMesh(vertices, triangles, symmetry_map=sym)


def mirror_map(vertices: np.ndarray, axis: int = 0, tol: float = 1e-9) -> np.ndarray:
    """Permutation sending each vertex to its mirror about vertices[axis]=0."""
    mirrored = vertices.copy()
    mirrored[:, axis] = -mirrored[:, axis]
    tree = cKDTree(vertices)
    dist, idx = tree.query(mirrored)
    assert dist.max() < tol, "vertex set is not mirror-closed"
    return idx.astype(np.int64)


def random_hull_mesh(rng: np.random.Generator, n_points: int = 60) -> TriangleMesh:
    """Watertight triangulation of random points on a sphere, consistently
    wound outward.  Generic positions: no degenerate triangles."""
    pts = rng.standard_normal((n_points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= 1.0 + 0.05 * rng.random(n_points)[:, None]
    hull = ConvexHull(pts)
    tri = hull.simplices.copy()
    # orient each simplex so its geometric normal matches the hull's
    # outward facet normal
    p0, p1, p2 = (hull.points[tri[:, k]] for k in range(3))
    geo = np.cross(p1 - p0, p2 - p0)
    flip = np.einsum("ij,ij->i", geo, hull.equations[:, :3]) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    # drop interior points the hull never references
    used = np.unique(tri)
    remap = np.full(n_points, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return TriangleMesh(hull.points[used], remap[tri])


def look_at_camera(center, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0),
                   focal=140.0, size=(64, 64), distortion=(0.0, 0.0)):
    """Camera at `center` looking at `target`, image y pointing down."""
    from facealbedo.camera import CameraView

    center = np.asarray(center, dtype=float)
    forward = np.asarray(target, dtype=float) - center
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    r = np.stack([right, down, forward])
    if np.linalg.det(r) < 0:
        r[0] = -r[0]
    t = -r @ center
    w, h = size
    k = np.array([[focal, 0.0, (w - 1) / 2.0],
                  [0.0, focal, (h - 1) / 2.0],
                  [0.0, 0.0, 1.0]])
    return CameraView(k, r, t, distortion, size)


def brute_force_visibility(mesh: TriangleMesh, camera) -> np.ndarray:
    """Per-vertex python-loop ray test; the slow independent oracle."""
    from facealbedo.camera import project_vertices

    pixels, depth = project_vertices(mesh, camera)
    w, h = camera.image_size
    origin = camera.center
    out = np.zeros(mesh.n_vertices, dtype=bool)
    for i in range(mesh.n_vertices):
        if depth[i] <= 0:
            continue
        if not (0 <= pixels[i, 0] <= w - 1 and 0 <= pixels[i, 1] <= h - 1):
            continue
        d = mesh.vertices[i] - origin
        blocked = False
        for a, b, c in mesh.vertices[mesh.triangles]:
            e1, e2 = b - a, c - a
            pvec = np.cross(d, e2)
            det = e1 @ pvec
            if abs(det) < 1e-300:
                continue
            tvec = origin - a
            u = (tvec @ pvec) / det
            if u < -1e-9:
                continue
            qvec = np.cross(tvec, e1)
            v = (d @ qvec) / det
            if v < -1e-9 or u + v > 1 + 1e-9:
                continue
            tpar = (e2 @ qvec) / det
            if 1e-9 <= tpar <= 1 - 1e-6:
                blocked = True
                break
        out[i] = not blocked
    return out


def area_weighted_normals_oracle(mesh: TriangleMesh) -> np.ndarray:
    """Loop implementation of area-weighted vertex normals."""
    acc = np.zeros_like(mesh.vertices)
    for a, b, c in mesh.triangles:
        cross = np.cross(mesh.vertices[b] - mesh.vertices[a],
                         mesh.vertices[c] - mesh.vertices[a])
        for idx in (a, b, c):
            acc[idx] += cross
    norms = np.linalg.norm(acc, axis=1, keepdims=True)
    keep = norms[:, 0] > 0
    acc[keep] /= norms[keep]
    return acc


def dense_gradient_oracle(mesh: TriangleMesh) -> np.ndarray:
    """(3t, n) dense gradient operator assembled one triangle at a time."""
    n = mesh.n_vertices
    t = mesh.n_triangles
    out = np.zeros((3 * t, n))
    for j in range(t):
        a, b, c = mesh.triangles[j]
        pa, pb, pc = mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]
        cross = np.cross(pb - pa, pc - pa)
        double_area = np.linalg.norm(cross)
        nrm = cross / double_area
        grads = {
            a: np.cross(nrm, pc - pb) / double_area,
            b: np.cross(nrm, pa - pc) / double_area,
            c: np.cross(nrm, pb - pa) / double_area,
        }
        for col, vec in grads.items():
            for k in range(3):
                out[3 * j + k, col] += vec[k]
    return out


def rasterize_vertex_colors(mesh: TriangleMesh, camera, colors,
                            background: float = 0.0) -> np.ndarray:
    """Z-buffered software raster of per-vertex colours, (h, w, c) float.

    Colour is interpolated linearly in screen space, so reading the image
    back at a projected vertex returns that vertex's colour (up to the
    pixel grid).
    """
    from facealbedo.camera import project_vertices

    colors = np.asarray(colors, dtype=float)
    w, h = camera.image_size
    pixels, depth = project_vertices(mesh, camera)
    image = np.full((h, w, colors.shape[1]), background, dtype=float)
    zbuf = np.full((h, w), np.inf)
    front = (depth[mesh.triangles] > 0).all(axis=1)
    for tri in mesh.triangles[front]:
        (ax, ay), (bx, by), (cx, cy) = pixels[tri]
        det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
        if abs(det) < 1e-12:
            continue
        xmin = max(int(np.floor(min(ax, bx, cx))), 0)
        xmax = min(int(np.ceil(max(ax, bx, cx))), w - 1)
        ymin = max(int(np.floor(min(ay, by, cy))), 0)
        ymax = min(int(np.ceil(max(ay, by, cy))), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        gx, gy = np.meshgrid(np.arange(xmin, xmax + 1),
                             np.arange(ymin, ymax + 1))
        l1 = ((gx - ax) * (cy - ay) - (gy - ay) * (cx - ax)) / det
        l2 = ((bx - ax) * (gy - ay) - (by - ay) * (gx - ax)) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not inside.any():
            continue
        z = l0 * depth[tri[0]] + l1 * depth[tri[1]] + l2 * depth[tri[2]]
        window = zbuf[ymin:ymax + 1, xmin:xmax + 1]
        closer = inside & (z < window)
        window[closer] = z[closer]
        shaded = (l0[..., None] * colors[tri[0]]
                  + l1[..., None] * colors[tri[1]]
                  + l2[..., None] * colors[tri[2]])
        image[ymin:ymax + 1, xmin:xmax + 1][closer] = shaded[closer]
    return image


def sphere_camera_rig(radius: float = 6.0, focal: float = 370.0,
                      size: tuple[int, int] = (160, 160)) -> list:
    """Six axis-aligned cameras around a unit sphere.

    The octahedral directions leave every sphere point within 55 degrees
    of some camera axis, comfortably inside the contour down-weighting
    band, so no vertex is unseen by all views."""
    directions = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
                           [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
                           [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    return [look_at_camera(d * radius,
                           up=(0.0, 0.0, 1.0) if abs(d[1]) > 0.9 else (0.0, 1.0, 0.0),
                           focal=focal, size=size)
            for d in directions]


def smooth_sphere_maps(rng: np.random.Generator, vertices: np.ndarray,
                       count: int, low: float = 0.2, high: float = 0.8,
                       amplitude: float = 0.15) -> list[np.ndarray]:
    """Per-vertex colour maps that vary smoothly over a sphere and stay
    well inside (low, high) so every colour-space round-trip is safe."""
    x, y, z = vertices.T
    basis = np.stack([np.ones_like(x), x, y, z, x * y, y * z, x * z], axis=1)
    centre = (low + high) / 2.0
    maps = []
    for _ in range(count):
        coeff = rng.normal(scale=amplitude / basis.shape[1], size=(basis.shape[1], 3))
        coeff[0] = centre + rng.uniform(-amplitude / 4, amplitude / 4, 3)
        maps.append(np.clip(basis @ coeff, low, high))
    return maps


def write_capture_subject(root, subject_id: str, mesh: TriangleMesh,
                          cameras, diffuse, specular, *,
                          transform=None, encode_gamma: bool = False,
                          iso: float | None = None,
                          mask_indices=None) -> dict:
    """Write one subject's mesh, views, and images; return its manifest entry.

    ``transform`` bakes raw camera values into the images (the pipeline's
    calibration must undo it); ``encode_gamma``/``iso`` emulate an external
    source whose maps are stored as gamma(albedo * iso).  Images are PFM so
    no quantisation enters the comparison.
    """
    from facealbedo import io as fio
    from facealbedo.color import gamma_encode

    subject_dir = root / subject_id
    subject_dir.mkdir(parents=True, exist_ok=True)
    fio.save_mesh_obj(subject_dir / "mesh.obj", mesh)

    def encode(values):
        if iso is not None:
            values = values * iso
        if encode_gamma:
            values = gamma_encode(values)
        if transform is not None:
            values = values @ np.linalg.inv(transform).T
        return values

    entry = {"id": subject_id, "mesh": f"{subject_id}/mesh.obj", "views": []}
    for k, camera in enumerate(cameras):
        fio.save_camera(subject_dir / f"view_{k}.cam", camera)
        for kind, colors in (("diffuse", diffuse), ("specular", specular)):
            image = rasterize_vertex_colors(mesh, camera, encode(colors))
            fio.save_image(subject_dir / f"view_{k}_{kind}.pfm", image)
        entry["views"].append({
            "camera": f"{subject_id}/view_{k}.cam",
            "diffuse": f"{subject_id}/view_{k}_diffuse.pfm",
            "specular": f"{subject_id}/view_{k}_specular.pfm",
        })
    if iso is not None:
        entry["iso"] = iso
    if encode_gamma:
        entry["source"] = "external"
    if mask_indices is not None:
        fio.save_mask(subject_dir / "artefacts.msk", mask_indices)
        entry["mask"] = f"{subject_id}/artefacts.msk"
    return entry


def write_flat_illuminant(path, scale: float = 1.0):
    """Flat-spectrum illuminant CSV on the default grid."""
    from facealbedo import io as fio
    from facealbedo.color import DEFAULT_GRID, SpectralCurve

    curve = SpectralCurve(DEFAULT_GRID, np.full(DEFAULT_GRID.size, scale))
    fio.save_spectral_curve(path, curve)
    return curve


def write_observer_sensitivity(path):
    """Camera sensitivity equal to the standard observer, so the fitted
    raw-to-XYZ transform is the identity and the full calibration is
    known in closed form."""
    from facealbedo import io as fio
    from facealbedo.color import cie_1931_observer

    sens = cie_1931_observer()
    fio.save_spectral_sensitivity(path, sens)
    return sens
