"""File formats.

Everything here is deliberately plain: ASCII for meshes, cameras, masks,
spectra, and 3x3 transforms; a small binary container for per-vertex
signals; PNG (8/16-bit, treated as linear) and PFM for images; a directory
of raw little-endian float64 matrices plus a JSON manifest for models.
All writers are byte-deterministic for identical inputs.
"""

from __future__ import annotations

import json
import shutil
import struct
from pathlib import Path

import cv2
import numpy as np

from .camera import CameraView
from .color import SpectralCurve, SpectralSensitivity
from .errors import DimensionMismatchError, FaceAlbedoError, ManifestError
from .mesh import TriangleMesh
from .model import PAIRING_VARIANTS, PairedAlbedoPCA
from .validation import check_signal

SIGNAL_MAGIC = b"VSIG0001" + bytes(8)
MODEL_MANIFEST = "model.json"
MODEL_FORMAT = "facealbedo-model"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


# ----------------------------------------------------------------- meshes

def load_mesh_obj(path, symmetry_map=None) -> TriangleMesh:
    """Read the v/f subset of ASCII OBJ (triangles only, 1-based indices)."""
    vertices, triangles = [], []
    path = Path(path)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0] not in ("v", "f"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise FaceAlbedoError(f"{path}:{lineno}: malformed vertex line")
            vertices.append([float(x) for x in parts[1:4]])
        else:
            corners = [token.split("/")[0] for token in parts[1:]]
            if len(corners) != 3:
                raise FaceAlbedoError(
                    f"{path}:{lineno}: only triangle faces are supported")
            triangles.append([int(c) - 1 for c in corners])
    if not vertices or not triangles:
        raise FaceAlbedoError(f"{path}: no usable v/f lines")
    return TriangleMesh(np.array(vertices, dtype=np.float64),
                        np.array(triangles, dtype=np.int64),
                        symmetry_map=symmetry_map)


def save_mesh_obj(path, mesh: TriangleMesh) -> None:
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def load_symmetry_map(path, n_vertices: int) -> np.ndarray:
    """Two-column ASCII involution pairs; midline vertices appear as (i, i).

    Every vertex must be covered exactly once.
    """
    pairs = np.loadtxt(path, dtype=np.int64, ndmin=2)
    if pairs.size and pairs.shape[1] != 2:
        raise FaceAlbedoError(f"{path}: expected two columns")
    sym = np.full(n_vertices, -1, dtype=np.int64)
    for i, j in pairs:
        if not (0 <= i < n_vertices and 0 <= j < n_vertices):
            raise FaceAlbedoError(f"{path}: pair ({i}, {j}) out of range")
        for a, b in ((i, j), (j, i)):
            if sym[a] not in (-1, b):
                raise FaceAlbedoError(f"{path}: vertex {a} paired twice")
            sym[a] = b
    uncovered = np.flatnonzero(sym < 0)
    if uncovered.size:
        raise FaceAlbedoError(
            f"{path}: {uncovered.size} vertices missing (first: {uncovered[0]})")
    return sym


def save_symmetry_map(path, symmetry_map) -> None:
    sym = np.asarray(symmetry_map, dtype=np.int64).reshape(-1)
    if not np.array_equal(sym[sym], np.arange(sym.size)):
        raise ValueError("symmetry map is not an involution")
    lines = [f"{i} {sym[i]}" for i in range(sym.size) if i <= sym[i]]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- signals

def save_vertex_signal(path, signal) -> None:
    signal = check_signal(signal, channels=None)
    with open(path, "wb") as fh:
        fh.write(SIGNAL_MAGIC)
        fh.write(struct.pack("<QQ", *signal.shape))
        fh.write(np.ascontiguousarray(signal, dtype="<f8").tobytes())


def load_vertex_signal(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 32 or raw[:16] != SIGNAL_MAGIC:
        raise FaceAlbedoError(f"{path}: not a vertex-signal file")
    n, c = struct.unpack("<QQ", raw[16:32])
    expected = 32 + 8 * n * c
    if len(raw) != expected:
        raise FaceAlbedoError(
            f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    return np.frombuffer(raw, dtype="<f8", offset=32).reshape(n, c).copy()


# ----------------------------------------------------------------- cameras

def save_camera(path, camera: CameraView) -> None:
    k = camera.intrinsics.reshape(-1)
    r = camera.rotation.reshape(-1)
    t = camera.translation
    lines = [
        " ".join(_fmt(x) for x in k[0:3]),
        " ".join(_fmt(x) for x in k[3:6]),
        " ".join(_fmt(x) for x in k[6:9]),
        " ".join(_fmt(x) for x in r[0:3]),
        " ".join(_fmt(x) for x in r[3:6]),
        " ".join(_fmt(x) for x in r[6:9]),
        " ".join(_fmt(x) for x in t),
        " ".join(_fmt(x) for x in camera.distortion),
        f"{int(camera.image_size[0])} {int(camera.image_size[1])}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_camera(path) -> CameraView:
    tokens = Path(path).read_text().split()
    if len(tokens) != 25:
        raise FaceAlbedoError(f"{path}: expected 25 numbers, got {len(tokens)}")
    values = [float(x) for x in tokens]
    return CameraView(
        intrinsics=np.array(values[0:9]).reshape(3, 3),
        rotation=np.array(values[9:18]).reshape(3, 3),
        translation=np.array(values[18:21]),
        distortion=(values[21], values[22]),
        image_size=(int(values[23]), int(values[24])),
    )


# ------------------------------------------------------------------- masks

def load_mask(path) -> np.ndarray:
    """ASCII list of 0-based vertex indices, one or more per line."""
    tokens = Path(path).read_text().split()
    if not tokens:
        return np.array([], dtype=np.int64)
    indices = np.array([int(t) for t in tokens], dtype=np.int64)
    if (indices < 0).any():
        raise FaceAlbedoError(f"{path}: negative vertex index")
    return indices


def save_mask(path, indices) -> None:
    indices = np.unique(np.asarray(indices, dtype=np.int64).reshape(-1))
    Path(path).write_text("".join(f"{i}\n" for i in indices))


# ------------------------------------------------------------------ images

def load_image(path) -> np.ndarray:
    """PNG (8/16-bit, mapped to [0, 1]) or PFM (raw floats), as float64.

    Colour images come back (h, w, 3) RGB; grayscale (h, w).
    """
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return _load_pfm(path)
    flat = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if flat is None:
        raise FaceAlbedoError(f"{path}: unreadable image")
    if flat.ndim == 3:
        if flat.shape[2] == 4:
            flat = flat[:, :, :3]
        flat = flat[:, :, ::-1]  # BGR to RGB
    scale = 65535.0 if flat.dtype == np.uint16 else 255.0
    return np.ascontiguousarray(flat, dtype=np.float64) / scale


def save_image(path, image, bit_depth: int = 16) -> None:
    """Write PNG (values clipped to [0, 1]) or PFM (raw float) by suffix."""
    path = Path(path)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim not in (2, 3) or (image.ndim == 3 and image.shape[2] != 3):
        raise DimensionMismatchError("image must be (h, w) or (h, w, 3)")
    if path.suffix.lower() == ".pfm":
        _save_pfm(path, image)
        return
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    scale = 255 if bit_depth == 8 else 65535
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    quantised = np.rint(np.clip(image, 0.0, 1.0) * scale).astype(dtype)
    if quantised.ndim == 3:
        quantised = quantised[:, :, ::-1]
    if not cv2.imwrite(str(path), quantised):
        raise FaceAlbedoError(f"{path}: image write failed")


def _load_pfm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header not in (b"PF", b"Pf"):
            raise FaceAlbedoError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if header == b"PF" else 1
        data = np.frombuffer(fh.read(4 * width * height * channels), dtype=dtype)
        if data.size != width * height * channels:
            raise FaceAlbedoError(f"{path}: truncated PFM payload")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return data.reshape(shape)[::-1].astype(np.float64)  # rows are bottom-up


def _save_pfm(path: Path, image: np.ndarray) -> None:
    header = b"PF" if image.ndim == 3 else b"Pf"
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")  # negative scale: little-endian
        fh.write(np.ascontiguousarray(image[::-1], dtype="<f4").tobytes())


# ------------------------------------------------------------------ spectra

def load_spectral_curve(path) -> SpectralCurve:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != 2:
        raise FaceAlbedoError(f"{path}: expected 2 columns, got {table.shape[1]}")
    return SpectralCurve(table[:, 0], table[:, 1])


def save_spectral_curve(path, curve: SpectralCurve) -> None:
    lines = ["wavelength_nm,value"]
    lines += [f"{_fmt(w)},{_fmt(v)}"
              for w, v in zip(curve.wavelengths, curve.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_spectral_sensitivity(path) -> SpectralSensitivity:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != 4:
        raise FaceAlbedoError(f"{path}: expected 4 columns, got {table.shape[1]}")
    return SpectralSensitivity(table[:, 0], table[:, 1:])


def save_spectral_sensitivity(path, sensitivity: SpectralSensitivity) -> None:
    lines = ["wavelength_nm,r,g,b"]
    lines += [f"{_fmt(w)},{_fmt(r)},{_fmt(g)},{_fmt(b)}"
              for w, (r, g, b) in zip(sensitivity.wavelengths,
                                      sensitivity.channels)]
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------- transforms

def load_transform(path) -> np.ndarray:
    values = np.loadtxt(path, ndmin=2)
    if values.shape != (3, 3):
        raise FaceAlbedoError(f"{path}: expected a 3x3 matrix")
    return values


def save_transform(path, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (3, 3):
        raise DimensionMismatchError("transform must be 3x3")
    lines = [" ".join(_fmt(x) for x in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------------- models

_ARRAY_ATTRIBUTES = (
    "diffuse_components_", "diffuse_mean_",
    "specular_components_", "specular_mean_",
    "singular_values_", "component_stds_",
    "specular_singular_values_", "specular_component_stds_",
    "transfer_weights_",
)


def save_model_dir(path, model: PairedAlbedoPCA, calibration_files=None) -> None:
    """Write a fitted paired model as a directory.

    Layout: ``model.json`` manifest + one raw little-endian float64 file per
    matrix (row-major).  ``calibration_files`` is an optional mapping of
    provenance names to existing files copied verbatim into
    ``calibration/``.
    """
    if not hasattr(model, "diffuse_components_"):
        raise ValueError("model is not fitted")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for attribute in _ARRAY_ATTRIBUTES:
        value = getattr(model, attribute, None)
        if value is None:
            continue
        name = attribute.rstrip("_")
        filename = f"{name}.f64"
        (root / filename).write_bytes(
            np.ascontiguousarray(value, dtype="<f8").tobytes())
        arrays[name] = {"file": filename, "shape": list(value.shape)}
    manifest = {
        "format": MODEL_FORMAT,
        "version": 1,
        "n_vertices": model.n_vertices_,
        "n_components": model.n_components_,
        "n_samples_fit": model.n_samples_fit_,
        "variant": model.variant,
        "vectorisation": "channel-major",
        "arrays": arrays,
        "calibration": None,
    }
    if calibration_files:
        cal_dir = root / "calibration"
        cal_dir.mkdir(exist_ok=True)
        entries = {}
        for name in sorted(calibration_files):
            source = Path(calibration_files[name])
            target = cal_dir / source.name
            if source.resolve() != target.resolve():
                shutil.copyfile(source, target)
            entries[name] = f"calibration/{source.name}"
        manifest["calibration"] = entries
    (root / MODEL_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_model_dir(path) -> PairedAlbedoPCA:
    root = Path(path)
    manifest_path = root / MODEL_MANIFEST
    if not manifest_path.is_file():
        raise ManifestError(f"{root}: missing {MODEL_MANIFEST}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != MODEL_FORMAT:
        raise ManifestError(f"{root}: not a model directory")
    variant = manifest.get("variant")
    if variant not in PAIRING_VARIANTS:
        raise ManifestError(f"{root}: unknown variant {variant!r}")
    model = PairedAlbedoPCA(n_components=manifest["n_components"],
                            variant=variant)
    for name, entry in manifest["arrays"].items():
        raw = (root / entry["file"]).read_bytes()
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if len(raw) != 8 * count:
            raise ManifestError(
                f"{root}: {entry['file']} holds {len(raw)} bytes, "
                f"shape {shape} needs {8 * count}")
        setattr(model, name + "_",
                np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    model.n_vertices_ = int(manifest["n_vertices"])
    model.n_samples_fit_ = int(manifest["n_samples_fit"])
    for attribute in ("diffuse_components_", "diffuse_mean_",
                      "specular_components_", "specular_mean_"):
        if not hasattr(model, attribute):
            raise ManifestError(f"{root}: manifest lacks {attribute.rstrip('_')}")
    return model
