"""Manifest-driven batch orchestration.

A JSON manifest lists capture subjects (meshes, per-view images and
cameras, artefact masks) plus calibration inputs and model settings.
``run_pipeline`` turns that into a saved model directory and a JSON
report, isolating per-subject failures so one bad scan cannot sink a
batch.  Subjects from external datasets follow a correction path of
their own: inverse gamma, ISO division, and a colour alignment fitted
between group mean albedos once every subject is through.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .color import (
    apply_color_transform,
    compose_calibration,
    fit_mean_alignment,
    gamma_decode,
    iso_normalize,
)
from .errors import FaceAlbedoError, InsufficientSamplesError, ManifestError
from .inpaint import eyeball_specular_fix, iterate_model_inpaint, zero_gradient_fill
from .mesh import build_gradient_operator
from .model import PAIRING_VARIANTS, build_paired, loo_generalisation
from .poisson import ViewSample, build_selections, stitch
from .render import albedo_mse
from .sampling import compute_visibility, compute_weights, sample_view

DATA_DIR_ENV = "FACEALBEDO_DATA_DIR"
SOURCES = ("native", "external")


@dataclass(frozen=True)
class ViewPaths:
    camera: Path
    diffuse: Path
    specular: Path


@dataclass(frozen=True)
class SubjectSpec:
    """One capture set: a registered mesh plus per-view albedo images.

    ``reference_view`` is a 0-based index into ``views``.  ``mask`` lists
    artefact vertices to inpaint; ``iso`` is the capture gain external
    maps must be divided by.
    """

    id: str
    mesh: Path
    views: tuple[ViewPaths, ...]
    source: str = "native"
    iso: float | None = None
    mask: Path | None = None
    reference_view: int = 0


@dataclass(frozen=True)
class PipelineManifest:
    subjects: tuple[SubjectSpec, ...]
    output: Path
    n_components: int
    variant: str = "transferred"
    symmetry: Path | None = None
    eye_region: Path | None = None
    illuminant: Path | None = None
    sensitivity: Path | None = None
    screen_weight: float = 0.1
    boundary_px: float = 3.0
    iterations: int = 1


def load_manifest(path, data_dir=None) -> PipelineManifest:
    """Parse and validate a manifest file.

    Relative paths resolve against ``data_dir``, the ``FACEALBEDO_DATA_DIR``
    environment variable, or the manifest's own directory, in that order.
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV) or path.parent
    return parse_manifest(document, Path(data_dir))


def parse_manifest(document: dict, base_dir: Path) -> PipelineManifest:
    if not isinstance(document, dict):
        raise ManifestError("manifest must be a JSON object")

    def resolve(value, *, must_exist=True):
        p = base_dir / value
        if must_exist and not p.exists():
            raise ManifestError(f"referenced path does not exist: {p}")
        return p

    def optional(section, key, *, must_exist=True):
        value = section.get(key)
        return None if value is None else resolve(value, must_exist=must_exist)

    subjects = []
    seen_ids = set()
    for entry in document.get("subjects", []):
        subject_id = str(entry.get("id", ""))
        if not subject_id:
            raise ManifestError("subject without an id")
        if subject_id in seen_ids:
            raise ManifestError(f"duplicate subject id {subject_id!r}")
        seen_ids.add(subject_id)
        source = entry.get("source", "native")
        if source not in SOURCES:
            raise ManifestError(
                f"subject {subject_id!r}: unknown source {source!r}")
        views = tuple(
            ViewPaths(camera=resolve(view["camera"]),
                      diffuse=resolve(view["diffuse"]),
                      specular=resolve(view["specular"]))
            for view in entry.get("views", []))
        if not views:
            raise ManifestError(f"subject {subject_id!r} has no views")
        iso = entry.get("iso")
        if source == "external":
            if iso is None or not float(iso) > 0:
                raise ManifestError(
                    f"external subject {subject_id!r} needs a positive iso")
            iso = float(iso)
        elif iso is not None:
            iso = float(iso)
        reference = int(entry.get("reference_view", 0))
        if not 0 <= reference < len(views):
            raise ManifestError(
                f"subject {subject_id!r}: reference_view {reference} "
                f"out of range for {len(views)} views")
        subjects.append(SubjectSpec(
            id=subject_id,
            mesh=resolve(entry["mesh"]),
            views=views,
            source=source,
            iso=iso,
            mask=optional(entry, "mask"),
            reference_view=reference,
        ))
    if not subjects:
        raise ManifestError("manifest lists no subjects")

    model_section = document.get("model")
    if not isinstance(model_section, dict):
        raise ManifestError("manifest needs a model section")
    n_components = int(model_section.get("n_components", 0))
    if n_components < 1:
        raise ManifestError("model.n_components must be at least 1")
    variant = model_section.get("variant", "transferred")
    if variant not in PAIRING_VARIANTS:
        raise ManifestError(f"unknown model variant {variant!r}")

    calibration = document.get("calibration") or {}
    illuminant = optional(calibration, "illuminant")
    sensitivity = optional(calibration, "sensitivity")
    if any(s.source == "native" for s in subjects) and (
            illuminant is None or sensitivity is None):
        raise ManifestError(
            "native subjects need calibration.illuminant and "
            "calibration.sensitivity")

    output = document.get("output")
    if not output:
        raise ManifestError("manifest needs an output directory")
    stitching = document.get("stitching") or {}
    return PipelineManifest(
        subjects=tuple(subjects),
        output=base_dir / output,
        n_components=n_components,
        variant=variant,
        symmetry=optional(model_section, "symmetry"),
        eye_region=optional(document, "eye_region"),
        illuminant=illuminant,
        sensitivity=sensitivity,
        screen_weight=float(stitching.get("screen_weight", 0.1)),
        boundary_px=float(stitching.get("boundary_px", 3.0)),
        iterations=int(document.get("inpaint", {}).get("iterations", 1)),
    )


@dataclass
class _SubjectResult:
    spec: SubjectSpec
    mesh: object = None
    diffuse: np.ndarray | None = None
    specular: np.ndarray | None = None
    mask: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    error: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class _StageClock:
    """Collects wall-clock seconds per named stage."""

    def __init__(self):
        self.timings = {}
        self._stage = None
        self._start = None

    def enter(self, stage: str):
        now = time.perf_counter()
        if self._stage is not None:
            self.timings[self._stage] = self.timings.get(self._stage, 0.0) \
                + now - self._start
        self._stage, self._start = stage, now

    def stop(self):
        self.enter(None)
        self._stage = None

    @property
    def stage(self):
        return self._stage


def _anchor_rms(mesh, samples, reference, stitched) -> float:
    _, vertex_owner = build_selections(samples)
    anchors = vertex_owner == reference
    drift = stitched[anchors] - samples[reference].colors[anchors]
    return float(np.sqrt(np.mean(drift ** 2)))


def _process_subject(spec: SubjectSpec, manifest: PipelineManifest,
                     transform, subject_dir: Path) -> _SubjectResult:
    result = _SubjectResult(spec)
    clock = _StageClock()
    try:
        clock.enter("load")
        mesh = io.load_mesh_obj(spec.mesh)
        views = [(io.load_camera(v.camera), io.load_image(v.diffuse),
                  io.load_image(v.specular)) for v in spec.views]

        clock.enter("sample")
        samples_d, samples_s = [], []
        for camera, image_d, image_s in views:
            visibility = compute_visibility(mesh, camera)
            weight, triangle_weight = compute_weights(
                mesh, camera, visibility, manifest.boundary_px)
            colors_d = sample_view(mesh, camera, image_d, visibility)
            colors_s = sample_view(mesh, camera, image_s, visibility)
            if spec.source == "native":
                colors_d = apply_color_transform(colors_d, transform)
                colors_s = apply_color_transform(colors_s, transform)
            colors_d[weight == 0.0] = 0.0
            colors_s[weight == 0.0] = 0.0
            samples_d.append(ViewSample(colors_d, weight, triangle_weight))
            samples_s.append(ViewSample(colors_s, weight, triangle_weight))

        clock.enter("stitch")
        gradient_op = build_gradient_operator(mesh)
        diffuse = stitch(mesh, samples_d, spec.reference_view,
                         manifest.screen_weight, gradient_op)
        specular = stitch(mesh, samples_s, spec.reference_view,
                          manifest.screen_weight, gradient_op)
        result.stats["stitch_anchor_rms"] = {
            "diffuse": _anchor_rms(mesh, samples_d, spec.reference_view, diffuse),
            "specular": _anchor_rms(mesh, samples_s, spec.reference_view, specular),
        }

        clock.enter("fill")
        unseen = np.ones(mesh.n_vertices, dtype=bool)
        for sample in samples_d:
            unseen &= sample.vertex_weight == 0.0
        if unseen.any():
            diffuse = zero_gradient_fill(mesh, diffuse, unseen, gradient_op)
            specular = zero_gradient_fill(mesh, specular, unseen, gradient_op)
        result.stats["unseen_fraction"] = float(unseen.mean())

        if spec.source == "external":
            clock.enter("linearise")
            # stitching can overshoot below zero; gamma is undefined there
            diffuse = gamma_decode(np.clip(diffuse, 0.0, None))
            specular = gamma_decode(np.clip(specular, 0.0, None))
            diffuse = iso_normalize(diffuse, spec.iso)
            specular = iso_normalize(specular, spec.iso)

        clock.enter("write")
        mask = np.zeros(mesh.n_vertices, dtype=bool)
        if spec.mask is not None:
            indices = io.load_mask(spec.mask)
            if indices.size and indices.max() >= mesh.n_vertices:
                raise ManifestError(
                    f"{spec.mask}: index {indices.max()} exceeds mesh size")
            mask[indices] = True
        result.stats["masked_fraction"] = float(mask.mean())
        subject_dir.mkdir(parents=True, exist_ok=True)
        io.save_vertex_signal(subject_dir / "diffuse_stitched.vsig", diffuse)
        io.save_vertex_signal(subject_dir / "specular_stitched.vsig", specular)
        clock.stop()

        result.mesh = mesh
        result.diffuse = diffuse
        result.specular = specular
        result.mask = mask
    except (FaceAlbedoError, ValueError, OSError) as exc:
        stage = clock.stage or "load"
        clock.stop()
        result.error = {"id": spec.id, "stage": stage,
                        "error": type(exc).__name__, "message": str(exc)}
    result.timings = clock.timings
    return result


def run_pipeline(manifest: PipelineManifest, jobs: int = 1) -> dict:
    """Execute the full batch build and return the report dictionary.

    Writes per-subject intermediates, the model directory, and
    ``report.json`` under the manifest's output root.  Subject failures
    are recorded and skipped; fewer than two usable subjects aborts with
    :class:`InsufficientSamplesError` after the report is written.
    """
    output = Path(manifest.output)
    output.mkdir(parents=True, exist_ok=True)
    report: dict = {"subjects": [], "failures": [], "timings": {}}
    started = time.perf_counter()

    transform = None
    calibration_files = None
    if manifest.sensitivity is not None and manifest.illuminant is not None:
        t0 = time.perf_counter()
        sensitivity = io.load_spectral_sensitivity(manifest.sensitivity)
        illuminant = io.load_spectral_curve(manifest.illuminant)
        transform = compose_calibration(sensitivity, illuminant)
        io.save_transform(output / "calibration_transform.mat3", transform)
        calibration_files = {
            "transform": output / "calibration_transform.mat3",
            "sensitivity": manifest.sensitivity,
            "illuminant": manifest.illuminant,
        }
        report["timings"]["calibrate"] = time.perf_counter() - t0

    def worker(spec: SubjectSpec) -> _SubjectResult:
        return _process_subject(spec, manifest, transform,
                                output / "subjects" / spec.id)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, manifest.subjects))
    else:
        results = [worker(spec) for spec in manifest.subjects]

    for result in results:
        if result.ok:
            entry = {"id": result.spec.id, "source": result.spec.source}
            entry.update(result.stats)
            entry["timings"] = result.timings
            report["subjects"].append(entry)
        else:
            report["failures"].append(result.error)
    survivors = [r for r in results if r.ok]

    # colour alignment is a barrier: it needs both group means complete
    report["mean_alignment"] = None
    natives = [r for r in survivors if r.spec.source == "native"]
    externals = [r for r in survivors if r.spec.source == "external"]
    if natives and externals:
        t0 = time.perf_counter()
        source_mean = np.mean([r.diffuse for r in externals], axis=0)
        target_mean = np.mean([r.diffuse for r in natives], axis=0)
        alignment = fit_mean_alignment(source_mean, target_mean)
        for r in externals:
            r.diffuse = apply_color_transform(r.diffuse, alignment)
            r.specular = apply_color_transform(r.specular, alignment)
        io.save_transform(output / "mean_alignment.mat3", alignment)
        report["mean_alignment"] = alignment.tolist()
        report["timings"]["align"] = time.perf_counter() - t0

    if len(survivors) < 2:
        _write_report(output, report)
        raise InsufficientSamplesError(
            f"only {len(survivors)} subjects survived; a model needs 2")

    symmetry_map = None
    if manifest.symmetry is not None:
        n = survivors[0].mesh.n_vertices
        symmetry_map = io.load_symmetry_map(manifest.symmetry, n)

    t0 = time.perf_counter()
    meshes = [r.mesh for r in survivors]
    masks = [r.mask for r in survivors]
    _, completed_d = iterate_model_inpaint(
        [r.diffuse for r in survivors], masks, meshes,
        n_components=manifest.n_components,
        iterations=manifest.iterations, symmetry_map=symmetry_map)
    _, completed_s = iterate_model_inpaint(
        [r.specular for r in survivors], masks, meshes,
        n_components=manifest.n_components,
        iterations=manifest.iterations, symmetry_map=symmetry_map)
    report["timings"]["inpaint"] = time.perf_counter() - t0

    if manifest.eye_region is not None:
        t0 = time.perf_counter()
        region = io.load_mask(manifest.eye_region)
        completed_s = [eyeball_specular_fix(s, region) for s in completed_s]
        report["timings"]["eye_fix"] = time.perf_counter() - t0

    for result, diffuse, specular in zip(survivors, completed_d, completed_s):
        subject_dir = output / "subjects" / result.spec.id
        io.save_vertex_signal(subject_dir / "diffuse_completed.vsig", diffuse)
        io.save_vertex_signal(subject_dir / "specular_completed.vsig", specular)

    t0 = time.perf_counter()
    model = build_paired(completed_d, completed_s,
                         n_components=manifest.n_components,
                         variant=manifest.variant,
                         symmetry_map=symmetry_map)
    io.save_model_dir(output / "model", model,
                      calibration_files=calibration_files)
    report["timings"]["model"] = time.perf_counter() - t0

    report["model"] = {
        "path": "model",
        "n_components": model.n_components_,
        "variant": model.variant,
        "n_vertices": model.n_vertices_,
        "n_subjects_used": len(survivors),
    }
    report["timings"]["total"] = time.perf_counter() - started
    _write_report(output, report)
    return report


def _write_report(output: Path, report: dict) -> None:
    (output / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")


def strip_timings(report: dict):
    """The report minus every wall-clock field, for determinism checks."""
    if isinstance(report, dict):
        return {k: strip_timings(v) for k, v in report.items()
                if k != "timings"}
    if isinstance(report, list):
        return [strip_timings(v) for v in report]
    return report


def emit_plot_data(kind: str, inputs: dict) -> str:
    """Machine-readable CSV behind the published figures.

    ``loo`` tabulates leave-one-out generalisation error per variant and
    dimension; ``mse-table`` lists per-subject albedo MSE with summary
    rows.  Numbers are printed with enough digits to round-trip exactly.
    """
    if kind == "loo":
        d_values = [int(d) for d in inputs["d_values"]]
        variants = list(inputs.get("variants", PAIRING_VARIANTS))
        symmetry_map = inputs.get("symmetry_map")
        curves = {
            variant: loo_generalisation(
                inputs["diffuse"], inputs["specular"], variant, d_values,
                symmetry_map=symmetry_map)
            for variant in variants
        }
        lines = ["d," + ",".join(variants)]
        for row, d in enumerate(d_values):
            cells = [format(curves[v][row], ".17g") for v in variants]
            lines.append(f"{d}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    if kind == "mse-table":
        pairs = inputs["pairs"]
        ids = inputs.get("ids") or [str(i) for i in range(len(pairs))]
        if len(ids) != len(pairs):
            raise ValueError(f"{len(ids)} ids for {len(pairs)} pairs")
        region = inputs.get("region")
        errors = [albedo_mse(estimated, truth, region)
                  for estimated, truth in pairs]
        lines = ["subject,mse"]
        lines += [f"{sid},{format(e, '.17g')}" for sid, e in zip(ids, errors)]
        lines.append(f"mean,{format(float(np.mean(errors)), '.17g')}")
        lines.append(f"std,{format(float(np.std(errors)), '.17g')}")
        return "\n".join(lines) + "\n"

    raise ValueError(f"unknown plot kind {kind!r}")
