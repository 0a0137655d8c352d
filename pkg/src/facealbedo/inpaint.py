"""Hole filling on per-vertex maps: statistical + Poisson hybrid inpainting,
zero-gradient extrapolation for unseen regions, and the constant-percentile
fix for eyeball specular values.

Both solvers pin every non-masked vertex exactly (variable elimination) and
solve only for the masked ones, so untouched vertices keep their input
values bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import AllMaskedError, DimensionMismatchError, EmptyRegionError
from .mesh import TriangleMesh, build_gradient_operator
from .model import AlbedoPCA
from .poisson import solve_pinned_poisson
from .validation import check_signal, check_vertex_mask


def classify_triangles(mesh: TriangleMesh, masked):
    """Partition triangles by the mask state of their corners.

    Returns three boolean arrays over triangles: fully masked, fully
    unmasked, and mixed.
    """
    masked = check_vertex_mask(masked, mesh.n_vertices)
    corners = masked[mesh.triangles]
    n_masked = corners.sum(axis=1)
    all_masked = n_masked == 3
    all_unmasked = n_masked == 0
    return all_masked, all_unmasked, ~all_masked & ~all_unmasked


def hybrid_inpaint(mesh: TriangleMesh, stitched, masked, model: AlbedoPCA,
                   gradient_op=None) -> np.ndarray:
    """Replace masked vertex values by a statistically guided Poisson fill.

    The model is fit to the non-masked vertices and evaluated everywhere;
    gradients of that statistical texture become the targets on fully
    masked triangles, while triangles straddling the mask boundary target
    zero gradient (suppressing any step between the pinned data and the
    fill).  Non-masked vertices pass through unchanged.
    """
    stitched = check_signal(stitched, mesh.n_vertices)
    masked = check_vertex_mask(masked, mesh.n_vertices)
    if model.n_vertices_ != mesh.n_vertices:
        raise DimensionMismatchError(
            f"model covers {model.n_vertices_} vertices, mesh has {mesh.n_vertices}")
    if not masked.any():
        return stitched.copy()
    if masked.all():
        raise AllMaskedError("no unmasked vertices to pin the fill")

    coefficients = model.fit_coefficients(stitched, masked_vertices=masked)
    statistical = model.generate(coefficients)

    if gradient_op is None:
        gradient_op = build_gradient_operator(mesh)
    tri_masked, _, tri_mixed = classify_triangles(mesh, masked)
    targets = np.zeros((gradient_op.shape[0], 3))
    masked_rows = np.repeat(tri_masked, 3)
    targets[masked_rows] = (gradient_op @ statistical)[masked_rows]
    return solve_pinned_poisson(gradient_op, targets, tri_masked | tri_mixed,
                                free_vertices=masked, boundary_values=stitched)


def zero_gradient_fill(mesh: TriangleMesh, signal, unseen,
                       gradient_op=None) -> np.ndarray:
    """Harmonic fill of unseen vertices: zero target gradients on every
    triangle touching the unseen set, seen vertices pinned."""
    signal = check_signal(signal, mesh.n_vertices)
    unseen = check_vertex_mask(unseen, mesh.n_vertices)
    if not unseen.any():
        return signal.copy()
    if unseen.all():
        raise AllMaskedError("no seen vertices to extrapolate from")
    if gradient_op is None:
        gradient_op = build_gradient_operator(mesh)
    tri_masked, _, tri_mixed = classify_triangles(mesh, unseen)
    targets = np.zeros((gradient_op.shape[0], 3))
    return solve_pinned_poisson(gradient_op, targets, tri_masked | tri_mixed,
                                free_vertices=unseen, boundary_values=signal)


def eyeball_specular_fix(signal, eye_region, percentile: float = 0.95) -> np.ndarray:
    """Flatten a region to its per-channel robust maximum.

    Every vertex in the region takes the nearest-rank percentile of the
    region's input values: with m values sorted ascending, the one at rank
    ceil(percentile * m).
    """
    signal = check_signal(signal)
    region = check_vertex_mask(eye_region, signal.shape[0])
    m = int(region.sum())
    if m == 0:
        raise EmptyRegionError("eye region selects no vertices")
    if not 0.0 < percentile <= 1.0:
        raise ValueError(f"percentile must be in (0, 1], got {percentile}")
    ranked = np.sort(signal[region], axis=0)
    out = signal.copy()
    out[region] = ranked[math.ceil(percentile * m) - 1]
    return out


def iterate_model_inpaint(samples, masks, mesh, n_components=None,
                          iterations: int = 1, symmetry_map=None):
    """Alternate between model building and hybrid inpainting.

    A preliminary model is built from the samples with masked values
    replaced by the per-vertex average over samples where that vertex is
    clean (global per-channel mean where no sample is clean).  Each
    iteration then inpaints every original sample with the current model
    and rebuilds the model from the completed set.

    ``mesh`` is either one mesh shared by all samples or a per-sample
    sequence of meshes with a common vertex count.  Returns the list of
    models (preliminary first) and the final completed samples.
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    if isinstance(mesh, TriangleMesh):
        meshes = [mesh] * len(samples)
    else:
        meshes = list(mesh)
    if not samples or len(samples) != len(masks) or len(samples) != len(meshes):
        raise DimensionMismatchError(
            f"{len(samples)} samples, {len(masks)} masks, {len(meshes)} meshes")
    n = meshes[0].n_vertices
    if any(m.n_vertices != n for m in meshes):
        raise DimensionMismatchError("meshes disagree on vertex count")
    signals = np.stack([check_signal(s, n) for s in samples])
    vertex_masks = np.stack([check_vertex_mask(m, n) for m in masks])

    clean = ~vertex_masks
    if not clean.any():
        raise AllMaskedError("every vertex of every sample is masked")
    counts = clean.sum(axis=0)
    sums = (signals * clean[:, :, None]).sum(axis=0)
    with np.errstate(invalid="ignore"):
        averages = sums / counts[:, None]
    averages[counts == 0] = signals[clean].mean(axis=0)
    filled = np.where(vertex_masks[:, :, None], averages[None], signals)

    n_samples = len(samples) * (2 if symmetry_map is not None else 1)
    limit = min(3 * n, n_samples - 1)
    d = limit if n_components is None else min(int(n_components), limit)

    def build(rows):
        return AlbedoPCA(n_components=d, symmetry_map=symmetry_map).fit(
            [row for row in rows])

    models = [build(filled)]
    completed = [filled[i] for i in range(len(samples))]
    operators = {}
    for _ in range(iterations):
        current = []
        for i, m in enumerate(meshes):
            if id(m) not in operators:
                operators[id(m)] = build_gradient_operator(m)
            current.append(hybrid_inpaint(m, signals[i], vertex_masks[i],
                                          models[-1], operators[id(m)]))
        completed = current
        models.append(build(np.stack(completed)))
    return models, completed
