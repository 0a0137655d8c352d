"""Statistical diffuse and specular facial albedo modelling on triangle meshes.

The pieces compose in pipeline order: sample calibrated camera views onto a
template mesh, stitch them into seamless per-vertex albedo maps, inpaint
artefact regions with a model-guided Poisson fill, and train paired PCA
models that can be sampled, rendered, and fitted to observations.
"""

from .camera import CameraView, calibrate_camera_dlt, project_points, project_vertices
from .color import (
    SpectralCurve,
    SpectralSensitivity,
    apply_color_transform,
    compose_calibration,
    fit_mean_alignment,
    gamma_decode,
    gamma_encode,
    iso_normalize,
    raw_to_xyz_transform,
    white_balance_transform,
)
from .errors import FaceAlbedoError, ManifestError
from .inpaint import (
    classify_triangles,
    eyeball_specular_fix,
    hybrid_inpaint,
    iterate_model_inpaint,
    zero_gradient_fill,
)
from .mesh import TriangleMesh, build_gradient_operator, vertex_normals
from .model import (
    AlbedoPCA,
    PairedAlbedoPCA,
    build_paired,
    build_pca,
    loo_generalisation,
    unvectorize_signal,
    vectorize_signal,
)
from .pipeline import (
    PipelineManifest,
    SubjectSpec,
    emit_plot_data,
    load_manifest,
    run_pipeline,
)
from .poisson import ViewSample, solve_pinned_poisson, solve_screened_poisson, stitch
from .render import (
    FitResult,
    Illumination,
    ShadingParams,
    albedo_mse,
    fit_albedo_ambient,
    render_random_samples,
    shade,
)
from .sampling import compute_visibility, compute_weights, make_view_sample, sample_view

__all__ = [
    "AlbedoPCA",
    "CameraView",
    "FaceAlbedoError",
    "FitResult",
    "Illumination",
    "ManifestError",
    "PairedAlbedoPCA",
    "PipelineManifest",
    "ShadingParams",
    "SpectralCurve",
    "SpectralSensitivity",
    "SubjectSpec",
    "TriangleMesh",
    "ViewSample",
    "albedo_mse",
    "apply_color_transform",
    "build_gradient_operator",
    "build_paired",
    "build_pca",
    "calibrate_camera_dlt",
    "classify_triangles",
    "compose_calibration",
    "compute_visibility",
    "compute_weights",
    "emit_plot_data",
    "eyeball_specular_fix",
    "fit_albedo_ambient",
    "fit_mean_alignment",
    "gamma_decode",
    "gamma_encode",
    "hybrid_inpaint",
    "iso_normalize",
    "iterate_model_inpaint",
    "load_manifest",
    "loo_generalisation",
    "make_view_sample",
    "project_points",
    "project_vertices",
    "raw_to_xyz_transform",
    "render_random_samples",
    "run_pipeline",
    "sample_view",
    "shade",
    "solve_pinned_poisson",
    "solve_screened_poisson",
    "stitch",
    "unvectorize_signal",
    "vectorize_signal",
    "vertex_normals",
    "white_balance_transform",
]

__version__ = "0.1.0"
