"""Per-vertex image formation (Blinn-Phong diffuse + specular shading with
a final display gamma) and inverse fitting of albedo coefficients plus
ambient light colour from observed appearance.

The fitting deliberately works at known-correspondence level: geometry and
pose are fixed, so the only unknowns are the model coefficients and the
ambient colour.  Under ambient light the specular term is zero (there is no
meaningful ambient Blinn-Phong lobe), so specular albedo stays prior-driven
in that setting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .color import gamma_decode, gamma_encode
from .mesh import TriangleMesh, vertex_normals
from .model import PairedAlbedoPCA, vectorize_signal
from .validation import check_signal, check_vertex_mask

UNIT_TOL = 1e-9

AMBIENT = "ambient"
DIRECTIONAL = "directional"


def _unit(vector, name: str) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64).reshape(-1)
    if v.shape != (3,) or not np.isfinite(v).all():
        raise ValueError(f"{name} must be a finite 3-vector")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError(f"{name} must be nonzero")
    return v / norm


@dataclass(frozen=True)
class Illumination:
    """One light: flat ambient colour, or a directional source.

    ``direction`` is the unit vector from the surface toward the light and
    is required (unit to 1e-9) for directional lights.
    """

    kind: str
    colour: np.ndarray
    direction: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (AMBIENT, DIRECTIONAL):
            raise ValueError(f"unknown illumination kind {self.kind!r}")
        colour = np.asarray(self.colour, dtype=np.float64).reshape(-1)
        if colour.shape != (3,) or not np.isfinite(colour).all():
            raise ValueError("colour must be a finite 3-vector")
        if (colour < 0).any():
            raise ValueError("colour must be nonnegative")
        object.__setattr__(self, "colour", colour)
        if self.kind == DIRECTIONAL:
            if self.direction is None:
                raise ValueError("directional light needs a direction")
            direction = np.asarray(self.direction, dtype=np.float64).reshape(-1)
            if direction.shape != (3,):
                raise ValueError("direction must be a 3-vector")
            if abs(np.linalg.norm(direction) - 1.0) > UNIT_TOL:
                raise ValueError("direction must be unit length")
            object.__setattr__(self, "direction", direction.copy())
        elif self.direction is not None:
            raise ValueError("ambient light takes no direction")

    @classmethod
    def ambient(cls, colour=(1.0, 1.0, 1.0)) -> "Illumination":
        return cls(AMBIENT, np.asarray(colour, dtype=np.float64))

    @classmethod
    def directional(cls, direction, colour=(1.0, 1.0, 1.0)) -> "Illumination":
        return cls(DIRECTIONAL, np.asarray(colour, dtype=np.float64),
                   _unit(direction, "direction"))


@dataclass(frozen=True)
class ShadingParams:
    shininess: float = 20.0

    def __post_init__(self):
        if not self.shininess > 0:
            raise ValueError("shininess must be positive")


def shade(mesh: TriangleMesh, diffuse, specular, illumination: Illumination,
          view_direction=None, params: ShadingParams = ShadingParams()
          ) -> np.ndarray:
    """Per-vertex shaded colour in display (gamma 1/2.2) space.

    Negative albedo values are clamped to zero here, at render time only.
    """
    rho_d = np.clip(check_signal(diffuse, mesh.n_vertices), 0.0, None)
    rho_s = np.clip(check_signal(specular, mesh.n_vertices), 0.0, None)
    colour = illumination.colour[None, :]
    if illumination.kind == AMBIENT:
        linear = colour * rho_d
    else:
        if view_direction is None:
            raise ValueError("directional shading needs a view direction")
        view = _unit(view_direction, "view_direction")
        light = illumination.direction
        normals = vertex_normals(mesh)
        n_dot_l = np.clip(normals @ light, 0.0, None)
        half = light + view
        half_norm = np.linalg.norm(half)
        if half_norm < 1e-12:
            n_dot_h = np.zeros(mesh.n_vertices)
        else:
            n_dot_h = np.clip(normals @ (half / half_norm), 0.0, None)
        linear = (colour * n_dot_l[:, None] * rho_d
                  + colour * (n_dot_h ** params.shininess)[:, None] * rho_s)
    return gamma_encode(linear)


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    ambient: np.ndarray
    converged: bool
    n_iterations: int
    objective: float


def _diffuse_parts(model):
    if isinstance(model, PairedAlbedoPCA):
        return model.diffuse_components_, model.diffuse_mean_, model.n_vertices_
    return model.components_, model.mean_, model.n_vertices_


def fit_albedo_ambient(observed, mesh: TriangleMesh, model,
                       max_iterations: int = 100, tol: float = 1e-9
                       ) -> FitResult:
    """Fit diffuse coefficients and an ambient light colour to an observed
    per-vertex appearance map (display space).

    Alternates two exact least-squares steps: coefficients given the
    ambient colour, then the per-channel ambient ratio given the
    coefficients.  The objective (sum of squared linear-space residuals)
    never increases.  Non-convergence within ``max_iterations`` is reported
    through the ``converged`` flag, not raised.
    """
    components, mean, n = _diffuse_parts(model)
    if mesh.n_vertices != n:
        raise ValueError(f"model covers {n} vertices, mesh has {mesh.n_vertices}")
    target = vectorize_signal(gamma_decode(check_signal(observed, n)))
    d = components.shape[1]

    def channel(vec, c):
        return vec[c * n:(c + 1) * n]

    ambient = np.ones(3)
    for c in range(3):
        denom = channel(mean, c).mean()
        if abs(denom) > 1e-12:
            ambient[c] = channel(target, c).mean() / denom

    coefficients = np.zeros(d)
    objective = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        scale = np.repeat(ambient, n)
        coefficients, *_ = np.linalg.lstsq(components * scale[:, None],
                                           target - scale * mean, rcond=None)
        generated = mean + components @ coefficients
        for c in range(3):
            g = channel(generated, c)
            denom = g @ g
            if denom > 0:
                ambient[c] = (g @ channel(target, c)) / denom
        residual = target - np.repeat(ambient, n) * generated
        previous, objective = objective, float(residual @ residual)
        # the first pass has no finite predecessor to compare against
        if np.isfinite(previous) and \
                previous - objective <= tol * max(previous, 1e-300):
            converged = True
            break
    return FitResult(coefficients, ambient.copy(), converged, iterations,
                     objective)


def albedo_mse(estimated, truth, region=None) -> float:
    """Mean squared per-vertex difference in linear space, optionally over
    a vertex subset."""
    estimated = check_signal(estimated)
    truth = check_signal(truth, n_vertices=estimated.shape[0])
    if region is not None:
        keep = check_vertex_mask(region, estimated.shape[0])
        if not keep.any():
            raise ValueError("region selects no vertices")
        estimated, truth = estimated[keep], truth[keep]
    return float(np.mean((estimated - truth) ** 2))


def render_random_samples(model: PairedAlbedoPCA, mesh: TriangleMesh,
                          count: int, rotation_range_deg: float = 30.0,
                          light: Illumination | None = None,
                          params: ShadingParams = ShadingParams(),
                          seed: int = 0) -> np.ndarray:
    """Shade ``count`` random model samples, each under a random rotation
    about the vertical axis, viewed and lit frontally.

    Per sample the draws are: coefficient vector (standard normal scaled to
    the per-component training std), a second such vector for the specular
    half of an independent-variant model, then the rotation angle (uniform
    in +-rotation_range_deg).  Output is clamped to [0, 1] display space,
    shaped (count, n, 3).  Deterministic for a given seed.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if light is None:
        light = Illumination.directional((0.0, 0.0, 1.0))
    rng = np.random.default_rng(seed)
    view = np.array([0.0, 0.0, 1.0])
    out = np.empty((count, mesh.n_vertices, 3))
    for i in range(count):
        b = rng.standard_normal(model.n_components_) * model.component_stds_
        if model.variant == "independent":
            b_spec = (rng.standard_normal(model.n_components_)
                      * model.specular_component_stds_)
            diffuse, specular = model.generate(b, specular_coefficients=b_spec)
        else:
            diffuse, specular = model.generate(b)
        angle = np.deg2rad(rng.uniform(-rotation_range_deg, rotation_range_deg))
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        rotated = mesh.with_vertices(mesh.vertices @ rot.T)
        out[i] = np.clip(shade(rotated, diffuse, specular, light, view, params),
                         0.0, 1.0)
    return out
