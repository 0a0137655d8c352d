"""Spectral colour calibration and photometric corrections.

A camera with spectral sensitivity C photographing a scene lit by an
illuminant with power distribution e records raw tristimulus values.  The
calibration transform built here maps those raw values to linear sRGB in
three stages: white balance (divide each channel by its response to the
illuminant), raw to CIE XYZ (least-squares fit of the sensitivity onto the
standard observer, rows rescaled to preserve white), and the standard
XYZ-to-sRGB matrix.

All spectral products are plain dot products on a shared wavelength grid
(rectangle rule; the grid step cancels in every ratio used here).  The
default grid runs 400 to 720 nm in 10 nm steps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyOverlapError,
    RankDeficientError,
    ZeroChannelResponseError,
)
from .validation import as_float_matrix

DEFAULT_GRID = np.arange(400.0, 721.0, 10.0)

GAMMA = 2.2

# IEC 61966-2-1 linear XYZ (D65) -> linear sRGB
XYZ_TO_SRGB = np.array([
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
])

_RESPONSE_EPS = 1e-15


def _check_wavelengths(wavelengths) -> np.ndarray:
    w = np.asarray(wavelengths, dtype=np.float64).reshape(-1)
    if w.size < 2:
        raise ValueError("need at least two wavelength samples")
    if not np.isfinite(w).all():
        raise ValueError("wavelengths contain non-finite values")
    if (np.diff(w) <= 0).any():
        raise ValueError("wavelengths must be strictly increasing")
    return w


@dataclass(frozen=True)
class SpectralCurve:
    """Non-negative scalar function of wavelength (an illuminant SPD)."""

    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = _check_wavelengths(self.wavelengths)
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.shape != w.shape:
            raise DimensionMismatchError("values length does not match wavelengths")
        if not np.isfinite(v).all():
            raise ValueError("curve values contain non-finite values")
        if (v < 0).any():
            raise ValueError("curve values must be non-negative")
        object.__setattr__(self, "wavelengths", w)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SpectralSensitivity:
    """Three response curves (one per sensor channel) on a common grid."""

    wavelengths: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        w = _check_wavelengths(self.wavelengths)
        c = as_float_matrix(self.channels, cols=3, name="channels")
        if c.shape[0] != w.size:
            raise DimensionMismatchError("channels rows do not match wavelengths")
        if (c < 0).any():
            raise ValueError("sensitivities must be non-negative")
        object.__setattr__(self, "wavelengths", w)
        object.__setattr__(self, "channels", c)


def resample_to_grid(spectral, grid=DEFAULT_GRID):
    """Linearly resample a curve or sensitivity onto a wavelength grid.

    Outside the source support the result is zero.  Raises
    :class:`EmptyOverlapError` when the supports are disjoint.
    """
    grid = _check_wavelengths(grid)
    src = spectral.wavelengths
    if grid[-1] < src[0] or grid[0] > src[-1]:
        raise EmptyOverlapError(
            f"grid [{grid[0]}, {grid[-1]}] nm does not meet curve support "
            f"[{src[0]}, {src[-1]}] nm")
    if isinstance(spectral, SpectralCurve):
        vals = np.interp(grid, src, spectral.values, left=0.0, right=0.0)
        return SpectralCurve(grid, vals)
    if isinstance(spectral, SpectralSensitivity):
        chans = np.stack([
            np.interp(grid, src, spectral.channels[:, k], left=0.0, right=0.0)
            for k in range(3)
        ], axis=1)
        return SpectralSensitivity(grid, chans)
    raise TypeError(f"cannot resample {type(spectral).__name__}")


def _require_shared_grid(a_wavelengths, b_wavelengths):
    if a_wavelengths.shape != b_wavelengths.shape or \
            not np.allclose(a_wavelengths, b_wavelengths, atol=1e-9):
        raise DimensionMismatchError(
            "spectral inputs are on different grids; resample first")


def white_balance_transform(sensitivity: SpectralSensitivity,
                            illuminant: SpectralCurve) -> np.ndarray:
    """Diagonal 3x3 dividing each channel by its illuminant response."""
    _require_shared_grid(sensitivity.wavelengths, illuminant.wavelengths)
    response = sensitivity.channels.T @ illuminant.values
    if (response <= _RESPONSE_EPS).any():
        raise ZeroChannelResponseError(
            f"channel responses {response} include a (near-)zero entry")
    return np.diag(1.0 / response)


def raw_to_xyz_transform(sensitivity: SpectralSensitivity,
                         observer: SpectralSensitivity | None = None) -> np.ndarray:
    """Least-squares 3x3 mapping sensor responses to CIE XYZ.

    Fits the observer's matching functions as linear combinations of the
    sensor channels, then rescales each row so a unit raw vector maps to a
    unit XYZ vector (white preservation).
    """
    if observer is None:
        observer = cie_1931_observer(sensitivity.wavelengths)
    _require_shared_grid(sensitivity.wavelengths, observer.wavelengths)
    if np.linalg.matrix_rank(sensitivity.channels) < 3:
        raise RankDeficientError("sensor sensitivity is rank deficient")
    transform = observer.channels.T @ np.linalg.pinv(sensitivity.channels).T
    row_sums = transform.sum(axis=1)
    if (np.abs(row_sums) <= _RESPONSE_EPS).any():
        raise RankDeficientError("raw-to-XYZ rows sum to zero; cannot preserve white")
    return transform / row_sums[:, None]


def xyz_to_srgb_transform() -> np.ndarray:
    """The standard linear XYZ (D65) to linear sRGB matrix."""
    return XYZ_TO_SRGB.copy()


def compose_calibration(sensitivity: SpectralSensitivity,
                        illuminant: SpectralCurve,
                        observer: SpectralSensitivity | None = None,
                        grid=DEFAULT_GRID) -> np.ndarray:
    """Full raw-to-linear-sRGB 3x3: white balance, XYZ fit, sRGB matrix.

    Inputs are resampled onto ``grid`` before any product.
    """
    sens = resample_to_grid(sensitivity, grid)
    illum = resample_to_grid(illuminant, grid)
    obs = resample_to_grid(observer, grid) if observer is not None \
        else cie_1931_observer(sens.wavelengths)
    wb = white_balance_transform(sens, illum)
    to_xyz = raw_to_xyz_transform(sens, obs)
    return xyz_to_srgb_transform() @ to_xyz @ wb


def apply_color_transform(signal, transform) -> np.ndarray:
    """Apply a 3x3 transform to each row of an (n, 3) signal."""
    signal = np.asarray(signal, dtype=np.float64)
    transform = np.asarray(transform, dtype=np.float64)
    if transform.shape != (3, 3):
        raise DimensionMismatchError("transform must be 3x3")
    return signal @ transform.T


def gamma_decode(values):
    """Nonlinear storage values to linear intensity (power 2.2)."""
    values = np.asarray(values, dtype=np.float64)
    if (values < 0).any():
        raise ValueError("gamma decode of negative values")
    return values ** GAMMA


def gamma_encode(values):
    """Linear intensity to nonlinear storage values (power 1/2.2)."""
    values = np.asarray(values, dtype=np.float64)
    if (values < 0).any():
        raise ValueError("gamma encode of negative values")
    return values ** (1.0 / GAMMA)


def iso_normalize(signal, iso: float) -> np.ndarray:
    """Divide out the film-speed scaling."""
    if not iso > 0:
        raise ValueError(f"iso must be positive, got {iso}")
    return np.asarray(signal, dtype=np.float64) / float(iso)


def fit_mean_alignment(source_mean, target_mean) -> np.ndarray:
    """3x3 least-squares colour alignment M with M source_i ~ target_i.

    Used to pull externally captured data into the native colour space by
    aligning the per-vertex mean maps of the two groups.
    """
    source = as_float_matrix(source_mean, cols=3, name="source_mean")
    target = as_float_matrix(target_mean, cols=3, name="target_mean")
    if source.shape != target.shape:
        raise DimensionMismatchError("source and target means differ in shape")
    if np.linalg.matrix_rank(source) < 3:
        raise RankDeficientError("source mean spans fewer than 3 colour directions")
    coeff, *_ = np.linalg.lstsq(source, target, rcond=None)
    return coeff.T


def cie_1931_observer(grid=DEFAULT_GRID) -> SpectralSensitivity:
    """CIE 1931 2-degree standard observer, resampled onto ``grid``."""
    table = _load_cie_table()
    obs = SpectralSensitivity(table[:, 0], table[:, 1:])
    grid = _check_wavelengths(grid)
    if grid.shape == obs.wavelengths.shape and np.allclose(grid, obs.wavelengths):
        return obs
    return resample_to_grid(obs, grid)


_CIE_CACHE: np.ndarray | None = None


def _load_cie_table() -> np.ndarray:
    global _CIE_CACHE
    if _CIE_CACHE is None:
        path = resources.files("facealbedo").joinpath("data/cie1931_2deg.csv")
        with path.open("r") as fh:
            reader = csv.reader(fh)
            next(reader)  # header
            rows = [[float(x) for x in row] for row in reader if row]
        _CIE_CACHE = np.asarray(rows)
    return _CIE_CACHE.copy()
