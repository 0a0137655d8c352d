"""Linear statistical albedo models (PCA) and the paired diffuse/specular
variants.

Signals are vectorized channel-major: an (n, 3) per-vertex signal becomes a
length-3n vector holding all red values, then all green, then all blue.
Models are fit on rows of such vectors, optionally doubled by bilateral
symmetry augmentation (every sample plus its mirror image).

Three ways of pairing a diffuse and a specular model are supported:

independent
    Two unrelated PCAs with separate coefficient vectors.
concatenated
    One PCA of the stacked 6n-vector; a single coefficient vector drives
    both halves.
transferred
    PCA of the diffuse data alone; the specular generator reuses the
    diffuse sample loadings, so diffuse coefficients drive a matched
    specular reconstruction.  This keeps the diffuse model optimal while
    coupling the two maps through the training set.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    AllMaskedError,
    DimensionMismatchError,
    InsufficientSamplesError,
    MisalignedSamplesError,
    TooManyComponentsError,
    UnderdeterminedFitError,
)
from .validation import as_float_matrix, check_signal, check_vertex_mask

PAIRING_VARIANTS = ("independent", "concatenated", "transferred")


def vectorize_signal(signal) -> np.ndarray:
    """(n, c) signal to a channel-major vector of length c*n."""
    signal = check_signal(signal, channels=None)
    return signal.T.reshape(-1)


def unvectorize_signal(vector, n_vertices: int) -> np.ndarray:
    """Inverse of :func:`vectorize_signal`."""
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vector.size % n_vertices:
        raise DimensionMismatchError(
            f"vector of length {vector.size} does not split into "
            f"{n_vertices}-vertex channels")
    return vector.reshape(-1, n_vertices).T


def _reflect_rows(rows: np.ndarray, symmetry_map: np.ndarray) -> np.ndarray:
    """Mirror channel-major sample rows through a vertex permutation."""
    n = symmetry_map.size
    if rows.shape[1] % n:
        raise DimensionMismatchError("symmetry map does not divide the row length")
    c = rows.shape[1] // n
    blocks = rows.reshape(rows.shape[0], c, n)
    return blocks[:, :, symmetry_map].reshape(rows.shape[0], c * n)


def _as_sample_matrix(samples, what: str) -> np.ndarray:
    """Accept an (N, D) matrix or a sequence of (n, c) signals."""
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        return as_float_matrix(samples, name=what)
    try:
        rows = [vectorize_signal(s) for s in samples]
    except (TypeError, IndexError) as exc:
        raise DimensionMismatchError(f"{what}: cannot interpret samples") from exc
    if not rows:
        raise InsufficientSamplesError(f"{what}: no samples")
    if len({r.size for r in rows}) != 1:
        raise MisalignedSamplesError(f"{what}: samples differ in vertex count")
    return np.stack(rows)


def _prepare_symmetry(symmetry_map, row_length: int):
    if symmetry_map is None:
        return None
    sym = np.asarray(symmetry_map)
    if not np.issubdtype(sym.dtype, np.integer):
        raise ValueError("symmetry map must be integer")
    sym = sym.astype(np.int64).reshape(-1)
    if row_length % sym.size:
        raise DimensionMismatchError(
            f"symmetry map length {sym.size} does not divide rows of {row_length}")
    if not np.array_equal(sym[sym], np.arange(sym.size)):
        raise ValueError("symmetry map is not an involution")
    return sym


def _centered_svd(rows: np.ndarray):
    """Mean, then SVD of the column-sample matrix with a deterministic sign
    convention: the largest-magnitude entry of each component is positive."""
    mean = rows.mean(axis=0)
    a = (rows - mean).T  # (D, N)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    flip = u[np.abs(u).argmax(axis=0), np.arange(u.shape[1])] < 0
    u[:, flip] = -u[:, flip]
    vt[flip] = -vt[flip]
    return mean, u, s, vt


def _component_limit(n_rows: int, dim: int) -> int:
    return min(dim, n_rows - 1)


class AlbedoPCA(BaseEstimator):
    """PCA of one per-vertex signal family with optional symmetry
    augmentation.

    Parameters
    ----------
    n_components : int, optional
        Model dimension d.  Defaults to the largest supported by the
        (augmented) training set.
    symmetry_map : (n,) int array, optional
        Bilateral vertex pairing; when given, training uses each sample and
        its mirror image.

    Attributes (after fit)
    ----------------------
    components_ : (3n, d) orthonormal columns
    mean_ : (3n,)
    singular_values_ : (d,)
    component_stds_ : (d,) per-coefficient standard deviation,
        ``singular_values_ / sqrt(n_samples_fit_ - 1)``
    n_samples_fit_ : augmented sample count
    n_vertices_ : n
    """

    def __init__(self, n_components: int | None = None, symmetry_map=None):
        self.n_components = n_components
        self.symmetry_map = symmetry_map

    def fit(self, X, y=None):
        rows = _as_sample_matrix(X, "fit")
        if rows.shape[0] < 2:
            raise InsufficientSamplesError("need at least 2 samples")
        sym = _prepare_symmetry(self.symmetry_map, rows.shape[1])
        if sym is not None:
            rows = np.vstack([rows, _reflect_rows(rows, sym)])
        limit = _component_limit(rows.shape[0], rows.shape[1])
        d = limit if self.n_components is None else int(self.n_components)
        if not 0 < d <= limit:
            raise TooManyComponentsError(
                f"n_components={d} outside (0, {limit}] for "
                f"{rows.shape[0]} samples of length {rows.shape[1]}")
        mean, u, s, _ = _centered_svd(rows)
        self.mean_ = mean
        self.components_ = u[:, :d]
        self.singular_values_ = s[:d].copy()
        self.component_stds_ = s[:d] / np.sqrt(rows.shape[0] - 1)
        self.n_samples_fit_ = rows.shape[0]
        self.n_vertices_ = rows.shape[1] // 3
        return self

    def _check_fitted(self):
        if not hasattr(self, "components_"):
            raise RuntimeError("model is not fitted")

    def transform(self, X) -> np.ndarray:
        """Project sample rows onto the components: (N, d) coefficients."""
        self._check_fitted()
        rows = _as_sample_matrix(X, "transform")
        if rows.shape[1] != self.mean_.size:
            raise DimensionMismatchError("rows do not match the fitted dimension")
        return (rows - self.mean_) @ self.components_

    def inverse_transform(self, coefficients) -> np.ndarray:
        self._check_fitted()
        b = np.asarray(coefficients, dtype=np.float64)
        single = b.ndim == 1
        b = np.atleast_2d(b)
        rows = b @ self.components_.T + self.mean_
        return rows[0] if single else rows

    def generate(self, coefficients) -> np.ndarray:
        """Coefficients to an (n, 3) signal.  Shorter vectors are padded
        with zeros; longer ones are an error."""
        self._check_fitted()
        b = np.asarray(coefficients, dtype=np.float64).reshape(-1)
        d = self.components_.shape[1]
        if b.size > d:
            raise DimensionMismatchError(f"got {b.size} coefficients for d={d}")
        if b.size < d:
            b = np.concatenate([b, np.zeros(d - b.size)])
        return unvectorize_signal(self.components_ @ b + self.mean_, self.n_vertices_)

    def fit_coefficients(self, signal, masked_vertices=None) -> np.ndarray:
        """Least-squares coefficients for a signal, ignoring masked rows.

        With no mask this is the orthogonal projection; with a mask the
        reduced system is solved by least squares over the unmasked rows of
        every colour channel.
        """
        self._check_fitted()
        vec = vectorize_signal(check_signal(signal, n_vertices=self.n_vertices_))
        if masked_vertices is None:
            return self.components_.T @ (vec - self.mean_)
        mask = check_vertex_mask(masked_vertices, self.n_vertices_)
        if mask.all():
            raise AllMaskedError("every vertex is masked")
        keep = ~np.tile(mask, 3)
        d = self.components_.shape[1]
        if int(keep.sum()) < d:
            raise UnderdeterminedFitError(
                f"{int(keep.sum())} usable rows for {d} coefficients")
        coeffs, *_ = np.linalg.lstsq(self.components_[keep],
                                     vec[keep] - self.mean_[keep], rcond=None)
        return coeffs


class PairedAlbedoPCA(BaseEstimator):
    """Joint diffuse + specular albedo model in one of three variants.

    Parameters
    ----------
    n_components : int, optional
        Dimension d shared by both halves.
    variant : {"independent", "concatenated", "transferred"}
    symmetry_map : (n,) int array, optional

    Attributes (after fit)
    ----------------------
    diffuse_components_, specular_components_ : (3n, d)
        Generators of each half.  Orthonormal except the transferred
        specular block.
    diffuse_mean_, specular_mean_ : (3n,)
    singular_values_, component_stds_ : (d,)
        Of the driving PCA (diffuse for independent/transferred, joint for
        concatenated).
    specular_singular_values_, specular_component_stds_ : (d,)
        Independent variant only.
    transfer_weights_ : (n_samples_fit_, d)
        Transferred variant only: sample loadings V Sigma^-1 of the diffuse
        SVD, the matrix that carries diffuse structure onto the specular
        data.
    """

    def __init__(self, n_components: int | None = None,
                 variant: str = "transferred", symmetry_map=None):
        self.n_components = n_components
        self.variant = variant
        self.symmetry_map = symmetry_map

    def fit(self, X, Y):
        if self.variant not in PAIRING_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        diffuse = _as_sample_matrix(X, "diffuse")
        specular = _as_sample_matrix(Y, "specular")
        if diffuse.shape != specular.shape:
            raise MisalignedSamplesError(
                f"diffuse {diffuse.shape} and specular {specular.shape} disagree")
        if diffuse.shape[0] < 2:
            raise InsufficientSamplesError("need at least 2 sample pairs")
        sym = _prepare_symmetry(self.symmetry_map, diffuse.shape[1])
        if sym is not None:
            diffuse = np.vstack([diffuse, _reflect_rows(diffuse, sym)])
            specular = np.vstack([specular, _reflect_rows(specular, sym)])
        n_rows, dim = diffuse.shape
        limit = _component_limit(n_rows, dim)
        d = limit if self.n_components is None else int(self.n_components)
        if not 0 < d <= limit:
            raise TooManyComponentsError(
                f"n_components={d} outside (0, {limit}] for {n_rows} samples")

        if self.variant == "independent":
            mean_d, u_d, s_d, _ = _centered_svd(diffuse)
            mean_s, u_s, s_s, _ = _centered_svd(specular)
            self.diffuse_components_ = u_d[:, :d]
            self.specular_components_ = u_s[:, :d]
            self.diffuse_mean_ = mean_d
            self.specular_mean_ = mean_s
            self.singular_values_ = s_d[:d].copy()
            self.component_stds_ = s_d[:d] / np.sqrt(n_rows - 1)
            self.specular_singular_values_ = s_s[:d].copy()
            self.specular_component_stds_ = s_s[:d] / np.sqrt(n_rows - 1)
        elif self.variant == "concatenated":
            joint = np.hstack([diffuse, specular])
            mean, u, s, _ = _centered_svd(joint)
            self.diffuse_components_ = u[:dim, :d]
            self.specular_components_ = u[dim:, :d]
            self.diffuse_mean_ = mean[:dim]
            self.specular_mean_ = mean[dim:]
            self.singular_values_ = s[:d].copy()
            self.component_stds_ = s[:d] / np.sqrt(n_rows - 1)
        else:  # transferred
            mean_d, u_d, s_d, vt_d = _centered_svd(diffuse)
            if s_d[:d].min() <= 1e-12 * max(s_d[0], 1.0):
                raise TooManyComponentsError(
                    "diffuse data rank is below n_components; the transfer "
                    "weights would blow up")
            weights = vt_d[:d].T / s_d[:d]  # (n_rows, d)
            mean_s = specular.mean(axis=0)
            self.diffuse_components_ = u_d[:, :d]
            self.specular_components_ = (specular - mean_s).T @ weights
            self.diffuse_mean_ = mean_d
            self.specular_mean_ = mean_s
            self.singular_values_ = s_d[:d].copy()
            self.component_stds_ = s_d[:d] / np.sqrt(n_rows - 1)
            self.transfer_weights_ = weights

        self.n_samples_fit_ = n_rows
        self.n_vertices_ = dim // 3
        return self

    def _check_fitted(self):
        if not hasattr(self, "diffuse_components_"):
            raise RuntimeError("model is not fitted")

    @property
    def n_components_(self) -> int:
        self._check_fitted()
        return self.diffuse_components_.shape[1]

    def generate(self, coefficients, specular_coefficients=None
                 ) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients to a (diffuse, specular) pair of (n, 3) signals.

        The independent variant has its own specular coefficients
        (``specular_coefficients``, zeros when omitted); the other variants
        drive both halves from the one vector.
        """
        self._check_fitted()
        b = self._pad(coefficients)
        n = self.n_vertices_
        diffuse = unvectorize_signal(self.diffuse_components_ @ b + self.diffuse_mean_, n)
        if self.variant == "independent":
            bs = self._pad(specular_coefficients) if specular_coefficients is not None \
                else np.zeros(self.n_components_)
            specular = unvectorize_signal(
                self.specular_components_ @ bs + self.specular_mean_, n)
        else:
            specular = unvectorize_signal(
                self.specular_components_ @ b + self.specular_mean_, n)
        return diffuse, specular

    def _pad(self, coefficients) -> np.ndarray:
        b = np.asarray(coefficients, dtype=np.float64).reshape(-1)
        d = self.n_components_
        if b.size > d:
            raise DimensionMismatchError(f"got {b.size} coefficients for d={d}")
        if b.size < d:
            b = np.concatenate([b, np.zeros(d - b.size)])
        return b

    def fit_coefficients(self, diffuse_signal, masked_vertices=None) -> np.ndarray:
        """Coefficients from a diffuse observation (all variants).

        For the transferred and independent variants the diffuse block is
        orthonormal; for the concatenated variant the diffuse rows of the
        joint components are solved by least squares.
        """
        self._check_fitted()
        vec = vectorize_signal(check_signal(diffuse_signal, n_vertices=self.n_vertices_))
        return self._lstsq_coefficients(self.diffuse_components_,
                                        self.diffuse_mean_, vec, masked_vertices)

    def fit_specular_coefficients(self, specular_signal,
                                  masked_vertices=None) -> np.ndarray:
        """Independent-variant specular coefficients from an observation."""
        self._check_fitted()
        if self.variant != "independent":
            raise ValueError(
                f"variant {self.variant!r} has no separate specular coefficients")
        vec = vectorize_signal(check_signal(specular_signal, n_vertices=self.n_vertices_))
        return self._lstsq_coefficients(self.specular_components_,
                                        self.specular_mean_, vec, masked_vertices)

    def _lstsq_coefficients(self, components, mean, vec, masked_vertices):
        if masked_vertices is None:
            if self.variant == "concatenated":
                coeffs, *_ = np.linalg.lstsq(components, vec - mean, rcond=None)
                return coeffs
            return components.T @ (vec - mean)
        mask = check_vertex_mask(masked_vertices, self.n_vertices_)
        if mask.all():
            raise AllMaskedError("every vertex is masked")
        keep = ~np.tile(mask, 3)
        if int(keep.sum()) < components.shape[1]:
            raise UnderdeterminedFitError(
                f"{int(keep.sum())} usable rows for {components.shape[1]} coefficients")
        coeffs, *_ = np.linalg.lstsq(components[keep], vec[keep] - mean[keep],
                                     rcond=None)
        return coeffs


def build_pca(samples, n_components: int | None = None,
              symmetry_map=None) -> AlbedoPCA:
    """Fit an :class:`AlbedoPCA` on a list of (n, 3) signals."""
    return AlbedoPCA(n_components=n_components, symmetry_map=symmetry_map).fit(samples)


def build_paired(diffuse_samples, specular_samples,
                 n_components: int | None = None, variant: str = "transferred",
                 symmetry_map=None) -> PairedAlbedoPCA:
    """Fit a :class:`PairedAlbedoPCA` on matched signal lists."""
    return PairedAlbedoPCA(n_components=n_components, variant=variant,
                           symmetry_map=symmetry_map).fit(diffuse_samples,
                                                          specular_samples)


def loo_generalisation(diffuse_samples, specular_samples, variant: str,
                       d_values, symmetry_map=None) -> np.ndarray:
    """Leave-one-out specular reconstruction error per model dimension.

    For each held-out subject a paired model is built from the rest (with
    symmetry augmentation when a map is given); coefficients are fit per
    variant and the specular half is reconstructed.  Returns the mean RMS
    error (over vectors entries) across folds, one value per entry of
    ``d_values``.  ``d = 0`` measures deviation from the training mean.
    """
    if variant not in PAIRING_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    diffuse = _as_sample_matrix(diffuse_samples, "diffuse")
    specular = _as_sample_matrix(specular_samples, "specular")
    if diffuse.shape != specular.shape:
        raise MisalignedSamplesError("diffuse and specular sample shapes disagree")
    n_subjects = diffuse.shape[0]
    if n_subjects < 3:
        raise InsufficientSamplesError("leave-one-out needs at least 3 subjects")
    d_values = np.asarray(d_values, dtype=np.int64).reshape(-1)
    if (d_values < 0).any():
        raise ValueError("d values must be non-negative")
    d_max = int(d_values.max())

    errors = np.zeros((n_subjects, d_values.size))
    for i in range(n_subjects):
        rest = np.ones(n_subjects, dtype=bool)
        rest[i] = False
        model = PairedAlbedoPCA(
            n_components=max(d_max, 1),
            variant=variant, symmetry_map=symmetry_map,
        ).fit(diffuse[rest], specular[rest])
        x_diff = diffuse[i] - model.diffuse_mean_
        x_spec = specular[i] - model.specular_mean_
        for j, d in enumerate(d_values):
            recon = _loo_specular_reconstruction(model, x_diff, x_spec, int(d))
            errors[i, j] = np.sqrt(np.mean((recon - x_spec) ** 2))
    return errors.mean(axis=0)


def _loo_specular_reconstruction(model: PairedAlbedoPCA, x_diff: np.ndarray,
                                 x_spec: np.ndarray, d: int) -> np.ndarray:
    """Centered specular reconstruction at dimension d for one held-out
    subject, per variant."""
    if d == 0:
        return np.zeros_like(x_spec)
    if model.variant == "independent":
        p = model.specular_components_[:, :d]
        return p @ (p.T @ x_spec)
    if model.variant == "concatenated":
        p_diff = model.diffuse_components_[:, :d]
        b, *_ = np.linalg.lstsq(p_diff, x_diff, rcond=None)
        return model.specular_components_[:, :d] @ b
    p_diff = model.diffuse_components_[:, :d]
    b = p_diff.T @ x_diff
    return model.specular_components_[:, :d] @ b
