"""Exception hierarchy for the albedo pipeline.

Everything raised on purpose derives from :class:`FaceAlbedoError` so callers
can catch pipeline failures without swallowing programming errors.
"""

from __future__ import annotations


class FaceAlbedoError(Exception):
    """Base class for all pipeline errors."""


class DegenerateTriangleError(FaceAlbedoError, ValueError):
    """A triangle has (near-)zero area and no well defined gradient."""


class MissingSymmetryMapError(FaceAlbedoError, ValueError):
    """An operation needing a bilateral symmetry map got a mesh without one."""


class DimensionMismatchError(FaceAlbedoError, ValueError):
    """Array shapes disagree with the mesh or with each other."""


class SingularSystemError(FaceAlbedoError):
    """The least-squares system has a nullspace: some connected piece of the
    mesh carries no anchoring constraint."""


class NoReferenceCoverageError(FaceAlbedoError, ValueError):
    """The designated reference view owns no vertex at all."""


class DegenerateConfigurationError(FaceAlbedoError, ValueError):
    """Camera resection from a degenerate (e.g. coplanar) point set."""


class EmptyOverlapError(FaceAlbedoError, ValueError):
    """Spectral curve support and target grid do not overlap."""


class ZeroChannelResponseError(FaceAlbedoError, ValueError):
    """A sensor channel shows no response to the illuminant."""


class RankDeficientError(FaceAlbedoError, ValueError):
    """Input matrix lacks the rank the estimate requires."""


class InsufficientSamplesError(FaceAlbedoError, ValueError):
    """Too few samples for the requested statistical operation."""


class TooManyComponentsError(FaceAlbedoError, ValueError):
    """Requested model dimension exceeds what the samples can support."""


class UnderdeterminedFitError(FaceAlbedoError, ValueError):
    """Fewer usable observations than unknowns in a coefficient fit."""


class AllMaskedError(FaceAlbedoError, ValueError):
    """Every vertex is masked; nothing remains to anchor a fit or fill."""


class MisalignedSamplesError(FaceAlbedoError, ValueError):
    """Paired sample lists disagree in count or in vertex dimension."""


class EmptyRegionError(FaceAlbedoError, ValueError):
    """A vertex region that must be non-empty is empty."""


class ManifestError(FaceAlbedoError, ValueError):
    """Pipeline manifest failed validation."""
