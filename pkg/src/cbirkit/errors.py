"""Exception types shared across the engine."""


class CbirError(Exception):
    """Base class for all engine errors."""


class FormatError(CbirError):
    """Malformed feature or dictionary file."""


class ManifestError(CbirError):
    """Feature id missing from, or inconsistent with, a manifest."""


class DataError(CbirError):
    """Invalid data values (non-finite, empty, out of range)."""


class DimensionError(CbirError):
    """Vector or matrix shapes do not agree."""


class SpecError(CbirError):
    """Invalid parameter settings (k out of range, bad sizes, ...)."""


class SplitError(CbirError):
    """Train/test split cannot be satisfied."""


class PipelineError(CbirError):
    """Transform stages do not chain, or a stage is misconfigured."""


class EvaluationError(CbirError):
    """Evaluation protocol violated (e.g. a query with no relevant items)."""
