"""Exception types shared across the package.

Everything derives from :class:`XsenseError` so callers can catch the whole
family at the CLI boundary; most classes also subclass ``ValueError`` to stay
friendly to sklearn-style validation.
"""


class XsenseError(Exception):
    pass


class MalformedHeader(XsenseError, ValueError):
    """Store/map/dict file does not start with the expected magic or version."""


class TruncatedFile(XsenseError, ValueError):
    """File ends before the header-promised payload does."""


class IoFailure(XsenseError, OSError):
    """Underlying read/write failed."""


class DimensionMismatch(XsenseError, ValueError):
    """Vector or matrix dimensions do not agree."""


class NonFinite(XsenseError, ValueError):
    """Input contains NaN or Inf."""


class UnknownId(XsenseError, KeyError):
    """Record id not present in the store."""


class InsufficientAnchors(XsenseError, ValueError):
    """Too few anchor pairs to produce a train/test split."""


class EmptyTestSet(XsenseError, ValueError):
    """Retrieval evaluation called with no test rows."""


class InvalidHyperparameter(XsenseError, ValueError):
    """Hyperparameter outside its valid range (k < 1, lambda <= 0, ...)."""


class LengthMismatch(XsenseError, ValueError):
    """Aligned sequences have different lengths."""


class UnknownSense(XsenseError, KeyError):
    """Sense id not present in the inventory."""


class EmptyCandidates(XsenseError, ValueError):
    """Inference called with an empty candidate list."""


class MalformedXml(XsenseError, ValueError):
    """Evaluation corpus XML could not be parsed."""


class MissingGold(XsenseError, ValueError):
    """An annotated instance has no gold key."""


class DegenerateTable(XsenseError, ValueError):
    """McNemar table with b + c = 0."""


class InsufficientSample(XsenseError, ValueError):
    """Statistical test needs at least two observations per sample."""


class ZeroVariance(XsenseError, ValueError):
    """Statistical test with zero pooled variance."""


class EmptyGrid(XsenseError, ValueError):
    """Model selection over an empty configuration grid."""


class ConfigContradiction(XsenseError, ValueError):
    """Run configuration violates a regime/track consistency rule."""
