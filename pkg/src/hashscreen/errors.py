"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes; library callers catch them directly.
"""


class HashscreenError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(HashscreenError, ValueError):
    """An argument violates a documented precondition (non-finite entry,
    inconsistent bit count, bad configuration value, ...)."""


class ShapeError(InvalidInputError):
    """Dimensions of two inputs do not line up."""


class DegenerateInputError(InvalidInputError):
    """A vector with (near-)zero norm reached a cosine computation.

    Degenerate embeddings indicate a failed encoder, so they surface as an
    error instead of silently producing a 0 similarity.
    """


class UndefinedMetricError(InvalidInputError):
    """A ranking metric was requested on inputs where it is undefined
    (no actives, no inactives, or an empty cutoff window)."""


class ParseError(HashscreenError, ValueError):
    """A text input (TSV, config file) failed to parse.

    The message always carries ``path:line`` so rejected rows are traceable.
    """


class CorruptDatabaseError(HashscreenError):
    """A code database file failed an integrity check.

    ``check`` names the violated check: "magic", "version", "size",
    "code_bits", or "ids" (sidecar line count).
    """

    def __init__(self, message: str, check: str):
        super().__init__(message)
        self.check = check


class CorruptCheckpointError(HashscreenError):
    """A parameter checkpoint file failed an integrity check."""


class TrainingDivergedError(HashscreenError):
    """Training produced a non-finite loss; the message carries diagnostics."""


class ResourceLimitError(HashscreenError):
    """A benchmark or scan would exceed available disk or memory."""
