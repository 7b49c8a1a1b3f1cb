"""Exception hierarchy, aligned with the CLI exit-code contract."""


class CvbiasError(Exception):
    """Base class for all cvbias errors."""


class ConfigError(CvbiasError):
    """Invalid configuration, specification, or request (exit code 2)."""


class StationarityError(ConfigError):
    """The requested process is not stationary and is rejected before simulation."""


class SizeError(ConfigError):
    """Sample sizes, grids, or training sets are too small for the request."""


class NumericalError(CvbiasError):
    """Numerical failure during estimation (exit code 3)."""


class SingularityError(NumericalError):
    """A Gram matrix is singular or too ill-conditioned to trust."""

    def __init__(self, message, model_id=None, index=None):
        parts = [message]
        if model_id is not None:
            parts.append(f"model={model_id!r}")
        if index is not None:
            parts.append(f"index={index}")
        super().__init__(" ".join(parts))
        self.model_id = model_id
        self.index = index


class LeverageError(NumericalError):
    """An observation fully determines its own fit (leverage at 1)."""

    def __init__(self, message, model_id=None, index=None):
        parts = [message]
        if model_id is not None:
            parts.append(f"model={model_id!r}")
        if index is not None:
            parts.append(f"index={index}")
        super().__init__(" ".join(parts))
        self.model_id = model_id
        self.index = index


class InternalConsistencyError(NumericalError):
    """An exact internal identity was violated; indicates a numerical or logic fault."""


class ReliabilityError(CvbiasError):
    """Too many replications failed for the cell to be trustworthy (exit code 4)."""
