"""Exception types shared across the package.

The CLI maps these onto process exit codes (see ``mstnet.cli``).
"""


class MstnetError(Exception):
    """Base class for all package errors."""


class ConfigError(MstnetError, ValueError):
    """Invalid or inconsistent configuration."""


class DimensionError(MstnetError, ValueError):
    """Tensor shapes do not fit the operation."""


class ContractError(MstnetError, ValueError):
    """A precondition of an operation was violated by the caller."""


class DataError(MstnetError):
    """Malformed corpus or checkpoint file, or data/model mismatch."""


class VocabMismatchError(DataError):
    pass


class NumericError(MstnetError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class InfeasibleTargetError(MstnetError, ValueError):
    """No CTC alignment of the target fits into the available frames.

    ``level`` is filled in when the error is raised from a multi-level loss.
    """

    def __init__(self, target_len, required, available, level=None):
        self.target_len = target_len
        self.required = required
        self.available = available
        self.level = level
        where = f" at level {level}" if level is not None else ""
        super().__init__(
            f"target of length {target_len} needs at least {required} frames"
            f"{where}, only {available} available"
        )
