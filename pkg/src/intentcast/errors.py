"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so raise the most specific
one available.
"""


class ScenarioFormatError(ValueError):
    """A scenario or manifest file is malformed or violates a data invariant."""


class SchemaError(ValueError):
    """Structured inputs (configs, dumps, checkpoints) do not match their schema."""


class NumericError(RuntimeError):
    """A non-finite value was produced where finite math is required."""


class ShapeError(ValueError):
    """Tensor or array shapes do not match an operation's contract."""
