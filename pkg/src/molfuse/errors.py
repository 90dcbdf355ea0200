"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/data problems exit 2, numeric
failures exit 1.
"""


class MolfuseError(Exception):
    """Base class for all package errors."""


class ShapeError(MolfuseError, ValueError):
    """Operands have incompatible or invalid shapes."""


class ParameterError(MolfuseError, ValueError):
    """A hyperparameter or argument lies outside its legal range."""


class NumericError(MolfuseError, ArithmeticError):
    """A computation produced or received non-finite values."""


class DataError(MolfuseError, ValueError):
    """Input data violates a documented contract."""


class ConfigError(MolfuseError, ValueError):
    """Configuration input is malformed or contains unknown keys."""


class MetricError(MolfuseError, ValueError):
    """A metric is undefined for the given inputs."""


class SmilesError(MolfuseError, ValueError):
    """SMILES string cannot be parsed.  Carries the character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.message = message
        self.offset = offset


class ValenceError(SmilesError):
    """Bond orders around an atom exceed every admissible valence."""
