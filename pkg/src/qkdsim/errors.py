"""Exception types shared across the package."""


class QkdSimError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimension(QkdSimError):
    """Register dimension d is not an integer >= 2."""


class ValueOutOfRange(QkdSimError):
    """A residue or key value lies outside [0, d)."""


class UnknownRegister(QkdSimError):
    """A register label is not present in the layout."""


class RegisterCollision(QkdSimError):
    """A register with this label already exists."""


class MissingRegister(QkdSimError):
    """An operation needs a register the state does not carry."""


class NonUnitaryMatrix(QkdSimError):
    """A dense gate matrix failed the unitarity check."""


class EmptyKeepSet(QkdSimError):
    """partial_trace was asked to keep no registers."""


class InvalidBipartition(QkdSimError):
    """A Schmidt cut does not split the registers into two nonempty sides."""


class LayoutMismatch(QkdSimError):
    """Two states do not share the same register layout."""


class RegisterNotSeparable(QkdSimError):
    """A register holds more than one basis value and cannot be dropped."""


class ScriptRegisterUnknown(QkdSimError):
    """An attack script references a register the session does not have."""


class IllegalRegisterAccess(QkdSimError):
    """An eavesdropper action touches a register she cannot reach."""


class UnknownPreset(QkdSimError):
    """Attack preset name is not recognised."""


class ExplosionGuard(QkdSimError):
    """A brute-force enumeration would exceed the configured state budget."""


class FamilyTooLarge(QkdSimError):
    """The gate-sequence enumeration would exceed the hard size cap."""


class ConfigError(QkdSimError):
    """Bad user-supplied configuration or scenario."""


class InvariantViolation(QkdSimError):
    """An internal self-check failed during a run."""
