"""Exception taxonomy shared across the package.

CLI exit-code mapping: ConfigError subclasses exit with 2, every other
EmbShieldError with 3.
"""


class EmbShieldError(Exception):
    """Base class for all embshield errors."""


# --- configuration / input validation (CLI exit code 2) ---

class ConfigError(EmbShieldError):
    """Invalid configuration file, field, or combination."""


class InvalidConfigError(ConfigError):
    pass


class InvalidChainError(ConfigError):
    """Protection chain violates stage-ordering rules."""


class InvalidFractionError(ConfigError):
    pass


class InvalidParamsError(ConfigError):
    """Bad protection or encryption parameters."""


class InvalidIntervalError(ConfigError):
    pass


# --- data / math contract violations (CLI exit code 3) ---

class ZeroVectorError(EmbShieldError):
    pass


class DimMismatchError(EmbShieldError):
    pass


class InvalidDimError(EmbShieldError):
    pass


class EmptyGalleryError(EmbShieldError):
    pass


class InsufficientDataError(EmbShieldError):
    pass


class DimTooSmallError(EmbShieldError):
    pass


class InvalidBlockSizeError(EmbShieldError):
    pass


class RangeViolationError(EmbShieldError):
    pass


class MissingClassError(EmbShieldError):
    pass


class DegenerateLabelsError(EmbShieldError):
    pass


class IllConditionedError(EmbShieldError):
    pass


class DomainViolationError(EmbShieldError):
    """Encrypted-cosine operand norms fall outside the fitted interval."""


# --- homomorphic-encryption engine ---

class TooManyValuesError(EmbShieldError):
    pass


class ScaleOverflowError(EmbShieldError):
    pass


class ParamsMismatchError(EmbShieldError):
    pass


class LevelMismatchError(EmbShieldError):
    pass


class ScaleMismatchError(EmbShieldError):
    pass


class LevelExhaustedError(EmbShieldError):
    """No modulus-chain level left for the requested operation."""


class MissingRotationKeyError(EmbShieldError):
    pass


class MalformedCiphertextError(EmbShieldError):
    pass
