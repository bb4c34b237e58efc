"""Exception types shared across the package."""


class CraftbenchError(Exception):
    """Base class for all package errors."""


class ParseError(CraftbenchError, ValueError):
    """Malformed input file or record."""


class ValidationError(CraftbenchError, ValueError):
    """Structurally valid input that violates a dataset invariant."""


class ConfigError(CraftbenchError, ValueError):
    """Configuration value outside its documented range."""


class ContractError(CraftbenchError, RuntimeError):
    """An operation was called in a state its contract forbids."""


class SamplingExhausted(CraftbenchError, RuntimeError):
    """Task sampling gave up after the bounded number of rejections."""
