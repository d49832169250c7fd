"""Exception types shared across the package."""


class EgsError(Exception):
    """Base class for all package errors."""


class ConfigError(EgsError):
    """Invalid or inconsistent configuration."""


class DimensionError(EgsError):
    """Vector length does not match the session table."""


class EnumerationBoundError(EgsError):
    """Brute-force instance exceeds the enumeration bound."""


class ConvergenceError(EgsError):
    """Iterative solve did not converge; carries the last iterate."""

    def __init__(self, message, last_rates=None, last_prices=None, iterations=None):
        super().__init__(message)
        self.last_rates = last_rates
        self.last_prices = last_prices
        self.iterations = iterations
