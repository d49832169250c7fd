class PlotsError(Exception):
    """Base class for all rendering errors."""


class SchemaError(PlotsError):
    """An input file does not match the expected format; the message names
    the offending column or key."""
