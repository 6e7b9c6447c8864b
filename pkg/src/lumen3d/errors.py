"""Exception hierarchy shared by all pipeline stages."""


class Lumen3DError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(Lumen3DError):
    """The job description or arguments are invalid (CLI exit code 2)."""


class DataError(Lumen3DError):
    """The input data violates a contract of the requested operation (CLI exit code 3)."""
