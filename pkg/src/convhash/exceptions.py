"""Exception types. Each carries the CLI exit code it maps to."""


class ConvHashError(Exception):
    exit_code = 1


class DataError(ConvHashError, ValueError):
    """Invalid or insufficient input data (audio, annotations, matrices)."""

    exit_code = 2


class ModelFormatError(ConvHashError):
    """A model file is malformed, truncated or of an unknown version."""

    exit_code = 3
