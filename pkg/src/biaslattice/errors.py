"""Exception types shared across the package."""


class BiasLatticeError(Exception):
    """Base class for all package-specific errors."""


class InputFormatError(BiasLatticeError):
    """A file, byte stream, or corpus line failed to parse.

    The command-line driver maps this to exit code 2.
    """
