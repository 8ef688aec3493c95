"""Exception types shared across the package.

The command line maps these onto exit codes: configuration problems are
usage errors, file-format problems are data errors, and the remaining
types signal numerical failures.
"""


class DpdError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(DpdError):
    """Invalid parameter value, structure definition, or config file key."""


class FormatError(DpdError):
    """Malformed input file.

    ``path`` names the offending file when known.  For binary files
    ``offset`` is the byte position of the problem; for text files
    ``line`` is the 1-based line number.
    """

    def __init__(self, message, path=None, offset=None, line=None):
        self.path = path
        self.offset = offset
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DimensionError(DpdError):
    """Operands whose shapes or lengths do not agree."""


class DegenerateInputError(DpdError):
    """Input with no usable content, e.g. an all-zero reference signal."""


class DegenerateAlignmentError(DpdError):
    """Received signal orthogonal to the reference; no gain can align them."""


class RankDeficiencyError(DpdError):
    """Normal equations too ill-conditioned to solve reliably."""


class DivergenceError(DpdError):
    """Iterative learning loop whose error keeps growing."""
