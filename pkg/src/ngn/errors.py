"""Exception types shared across the package."""


class NgnError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(NgnError):
    """A map or structure fails a structural requirement (e.g. non-bijective)."""


class CapacityError(NgnError):
    """An input exceeds a documented size or group-order cap."""


class NodeLookupError(NgnError):
    """A node, edge, or class member is not present where required."""


class ShapeError(NgnError):
    """Dimension mismatch between features, representations, or kernels."""


class ContractError(NgnError):
    """A caller violated a documented precondition."""


class GenerationError(NgnError):
    """Randomized construction exhausted its retry budget."""


class ClassMissError(NgnError):
    """An edge resolves to no solved class and lazy solving is disabled."""


class ParseError(NgnError):
    """A data file is malformed; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
