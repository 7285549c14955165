"""Exception types shared across the package.

Everything raised on bad user input derives from AubaseError so the CLI can
map it to exit code 1; anything else is treated as an internal failure.
"""


class AubaseError(Exception):
    """Base class for input-validation and data-format failures."""

    category = "error"

    def one_line(self) -> str:
        return f"error: {self.category}: {self}"


class InvalidArgumentError(AubaseError):
    category = "invalid-argument"


class DataFormatError(AubaseError):
    """Malformed manifest, sample file, or serialized model."""

    category = "data-format"


class LayoutError(AubaseError):
    """Records cannot be grouped into complete experiments."""

    category = "layout"


class DegenerateDataError(AubaseError):
    """Data has no usable variance for the requested operation."""

    category = "degenerate-data"


class NotConvergedError(AubaseError):
    """An iterative solver hit its iteration cap before its tolerance."""

    category = "not-converged"
