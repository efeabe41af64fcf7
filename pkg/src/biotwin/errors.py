"""Exception types shared across the package.

Everything user-facing derives from BiotwinError so the CLI can map
input/validation problems to exit code 2 and keep genuine bugs at 1.
"""


class BiotwinError(Exception):
    """Base class for all input and validation errors raised by biotwin."""


class SchemaError(BiotwinError):
    """A config file violates its schema; message carries the field path."""


class DegenerateGeometryError(BiotwinError):
    """Point configuration too degenerate for a similarity fit (rank < 2)."""


class MappingError(BiotwinError):
    """Marker-to-vertex mapping problem; message names the marker."""


class FormatError(BiotwinError):
    """Malformed TRC/motion file; message carries a line locator."""


class NoSubjectError(BiotwinError):
    """No detection survived filtering; there is no subject to track."""


class IkError(BiotwinError):
    """Kinematic chain or IK problem setup error."""
