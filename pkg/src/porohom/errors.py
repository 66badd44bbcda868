"""Exception hierarchy shared by all solver stages."""


class PorohomError(Exception):
    """Base class for all package errors."""


class GeometryError(PorohomError):
    """Invalid cell or domain geometry (overlapping channels, bad widths)."""


class ResolutionError(GeometryError):
    """Mesh too coarse to resolve a geometric feature."""


class TilingError(GeometryError):
    """Node merging failed while tiling a cell (non-matching traces)."""


class PairingError(GeometryError):
    """Periodic node pairing failed; carries the offending node id."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


class PartitionError(GeometryError):
    """Region partition is inconsistent (e.g. facet between two channels)."""


class InvertedElementError(PorohomError):
    """Deformation gradient with non-positive determinant."""

    def __init__(self, msg, element=None):
        super().__init__(msg)
        self.element = element


class AssemblyError(PorohomError):
    """Missing data or inconsistent spaces during form assembly."""


class SolverError(PorohomError):
    """Linear solve failed (singular matrix, residual check failed)."""


class StepSizeError(PorohomError):
    """A configuration update produced an invalid mesh; retry with smaller dt."""


class InternalConsistencyError(PorohomError):
    """A runtime identity check failed, signalling an assembly/orientation bug."""


class ConfigError(PorohomError):
    """Invalid run configuration; message lists all offending entries."""
