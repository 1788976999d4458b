"""Error types raised by the solver pipeline."""


class WGError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WGError, ValueError):
    pass


class CapacityError(WGError):
    pass


class GeometryError(WGError, ValueError):
    pass


class MeshIntegrityError(WGError):
    pass


class ConditioningError(WGError):
    """A local Gram or operator solve lost too much precision."""

    def __init__(self, message, element=None, condition=None):
        super().__init__(message)
        self.element = element
        self.condition = condition


class SingularSystemError(WGError):
    """The global saddle-point solve failed or left a large residual."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
