"""Exception hierarchy shared by every module."""


class OccLPError(Exception):
    """Base class for all library errors."""


class ExprSyntaxError(OccLPError):
    def __init__(self, message, offset, expected=None):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at offset {offset}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class ExprEvalError(OccLPError):
    """Unbound variable, unknown function or a domain error during evaluation."""


class SystemSpecError(OccLPError):
    """Inconsistent system definition (bounds violated, empty control grid, ...)."""


class ViabilityError(OccLPError):
    """A state left the (relaxed) constraint set."""

    def __init__(self, message, time=None, state=None):
        self.time = time
        self.state = state
        super().__init__(message)


class IntegrationError(OccLPError):
    pass


class DPError(OccLPError):
    """Dynamic programming failure, e.g. a grid node without admissible control."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message)


class LPError(OccLPError):
    """Numerical failure inside the simplex solver."""

    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class ConfigError(OccLPError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(message + (f" [{', '.join(where)}]" if where else ""))
