"""Exception hierarchy shared by all modules; each class carries a CLI exit code."""


class RenormError(Exception):
    exit_code = 1


class ConfigError(RenormError):
    exit_code = 2


class ArgumentError(ConfigError, ValueError):
    pass


class CombinatoricsError(RenormError):
    exit_code = 3


class ConvergenceError(RenormError):
    exit_code = 4

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class InversionError(ConvergenceError):
    pass


class ProjectionError(ConvergenceError):
    pass


class PrecisionError(RenormError):
    exit_code = 5


class DomainError(PrecisionError):
    pass


class CompositionError(DomainError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class StructuralError(RenormError):
    exit_code = 3


class ConsistencyError(RenormError):
    exit_code = 4
