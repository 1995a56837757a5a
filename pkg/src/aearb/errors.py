"""Exception hierarchy shared by all modules."""


class AearbError(Exception):
    """Base class for library errors."""


class ConfigurationError(AearbError, ValueError):
    """Invalid grid, ensemble size, config value or missing input."""


class ShapeError(AearbError, ValueError):
    """Array inputs with incompatible shapes."""


class DomainError(AearbError, ValueError):
    """Parameter outside the domain where a formula is claimed to hold."""


class HorizonTooSmallError(DomainError):
    """Horizon too short for the cascade constants to be defined."""


class SearchExhaustedError(AearbError, RuntimeError):
    """Integer horizon search hit its cap without success."""


class SimulationError(AearbError, RuntimeError):
    """Non-finite state encountered during path simulation."""

    def __init__(self, message, path_index=None, step=None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step


class ModelMismatchError(AearbError, ValueError):
    """Model does not satisfy the requirements of a construction."""


class UnsupportedModelError(ModelMismatchError):
    """Construction only implemented for a narrower model class."""


class ExperimentError(AearbError):
    """Failure inside an experiment stage, tagged with module and parameter."""

    def __init__(self, module, parameter, cause):
        self.module = module
        self.parameter = parameter
        self.cause = cause
        super().__init__(f"[{module}] {parameter}: {cause}")
