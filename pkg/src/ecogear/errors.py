"""Exception types raised across the package."""


class EcogearError(Exception):
    """Base class for all package errors."""


class DomainError(EcogearError, ValueError):
    """An argument lies outside the domain of a model function."""


class InfeasibleGearError(EcogearError):
    """Motor speed in the requested gear exceeds the motor speed limit."""


class TorqueInfeasibleError(EcogearError):
    """Driving torque demand exceeds the motor torque limit."""


class FittingError(EcogearError):
    """The power polynomial could not be fitted."""


class CycleError(EcogearError, ValueError):
    """Malformed driving cycle input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ContractError(EcogearError, ValueError):
    """A plan or input violates an operation's precondition."""


class InfeasibleScenarioError(EcogearError):
    """No gear sequence satisfies the motor limits over the horizon."""


class TrainingError(EcogearError):
    """Training diverged."""

    def __init__(self, message, epoch):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class SimulationError(EcogearError):
    """Closed-loop simulation aborted."""

    def __init__(self, message, step):
        super().__init__(f"step {step}: {message}")
        self.step = step
