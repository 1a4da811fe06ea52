"""Exception hierarchy shared by every module."""

from typing import Optional


class CCIdentError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(CCIdentError, ValueError):
    """A caller supplied an argument outside the operation's contract."""


class InvalidData(CCIdentError, ValueError):
    """Input data cannot support the requested identification."""


class ConfigError(CCIdentError, ValueError):
    """Run configuration is malformed or incomplete."""


class IntegrationError(CCIdentError):
    """Forward integration stopped before reaching t_max."""

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message)
        self.t = t


class StiffnessFailure(IntegrationError):
    """Step size collapsed (or the evaluation budget ran out)."""


class DivergenceError(IntegrationError):
    """State became non-finite or left the divergence bound."""


class TrainingFailure(CCIdentError):
    """Neural training produced a non-finite loss."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
