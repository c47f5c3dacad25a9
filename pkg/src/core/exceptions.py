class GeBridgeError(Exception):
    """Base error; `exit_code` is what the CLI returns when it escapes"""

    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class DomainError(GeBridgeError, ValueError):
    """Argument outside the domain of an operation"""

    exit_code = 2


class InsufficientDataError(DomainError):
    """Estimator has nothing to estimate from"""


class ConfigError(GeBridgeError):
    """Unusable command-line or config-file input"""

    exit_code = 2


class FactorizationError(GeBridgeError):
    """Covariance square root could not be formed"""

    exit_code = 1

