"""Exception types shared across the package."""


class EntiltError(Exception):
    """Base class for all entilt errors."""


class InvalidInput(EntiltError):
    """Arguments violate a documented precondition."""


class DivergentIntegral(EntiltError):
    """A truncated integral estimate fails to stabilize as the truncation widens."""


class DegenerateWeights(EntiltError):
    """Reweighting produced an all-zero weight vector."""


class NotAbsolutelyContinuous(EntiltError):
    """Ratio undefined (or non-finite) on a region where the base density is positive."""


class SupportMismatch(EntiltError):
    """Two distributions being compared do not share a common support / point set."""


class Infeasible(EntiltError):
    """No posterior of the required form satisfies the views."""


class RootNotBracketed(EntiltError):
    """A scalar root search could not bracket a sign change."""


class SingularJacobian(EntiltError):
    """Change-of-variables map has a singular Jacobian."""


class SingularBlock(EntiltError):
    """A covariance block that must be invertible is singular."""


class ConfigError(EntiltError):
    """Malformed run configuration (CLI exit code 2)."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
