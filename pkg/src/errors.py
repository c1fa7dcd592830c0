"""Exception hierarchy for the safe arm RL stack"""
from typing import Any, Dict, Optional


class SafeArmError(Exception):
    """Base class for every error raised by this package"""


class ContractViolation(SafeArmError, ValueError):
    """Caller broke an operation's precondition (shape mismatch, NaN input)"""


class ConfigurationError(SafeArmError, ValueError):
    """Invalid configuration or infeasible sampling regions"""


class TrainingDiverged(SafeArmError, RuntimeError):
    """A loss went NaN; carries enough state to diagnose the run"""

    def __init__(self, message: str, epoch: int, state: Optional[Dict[str, Any]] = None,
                 seed: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
        self.state = state or {}
        self.seed = seed

    def __reduce__(self):
        # crosses process boundaries when seeds run in a worker pool
        return (type(self), (self.args[0], self.epoch, self.state, self.seed))

    def __str__(self) -> str:
        base = super().__str__()
        if self.seed is not None:
            return f"{base} (seed {self.seed}, epoch {self.epoch})"
        return f"{base} (epoch {self.epoch})"
