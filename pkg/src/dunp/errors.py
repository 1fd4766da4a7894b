"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when shapes, values, or config fields violate a contract."""


class ZeroVarianceError(ValueError):
    """Raised when a paired t-test sees identical differences everywhere."""


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient goes non-finite during training.

    Carries enough state for the caller to persist the last good model.
    """

    def __init__(self, message, parameter=None, epoch=None, best_state=None):
        super().__init__(message)
        self.parameter = parameter
        self.epoch = epoch
        self.best_state = best_state
