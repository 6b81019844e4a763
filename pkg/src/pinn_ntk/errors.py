"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class UnsupportedOrder(ValueError):
    """Requested derivative order exceeds what the activation table supports."""


class UnsupportedConfiguration(ValueError):
    pass


class IncompleteJet(KeyError):
    """An operator referenced a derivative that is missing from the jet."""


class IterationLimit(RuntimeError):
    """Power iteration did not reach tolerance; ``last`` holds the final estimate."""

    def __init__(self, message, last=None, vector=None):
        super().__init__(message)
        self.last = last
        self.vector = vector


class TrainingDiverged(RuntimeError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step
