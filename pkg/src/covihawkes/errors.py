"""Exception hierarchy shared across the package."""


class CoviHawkesError(Exception):
    """Base class for every error raised by covihawkes."""


class ParseError(CoviHawkesError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class UnknownRegionError(CoviHawkesError, LookupError):
    pass


class DataConsistencyError(CoviHawkesError, ValueError):
    pass


class DayRangeError(CoviHawkesError, IndexError):
    pass


class ShapeError(CoviHawkesError, ValueError):
    pass


class DomainError(CoviHawkesError, ValueError):
    pass


class EmptyAggregationError(CoviHawkesError, ValueError):
    pass


class TrainingDivergedError(CoviHawkesError, RuntimeError):
    def __init__(self, iteration, message="non-finite negative log-likelihood"):
        self.iteration = iteration
        super().__init__(f"training diverged at iteration {iteration}: {message}")
