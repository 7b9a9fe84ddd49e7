"""Exception types raised across the package."""


class RPTestError(Exception):
    """Base class for computational failures in residual prediction tests."""


class DimensionMismatch(RPTestError, ValueError):
    pass


class ZeroColumn(RPTestError, ValueError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} cannot be scaled (constant or zero)")


class NonFinite(RPTestError, ValueError):
    pass


class InvalidParam(RPTestError, ValueError):
    pass


class NonConvergence(RPTestError):
    def __init__(self, iterations, gap):
        self.iterations = iterations
        self.gap = gap
        super().__init__(
            f"solver did not converge after {iterations} sweeps (gap={gap:.3g})"
        )


class ZeroResponse(RPTestError, ValueError):
    pass


class RankDeficient(RPTestError, ValueError):
    pass


class DegenerateResidual(RPTestError):
    pass


class DegenerateColumn(RPTestError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"leave-one-out standard deviation is zero in column {column}")


class DegenerateInput(RPTestError, ValueError):
    pass


class DegenerateScale(RPTestError):
    pass


class NoOobSamples(RPTestError):
    pass


class FactorizationFailure(RPTestError):
    pass
