"""Exception hierarchy shared by every module of the toolkit."""


class PlatoonError(Exception):
    """Base class for all toolkit errors."""


class GraphError(PlatoonError, ValueError):
    """Invalid platoon communication graph."""


class SpectrumError(PlatoonError):
    """The coupling matrix cannot be factored as required by the design."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class ComplexSpectrum(SpectrumError):
    pass


class RepeatedEigenvalue(SpectrumError):
    pass


class NonPositiveEigenvalue(SpectrumError):
    pass


class NonPositiveTau(PlatoonError, ValueError):
    pass


class DimensionMismatch(PlatoonError, ValueError):
    pass


class NotHurwitz(PlatoonError):
    pass


class NonPositiveGamma(PlatoonError, ValueError):
    pass


class NonPositiveInput(PlatoonError, ValueError):
    pass


class SingularQ(PlatoonError):
    pass


class Infeasible(PlatoonError):
    """LMI search ended without a strictly feasible point."""

    def __init__(self, message, best_margin):
        super().__init__(message)
        self.best_margin = best_margin


class NonFiniteState(PlatoonError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ZeroDisturbance(PlatoonError, ValueError):
    pass


class CoverageGap(PlatoonError, ValueError):
    pass


class MissingColumn(PlatoonError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UnparsableRow(PlatoonError, ValueError):
    def __init__(self, message, row):
        super().__init__(message)
        self.row = row


class EmptyFile(PlatoonError, ValueError):
    pass


class SpanTooSmall(PlatoonError, ValueError):
    pass


class DegenerateWindow(PlatoonError):
    pass
