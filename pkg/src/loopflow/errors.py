"""Exception hierarchy shared by all loopflow modules."""


class LoopflowError(Exception):
    """Base class for every error raised by loopflow."""


class NotSkewHermitian(LoopflowError):
    pass


class Singular(LoopflowError):
    pass


class DetNotOne(LoopflowError):
    pass


class NotInU3C0(LoopflowError):
    """Matrix is not in the complexified fixed algebra (traceless 2x2 block)."""


class NotTwisted(LoopflowError):
    pass


class BandLeak(LoopflowError):
    """An operation produced Fourier mass outside the allowed band."""


class InvariantDrift(LoopflowError):
    """A conserved or structural quantity drifted past tolerance.

    ``index`` is the offending grid node (or None) and ``residual`` the
    measured value.
    """

    def __init__(self, message, index=None, residual=None):
        super().__init__(message)
        self.index = index
        self.residual = residual


class CurvatureTooLarge(LoopflowError):
    pass


class UnitarityDrift(LoopflowError):
    pass


class BranchJump(LoopflowError):
    """Angle unwrapping met a neighbour jump of at least pi (grid too coarse)."""


class ZeroAngleDerivative(LoopflowError):
    pass


class GridTooCoarse(LoopflowError):
    pass


class TruncationTooShallow(LoopflowError):
    pass


class TruncationError(LoopflowError):
    pass


class IwasawaFailure(LoopflowError):
    pass


class IrrationalInput(LoopflowError):
    pass


class ChartSingularity(LoopflowError):
    pass
