"""Exception types shared across the package."""


class MarylabError(Exception):
    """Base class for all package-specific errors."""


class PrecisionExhausted(MarylabError):
    """The working precision cannot certify the requested result."""


class IndexOutOfRange(MarylabError):
    """A continued-fraction scale index outside the stored expansion."""


class SingularPhase(MarylabError):
    """theta lies (numerically) on the singular set 1/2 + alpha Z + Z."""


class SmallScale(MarylabError):
    """The scale q_n is below the threshold where the construction applies."""


class ConstructionFailed(MarylabError):
    """The anti-resonance construction could not be completed."""


class WrongBranch(MarylabError):
    """An operation specific to one partial-quotient branch was called on the other."""


class SingularSite(MarylabError):
    """A lattice site whose phase is too close to the potential singularity."""


class NearEigenvalue(MarylabError):
    """The energy is too close to an eigenvalue of the box for a stable Green function."""


class ConvergenceFailure(MarylabError):
    """An iterative solver did not reach its tolerance."""


class IllConditioned(MarylabError):
    """The computation would lose all significant digits at the working precision."""


class DegenerateNodes(MarylabError):
    """Two interpolation nodes coincide modulo 1 within the error radius."""


class RangeViolation(MarylabError):
    """An argument outside the validity range of the requested construction."""


class ResonantY(MarylabError):
    """The site y is resonant (too close to q_n Z) for a non-resonant node set."""


class EmptyInterval(MarylabError):
    """No admissible integer block half-width exists in the prescribed interval."""


class NotNormalizable(MarylabError):
    """phi numerically vanishes at the normalization sites (re-center the box)."""
