"""Exception types shared across the package."""


class SleLabError(Exception):
    """Base class for all package errors."""


class SlitSwallowed(SleLabError):
    """A point strictly inside the swallowed segment was fed to a slit map."""


class BranchAmbiguity(SleLabError):
    """An intermediate value landed too close to a square-root branch cut."""


class SigmaOutOfRange(SleLabError):
    """|sigma| >= 1, the scale function integral diverges."""


class DegenerateForceViolation(SleLabError):
    """Degenerate force weaker than kappa/2 - 2 in strict mode."""


class PoleAt(SleLabError):
    """Evaluation requested within tolerance of a Moebius pole."""


class HullTooLarge(SleLabError):
    """Hull diameter too large relative to its distance to the map pole."""


class ResolutionFailure(SleLabError):
    """Component labeling ambiguous at the current raster resolution."""


class DomainViolation(SleLabError):
    """Hull closures intersect; the requested (t1, t2) is outside D."""


class FactorUnderflow(SleLabError):
    """A martingale factor |E_{j,m}| fell below the underflow floor."""


class TooFewSamples(SleLabError):
    """Not enough samples for the requested statistic."""
