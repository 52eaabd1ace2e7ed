"""Exception hierarchy for the bending pipeline.

Each stage raises a subclass of :class:`BendingError`; the command-line
front end maps the three families (configuration, hypothesis, solver) to
distinct exit codes.
"""


class BendingError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(BendingError):
    pass


class HypothesisError(BendingError):
    """Input surface or domain does not satisfy the geometric assumptions."""


class SolverError(BendingError):
    """A numerical stage failed to produce an acceptable answer."""


# grid
class MultiplyConnectedDomain(HypothesisError):
    pass


class ResolutionTooLow(ConfigError):
    pass


# surface
class DegenerateImmersion(HypothesisError):
    pass


class OrientationUndecidable(HypothesisError):
    pass


class CurvatureHypothesisViolated(HypothesisError):
    pass


class FitUnstable(SolverError):
    pass


# asymptotic
class NegativeDiscriminant(HypothesisError):
    pass


# first integral
class SolverDiverged(SolverError):
    pass


class InjectivityFailed(SolverError):
    pass


class CurvatureProfileInvalid(HypothesisError):
    pass


# vekua
class JacobianSingular(SolverError):
    pass


class IterationDiverged(SolverError):
    pass


class ResidualAboveTolerance(SolverError):
    pass


class VanishingOrderTooLow(SolverError):
    pass


# bending
class DivisionUnstable(SolverError):
    pass


class DeterminantTooSmall(SolverError):
    pass
