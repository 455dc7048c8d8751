"""Exception hierarchy shared by all riemgrid modules."""


class RiemgridError(Exception):
    """Base class for all library errors."""


class PositivityLoss(RiemgridError):
    """A metric (or an intermediate point of an integration) left the SPD cone."""


class ToleranceNotMet(RiemgridError):
    """Adaptive step control could not reach the requested tolerance."""


class NoConvergence(RiemgridError):
    """An iterative solver ran out of iterations before reaching tolerance."""


class SolverStall(RiemgridError):
    """Conjugate gradients exceeded its iteration budget."""


class JacobianSignFlip(RiemgridError):
    """A candidate map fails the pointwise Jacobian-positivity proxy."""


class StepFailure(RiemgridError):
    """Flow integration produced non-finite positions."""


class RadiusTooLarge(RiemgridError):
    """Requested slice radius violates the isotropy-constancy bound."""


class ScalarPoint(RiemgridError):
    """Orbit chart requested at a scalar matrix, where the orbit degenerates."""


class OutsideTube(RiemgridError):
    """Point lies outside the tubular neighborhood served by the chart."""


class FormatError(RiemgridError):
    """On-disk field file has a bad magic line, version, or header."""


class ValidationError(RiemgridError):
    """On-disk payload violates the structural constraints of its declared kind."""
