"""Exception hierarchy.

Every failure that stems from bad geometry or bad data derives from
:class:`GeometryError`, so callers (and the CLI, which maps it to exit code 2)
can catch one type.
"""


class GeometryError(Exception):
    """Base class for data/geometry failures."""


class SingularGeometry(GeometryError):
    pass


class InsufficientLines(GeometryError):
    pass


class DegenerateProjection(GeometryError):
    pass


class NoFixation(GeometryError):
    pass


class InsideSphere(GeometryError):
    pass


class InsufficientGlints(GeometryError):
    pass


class NoConvergence(GeometryError):
    pass


class PupilRayMiss(GeometryError):
    pass


class DegenerateAxis(GeometryError):
    pass


class EmptyInput(GeometryError):
    pass


class GimbalDegenerate(GeometryError):
    pass


class Underdetermined(GeometryError):
    pass


class SingularBasis(GeometryError):
    pass


class DegenerateOutput(GeometryError):
    pass


class DivergedTraining(GeometryError):
    pass


class InsufficientCalibration(GeometryError):
    pass


class ConfigError(GeometryError):
    pass
