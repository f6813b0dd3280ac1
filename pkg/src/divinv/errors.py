"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
1 I/O, 2 validation, 3 convergence, 4 resolution.
"""


class DivInvError(Exception):
    exit_code = 2


# geometry
class GeometryError(DivInvError):
    pass


class InclusionChainViolated(GeometryError):
    def __init__(self, hole, link, detail=""):
        self.hole = hole
        self.link = link
        super().__init__(f"InclusionChainViolated: hole {hole}, link {link} {detail}".rstrip())


class ControlVolumesOverlap(GeometryError):
    def __init__(self, m, n, distance, limit):
        self.m, self.n = m, n
        super().__init__(
            f"ControlVolumesOverlap: holes {m} and {n} at distance {distance:.6g} <= {limit:.6g}"
        )


class HoleCountExceeded(GeometryError):
    pass


class BadDeltas(GeometryError):
    pass


class InfeasibleDeltas(GeometryError):
    pass


class BadConfig(GeometryError):
    pass


class CutoffGeometryError(GeometryError):
    pass


# numerics
class BadExponent(DivInvError):
    pass


class EmptyRegion(DivInvError):
    pass


class RegionNotConnected(DivInvError):
    pass


class MeanNotZero(DivInvError):
    pass


class NotStarShaped(DivInvError):
    pass


class CompatibilityViolated(DivInvError):
    pass


class NonConvergence(DivInvError):
    exit_code = 3


class ResidualTooLarge(DivInvError):
    exit_code = 3


class UnderResolved(DivInvError):
    exit_code = 4


# harness / ledger
class ExponentRange(DivInvError):
    pass


class TooFewPoints(DivInvError):
    pass


class GammaRange(DivInvError):
    pass


class NotAdmissible(DivInvError):
    pass


class Delta0TooLarge(DivInvError):
    pass


class NotBetween(DivInvError):
    pass
