"""Exception hierarchy.  Every error that has a witness carries it as attributes."""

from __future__ import annotations


class GenfixError(Exception):
    """Base class for all library errors."""

    def __init__(self, message: str = "", **witness):
        super().__init__(message)
        self.witness = witness
        for key, value in witness.items():
            setattr(self, key, value)


class MalformedSpec(GenfixError):
    pass


class InvalidGauge(GenfixError):
    pass


class InvalidGrid(GenfixError):
    pass


class NotInvertible(GenfixError):
    pass


class AllZeroTail(GenfixError):
    """Every tail sample is exactly zero: exactly negligible on the grid."""


class InsufficientSamples(GenfixError):
    pass


class DimensionMismatch(GenfixError):
    pass


class NotInvertibleInRing(NotInvertible):
    pass


class DomainViolation(GenfixError):
    pass


class ModerationFailure(GenfixError):
    pass


class UnknownBuiltin(GenfixError):
    pass


class MissingParam(GenfixError):
    pass


class LexError(GenfixError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}", position=position)


class ParseError(GenfixError):
    def __init__(self, message: str, position: int, expected=()):
        exp = ", ".join(expected)
        text = f"{message} at offset {position}"
        if exp:
            text += f" (expected {exp})"
        super().__init__(text, position=position, expected=tuple(expected))


class UnboundName(GenfixError):
    pass


class OrbitLeftDomain(GenfixError):
    pass


class DegenerateOrbit(GenfixError):
    """``g(x0) == x0`` exactly on the tail; ``fixed_point`` holds ``x0``."""


class ContractionNotCertified(GenfixError):
    pass


class NoSharpConvergence(GenfixError):
    pass


class DifferentialNotInvertible(GenfixError):
    pass


class SamplingDegenerate(GenfixError):
    pass


class NotInvertibleInBall(GenfixError):
    pass


class InsufficientData(GenfixError):
    pass


class NoFixedPointFound(GenfixError):
    pass


class ConfigParseError(GenfixError):
    pass


class ValidationError(GenfixError):
    pass
