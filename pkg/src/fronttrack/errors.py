"""Exception hierarchy shared by every module.

Errors that can be raised mid-simulation carry an optional ``time`` so the
driver can report when an invariant broke.
"""

from __future__ import annotations


class FrontTrackError(Exception):
    """Base class; ``time`` is filled in by the run driver when known."""

    exit_code = 2

    def __init__(self, message: str = "", *, time: float | None = None, **info):
        super().__init__(message)
        self.time = time
        self.info = info

    def __str__(self) -> str:
        base = super().__str__()
        if self.time is not None:
            return f"{base} (t={self.time:.17g})"
        return base


class InvariantViolation(FrontTrackError):
    """A structural invariant of the problem was lost during a run."""

    exit_code = 3


class RegimeLoss(FrontTrackError):
    """The characteristic regime assumed by the closure changed."""

    exit_code = 4


# hyp-core
class NotStrictlyHyperbolic(InvariantViolation):
    pass


class NotAdmissible(InvariantViolation):
    pass


class LopatinskiFailure(InvariantViolation):
    pass


class DegenerateJacobian(InvariantViolation):
    pass


# grid-diffeo
class JacobianDegeneracy(InvariantViolation):
    pass


class FrontExcursionTooLarge(InvariantViolation):
    pass


# ibvp-solver
class CflViolation(InvariantViolation):
    pass


class PhaseBoxExit(InvariantViolation):
    pass


class ClosureFailure(InvariantViolation):
    pass


class WrongCharacteristicCount(RegimeLoss):
    pass


class NewtonDivergence(ClosureFailure):
    pass


# compat
class InsufficientStencil(FrontTrackError):
    pass


class DegenerateContact(InvariantViolation):
    pass


# free-boundary
class SubsonicityLoss(RegimeLoss):
    pass


class SingularA(InvariantViolation):
    pass


class Nu2LopatinskiLoss(InvariantViolation):
    pass


# transmission
class SingularLopatinski(InvariantViolation):
    pass


class RegimeChange(RegimeLoss):
    pass


class ZeroJump(FrontTrackError):
    pass


# wave-structure
class RotationOutOfRange(InvariantViolation):
    pass


class DryInterior(InvariantViolation):
    pass


class ContactCollision(InvariantViolation):
    pass


class LidOverrun(InvariantViolation):
    pass


# cli-io
class ParseError(FrontTrackError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(FrontTrackError):
    pass
