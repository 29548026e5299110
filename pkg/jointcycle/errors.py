from __future__ import annotations


class JointCycleError(RuntimeError):
    """Base class for errors raised by jointcycle."""


class ShapeError(JointCycleError, ValueError):
    pass


class NonFiniteError(JointCycleError, FloatingPointError):
    pass


class TapeError(JointCycleError):
    pass


class CheckpointError(JointCycleError):
    pass


class ManifestError(JointCycleError):
    pass


class TraceError(JointCycleError):
    pass


class TrainingDiverged(JointCycleError):
    """A training step produced a non-finite loss.

    `last_report` holds the most recent finite loss report (or None if the first step failed).
    """

    def __init__(self, message: str, last_report: dict | None = None):
        super().__init__(message)
        self.last_report = last_report
