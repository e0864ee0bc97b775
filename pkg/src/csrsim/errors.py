"""Exception and warning types shared across the package."""

from __future__ import annotations


class IntegrationError(RuntimeError):
    """The adaptive stepper failed or a state invariant broke mid-run.

    Carries ``last_good_time``, the latest time at which the state still
    satisfied every invariant.
    """

    def __init__(self, message: str, last_good_time: float) -> None:
        super().__init__(f"{message} (last good time t={last_good_time:.6g})")
        self.last_good_time = last_good_time


class HorizonError(RuntimeError):
    """A feature sits at (or beyond) the end of the computed trajectory.

    Raised when a peak lands on the grid boundary or a probe time is not
    covered; the fix is a longer t_cap.
    """


class QuadratureError(RuntimeError):
    """Quadrature self-check failed (grid too coarse or variance went negative)."""


class TruncationWarning(UserWarning):
    """A time integral still had visible mass at the trajectory end."""
