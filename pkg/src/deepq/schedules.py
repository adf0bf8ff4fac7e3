"""Linear annealing schedules (epsilon-greedy and importance-sampling beta)."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LinearSchedule:
    """Linear interpolation from ``start`` at step 0 to ``end`` at ``end_step``,
    clamped to ``end`` afterwards."""

    start: float
    end: float
    end_step: int

    def value(self, step: int) -> float:
        if step < 0:
            raise ValueError(f"step must be >= 0, got {step}")
        if self.end_step <= 0 or step >= self.end_step:
            return self.end
        frac = step / self.end_step
        return self.start + (self.end - self.start) * frac
