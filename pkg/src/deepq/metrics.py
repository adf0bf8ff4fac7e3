"""Metric records and the CSV sink.

One row per finished episode plus one per evaluation, sharing a single
header. Formatting goes through ``repr`` so identically-seeded runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

COLUMNS = ["step", "episode", "return", "epsilon", "beta",
           "mean_abs_td", "loss", "eval_mean"]


@dataclass
class MetricRecord:
    step: int
    episode: int | None = None
    episode_return: float | None = None
    epsilon: float | None = None
    beta: float | None = None
    mean_abs_td: float | None = None
    loss: float | None = None
    eval_mean: float | None = None

    def row(self) -> list[str]:
        def fmt(v) -> str:
            if v is None:
                return ""
            if isinstance(v, int):
                return str(v)
            return repr(float(v))

        return [fmt(self.step), fmt(self.episode), fmt(self.episode_return),
                fmt(self.epsilon), fmt(self.beta), fmt(self.mean_abs_td),
                fmt(self.loss), fmt(self.eval_mean)]


class MetricsWriter:
    """CSV sink; rows are flushed as they arrive so crashes keep history."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        new = not (append and self.path.exists())
        self._fh = open(self.path, "a" if append else "w", newline="")
        self._writer = csv.writer(self._fh)
        if new:
            self._writer.writerow(COLUMNS)
            self._fh.flush()

    def write(self, record: MetricRecord) -> None:
        self._writer.writerow(record.row())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class RecordCollector:
    """In-memory sink for tests."""

    def __init__(self):
        self.records: list[MetricRecord] = []

    def write(self, record: MetricRecord) -> None:
        self.records.append(record)

    def close(self) -> None:
        pass
