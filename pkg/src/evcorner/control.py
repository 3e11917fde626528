"""Throughput monitoring for the feedback loop in the timestamp filter.

The monitor sees the stream in messages (default 10,000 events), keeps an
exponential moving average of per-message throughput, and classifies the
application as under-, at-, or over-performing against an expected rate with
a symmetric hysteresis band. Reads and writes of the estimate are single
attribute operations, so a timing thread can feed the monitor while the
filter thread polls the state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

MESSAGE_SIZE_DEFAULT = 10_000
ESTIMATE_ALPHA = 0.5
HYSTERESIS_DEFAULT = 0.05


class PerformanceState(str, Enum):
    UNDER = "under"
    AT = "at"
    OVER = "over"


def classify_throughput(
    estimate: float | None, expected: float, hysteresis: float = HYSTERESIS_DEFAULT
) -> PerformanceState:
    """Classify an estimate against the expected rate with a hysteresis band.

    Inside [expected*(1-h), expected*(1+h)] the state is AT, which makes no
    threshold adjustment; before any measurement the state is also AT.
    """
    if expected <= 0:
        raise ValueError("expected throughput must be positive")
    if estimate is None:
        return PerformanceState.AT
    if estimate < expected * (1.0 - hysteresis):
        return PerformanceState.UNDER
    if estimate > expected * (1.0 + hysteresis):
        return PerformanceState.OVER
    return PerformanceState.AT


@dataclass
class ThroughputMonitor:
    """EMA throughput estimator over fixed-size messages."""

    expected: float
    message_size: int = MESSAGE_SIZE_DEFAULT
    alpha: float = ESTIMATE_ALPHA
    hysteresis: float = HYSTERESIS_DEFAULT
    estimate: float | None = field(init=False, default=None)
    messages_seen: int = field(init=False, default=0)
    history: list = field(init=False, default_factory=list)

    def __post_init__(self) -> None:
        if self.expected <= 0:
            raise ValueError("expected throughput must be positive")
        if self.message_size <= 0:
            raise ValueError("message size must be positive")

    def record_message(self, events_processed: int, wall_time: float) -> float:
        """Fold one message's measured rate into the estimate (events/second)."""
        if wall_time <= 0:
            raise ValueError(f"wall_time must be positive, got {wall_time}")
        if events_processed < 0:
            raise ValueError("events_processed must be non-negative")
        rate = events_processed / wall_time
        if self.estimate is None:
            self.estimate = rate
        else:
            self.estimate = self.alpha * rate + (1.0 - self.alpha) * self.estimate
        self.messages_seen += 1
        self.history.append(self.estimate)
        return self.estimate

    def performance_state(self) -> PerformanceState:
        return classify_throughput(self.estimate, self.expected, self.hysteresis)
