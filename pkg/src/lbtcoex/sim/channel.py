"""Shared channel: who is on air, and what a sensing node concludes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..detection import EnergyDetector


@dataclass
class Segment:
    """A contiguous part of a transmission with its own loss fate (one subframe)."""

    start: int
    end: int
    payload: list = field(default_factory=list)  # (FileRecord, nbytes) chunks
    kind: str = "data"
    harq: Optional[tuple] = None  # (ue, process id) for grant-less subframes
    collided: bool = False


@dataclass
class Transmission:
    node: object
    start: int
    end: int
    segments: list
    kind: str
    overlaps: list = field(default_factory=list)

    def overlaps_interval(self, a: int, b: int) -> bool:
        return self.start < b and a < self.end


@dataclass
class SensingModel:
    """IDEAL when ``detector`` is None, otherwise energy detection."""

    detector: Optional[EnergyDetector] = None
    false_alarm: bool = False

    @property
    def ideal(self) -> bool:
        return self.detector is None

    def busy_prob(self, n: int) -> float:
        if self.detector is None:
            return 1.0 if n > 0 else 0.0
        if n == 0:
            return self.detector.false_alarm() if self.false_alarm else 0.0
        return self.detector.detect_prob(n)


@dataclass
class ChannelState:
    """Transmissions currently on air, in start order."""

    active: list = field(default_factory=list)
    recent: list = field(default_factory=list)
    idle_since: int = 0
    memory_us: int = 1000

    def add(self, tx: Transmission) -> None:
        for other in self.active:
            other.overlaps.append(tx)
            tx.overlaps.append(other)
        self.active.append(tx)

    def remove(self, tx: Transmission, now: int) -> None:
        self.active.remove(tx)
        self.recent = [r for r in self.recent if r.end > now - self.memory_us]
        self.recent.append(tx)
        if not self.active:
            self.idle_since = now

    def count_during(self, a: int, b: int, exclude=None) -> int:
        """Transmitters other than ``exclude`` on air at any point of [a, b)."""
        return sum(1 for tx in self.active + self.recent
                   if tx.node is not exclude and tx.overlaps_interval(a, b))

    def transmitting(self, node) -> bool:
        return any(tx.node is node for tx in self.active)


def channel_verdict(ch: ChannelState, sensing_node, model: SensingModel, rng=None,
                    window: Optional[tuple] = None) -> bool:
    """Busy verdict of ``sensing_node`` over ``window`` (default: right now).

    IDEAL sensing is busy iff someone else is on air; energy detection draws
    the verdict from ``rng`` with the detection probability for the number
    of transmitters heard.
    """
    if ch.transmitting(sensing_node) and window is None:
        raise ValueError("a transmitting node cannot sense")
    if window is None:
        n = sum(1 for tx in ch.active if tx.node is not sensing_node)
    else:
        n = ch.count_during(*window, exclude=sensing_node)
    if model.ideal:
        return n > 0
    p = model.busy_prob(n)
    if p >= 1.0:
        return True
    if p <= 0.0:
        return False
    return rng.random() < p
