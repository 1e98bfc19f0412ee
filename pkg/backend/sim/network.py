"""Event queue, delay models and partitions for the simulated network."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np

from backend.consensus.messages import ProtocolMessage
from backend.sim.scenario import DelayModel, Partition

# Exponential draws are rounded to this grid so the clock stays rational.
_EXPONENTIAL_GRID = 1024


@dataclass(frozen=True)
class Delivery:
    recipient: Hashable
    message: ProtocolMessage


@dataclass(frozen=True)
class TimerFire:
    recipient: Hashable
    tag: str
    round: int


@dataclass(frozen=True)
class Heal:
    partition: int


Event = Union[Delivery, TimerFire, Heal]


class EventQueue:
    """Time-ordered events; equal times pop in insertion order."""

    def __init__(self) -> None:
        self._heap: List[Tuple[Fraction, int, Event]] = []
        self._seq = itertools.count()
        self.now = Fraction(0)

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, at: Fraction, event: Event) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule an event at {at} before the clock ({self.now})")
        heapq.heappush(self._heap, (at, next(self._seq), event))

    def pop(self) -> Tuple[Fraction, Event]:
        at, _, event = heapq.heappop(self._heap)
        self.now = at
        return at, event

    def peek_time(self) -> Optional[Fraction]:
        return self._heap[0][0] if self._heap else None


class Network:
    """
    Full mesh with per-edge delays. A message is dropped when a partition
    separating sender and recipient is active at any point of its flight.
    Recipients that already hold an artifact, or will receive it earlier,
    are not sent it again.
    """

    def __init__(
        self,
        delta: Fraction,
        model: DelayModel,
        partitions: Sequence[Partition],
        seed: int,
    ):
        self.delta = Fraction(delta)
        self.model = model
        self.partitions = tuple(partitions)
        self.rng = np.random.default_rng(seed)
        self._has: Dict[Tuple[Hashable, Any], Fraction] = {}
        self.sent = 0
        self.dropped = 0
        self.suppressed = 0

    # -----------------------------
    # Delays
    # -----------------------------
    def draw_delays(self, count: int) -> List[Fraction]:
        model = self.model
        if model.kind == "fixed":
            return [model.value] * count
        if model.kind == "uniform":
            ticks = self.rng.integers(0, model.grid, size=count)
            return [Fraction(int(k), model.grid) * self.delta for k in ticks]
        draws = self.rng.exponential(float(model.mean), size=count)
        return [Fraction(int(x * _EXPONENTIAL_GRID), _EXPONENTIAL_GRID) for x in draws]

    # -----------------------------
    # Partitions
    # -----------------------------
    def partitioned(self, a: Hashable, b: Hashable, send: Fraction, arrive: Fraction) -> bool:
        return any(p.start <= arrive and send < p.end and p.separates(a, b) for p in self.partitions)

    def active_partitions(self, at: Fraction) -> List[int]:
        return [i for i, p in enumerate(self.partitions) if p.start <= at < p.end]

    # -----------------------------
    # Delivery
    # -----------------------------
    def note_holder(self, holder: Hashable, message: ProtocolMessage, at: Fraction) -> None:
        aid = message.artifact_id
        if aid is not None:
            key = (holder, aid)
            if key not in self._has or at < self._has[key]:
                self._has[key] = at

    def deliver(
        self,
        message: ProtocolMessage,
        sender: Hashable,
        send_time: Fraction,
        recipients: Sequence[Hashable],
    ) -> List[Tuple[Hashable, Fraction]]:
        """Per-recipient delivery times; dropped and redundant copies are omitted."""
        self.note_holder(sender, message, send_time)
        targets = [r for r in recipients if r != sender]
        out = []
        aid = message.artifact_id
        for recipient, delay in zip(targets, self.draw_delays(len(targets))):
            arrive = send_time + delay
            if self.partitioned(sender, recipient, send_time, arrive):
                self.dropped += 1
                continue
            if aid is not None:
                held = self._has.get((recipient, aid))
                if held is not None and held <= arrive:
                    self.suppressed += 1
                    continue
                self._has[(recipient, aid)] = arrive
            self.sent += 1
            out.append((recipient, arrive))
        return out
