"""Deterministic discrete-event engine: virtual clock, event queue, seeded RNG."""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass

from .errors import ConfigError, ModelFault, SimulationError

MAX_HORIZON_NS = 2**63 - 1


class Rng:
    """Seeded pseudo-random stream with label-derived sub-streams.

    ``fork("workload")`` always yields the same stream for the same root seed,
    no matter how many draws other consumers have made.
    """

    def __init__(self, seed: int, label: str = ""):
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
        self.seed = seed
        self.label = label
        digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
        self._random = random.Random(int.from_bytes(digest[:8], "little"))
        self.randrange = self._random.randrange
        self.random = self._random.random

    def fork(self, label: str) -> "Rng":
        child = f"{self.label}/{label}" if self.label else label
        return Rng(self.seed, child)

    def bernoulli(self, p: float) -> bool:
        if p >= 1.0:
            return True
        if p <= 0.0:
            return False
        return self._random.random() < p


@dataclass(frozen=True)
class EventHandle:
    fire_at: int
    seq: int


@dataclass(frozen=True)
class SimStats:
    events_dispatched: int
    final_time: int


class Simulator:
    """Single-threaded event loop over integer-nanosecond time.

    Events at equal times dispatch in scheduling order. Actions are plain
    callables invoked with the positional args given to :meth:`schedule`.
    """

    def __init__(self, seed: int = 0, horizon: int = MAX_HORIZON_NS, trace: bool = False):
        if not 0 < horizon <= MAX_HORIZON_NS:
            raise ConfigError(f"horizon must be in (0, 2^63-1], got {horizon}", key="horizon")
        self.horizon = horizon
        self.rng = Rng(seed)
        self._now = 0
        self._seq = 0
        self._heap: list = []
        self._cancelled: set[int] = set()
        self.events_dispatched = 0
        self.trace: list[tuple[int, int, str]] | None = [] if trace else None

    @property
    def now(self) -> int:
        return self._now

    def __len__(self):
        return len(self._heap) - len(self._cancelled)

    def schedule(self, delay: int, action, *args) -> EventHandle:
        if delay < 0:
            raise ConfigError(f"negative delay {delay}", key="delay")
        fire_at = self._now + delay
        if fire_at > self.horizon:
            raise ConfigError(
                f"event at {fire_at}ns exceeds the simulation horizon {self.horizon}ns",
                key="horizon",
            )
        seq = self._seq
        self._seq = seq + 1
        heapq.heappush(self._heap, (fire_at, seq, action, args))
        return EventHandle(fire_at, seq)

    def cancel(self, handle: EventHandle) -> None:
        if handle.seq >= self._seq:
            raise ValueError(f"unknown event {handle}")
        self._cancelled.add(handle.seq)

    def run_to_completion(self) -> SimStats:
        heap = self._heap
        pop = heapq.heappop
        cancelled = self._cancelled
        trace = self.trace
        dispatched = self.events_dispatched
        try:
            while heap:
                fire_at, seq, action, args = pop(heap)
                if cancelled and seq in cancelled:
                    cancelled.discard(seq)
                    continue
                self._now = fire_at
                dispatched += 1
                if trace is not None:
                    trace.append((fire_at, seq, _kind(action)))
                action(*args)
        except (SimulationError, ModelFault):
            raise
        except Exception as exc:
            raise SimulationError(
                f"{type(exc).__name__}: {exc}", time_ns=self._now, kind=_kind(action)
            ) from exc
        finally:
            self.events_dispatched = dispatched
        return SimStats(events_dispatched=dispatched, final_time=self._now)


def _kind(action) -> str:
    return getattr(action, "__qualname__", None) or type(action).__name__
