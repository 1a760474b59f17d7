"""FIO-like closed-loop workload generation."""

from __future__ import annotations

from array import array
from dataclasses import dataclass

from ..errors import ConfigError
from ..ssd.device import IoRequest
from ..ssd.spec import PAGE

PATTERNS = ("seqread", "randread", "seqwrite", "randwrite")


@dataclass(frozen=True)
class WorkloadSpec:
    pattern: str = "randread"
    qd: int = 64
    io_size: int = PAGE
    total_ios: int = 2_000_000
    addr_space: int | None = None  # bytes; None means the whole device
    seed: int = 1

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern {self.pattern!r}", key="workload.pattern")
        if self.qd < 1:
            raise ConfigError("qd must be >= 1", key="workload.qd")
        if self.io_size <= 0 or self.io_size % 512:
            raise ConfigError("io_size must be a positive multiple of 512", key="workload.io_size")
        if self.total_ios < self.qd:
            raise ConfigError("total_ios must be >= qd", key="workload.total_ios")
        if self.addr_space is not None and self.addr_space < self.io_size:
            raise ConfigError("addr_space smaller than one IO", key="workload.addr_space")

    @property
    def is_write(self):
        return self.pattern.endswith("write")

    @property
    def sequential(self):
        return self.pattern.startswith("seq")


def generate(w: WorkloadSpec, rng, device_bytes: int):
    """Lazy stream of :class:`IoRequest` in submission order."""
    space = w.addr_space or device_bytes
    slots = space // w.io_size
    is_write = w.is_write
    seq = w.sequential
    size = w.io_size
    randrange = rng.randrange
    for i in range(w.total_ios):
        slot = i % slots if seq else randrange(slots)
        yield IoRequest(is_write, slot * size // PAGE, seq, size, i)


class ClosedLoop:
    """Keeps ``qd`` IOs outstanding; a new IO submits the instant one completes."""

    def __init__(self, sim, device, workload: WorkloadSpec, rng):
        self.sim = sim
        self.device = device
        self.workload = workload
        self._stream = generate(workload, rng, device.spec.capacity_bytes)
        self.issued = 0
        self.latencies = array("q")
        self.first_completion = None
        self.last_completion = 0
        device.on_complete = self._on_complete

    def start(self):
        for _ in range(self.workload.qd):
            self._issue()

    def _issue(self):
        io = next(self._stream, None)
        if io is not None:
            self.issued += 1
            self.device.submit(io)

    def _on_complete(self, io):
        now = io.complete_time
        if self.first_completion is None:
            self.first_completion = now
        self.last_completion = now
        self.latencies.append(now - io.submit_time)
        self._issue()

    @property
    def outstanding(self):
        return self.device.submitted - self.device.completed
