"""SSD as an index stage (E engines) feeding a media stage (C units), FCFS at both."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..errors import ConfigError
from ..expander import MemOp
from ..fabric import LatencyModel, access_latency
from .calibration import FtlCalibration
from .ftl import CachedMappingTable, Dftl, FixedRatio, Ideal, Lmb
from .spec import PAGE, IoClass, SsdSpec, L2P_ENTRY_BYTES


class IoRequest:
    __slots__ = ("is_write", "lpn", "sequential", "io_size", "index", "submit_time", "complete_time", "media_ns")

    def __init__(self, is_write, lpn, sequential=False, io_size=PAGE, index=0):
        self.is_write = is_write
        self.lpn = lpn
        self.sequential = sequential
        self.io_size = io_size
        self.index = index
        self.submit_time = -1
        self.complete_time = -1
        self.media_ns = 0

    @property
    def op(self):
        return "write" if self.is_write else "read"

    @property
    def io_class(self):
        return IoClass.of(self.is_write, self.sequential)

    def __repr__(self):
        return f"IoRequest({self.op}, lpn={self.lpn}, t={self.submit_time}->{self.complete_time})"


@dataclass
class L2pBinding:
    """Where an LMB-scheme SSD keeps its mapping table.

    ``addr`` is the bus address (PCIe) or GFAM HPA (CXL) returned by the LMB
    allocation. With ``functional=True`` every remote index access is issued
    as a real MemRd/MemWr of the 4-byte entry through the LMB data path.
    """

    lmb: object
    device: object
    addr: int
    size: int
    mmid: int
    functional: bool = False


class SsdDevice:
    def __init__(
        self,
        sim,
        spec: SsdSpec,
        calib: FtlCalibration,
        scheme=Ideal(),
        latency: LatencyModel | None = None,
        rng=None,
    ):
        self.sim = sim
        self.spec = spec
        self.calib = calib
        self.scheme = scheme
        self.latency = latency or LatencyModel()
        rng = rng or sim.rng.fork("ssd")
        self._hit_rng = rng.fork("index")
        self.binding: L2pBinding | None = None
        self.cmt = CachedMappingTable(scheme, rng.fork("cmt")) if isinstance(scheme, Dftl) else None
        self.on_complete = None

        self._idle_engines = calib.index_engines
        self._idle_units = calib.media_units
        self._index_q: deque = deque()
        self._media_q: deque = deque()
        self._last_group = {False: None, True: None}
        self.submitted = 0
        self.completed = 0
        self.index_busy_ns = 0
        self.media_busy_ns = 0
        self.index_accesses = 0
        self.coalesced_ios = 0
        self.l2p_faults = 0

        self._remote_ns = 0
        if isinstance(scheme, Lmb):
            self._remote_ns = access_latency(scheme.route, spec.pcie_gen, self.latency)
        self._fixed = self._fixed_costs()
        self._media_4k = {
            (w, q): calib.media_service_ns[IoClass.of(w, q).value] for w in (False, True) for q in (False, True)
        }

    def attach_l2p(self, binding: L2pBinding) -> None:
        if binding.size < self.spec.l2p_bytes and binding.functional:
            raise ConfigError(
                f"L2P region of {binding.size} bytes cannot hold {self.spec.l2p_bytes}", key="l2p"
            )
        self.binding = binding

    def _fixed_costs(self):
        """Per-direction index occupancy when it does not depend on draws or state."""
        s = self.calib.index_base_ns
        scheme = self.scheme
        if isinstance(scheme, Ideal):
            extra = 0
        elif isinstance(scheme, Lmb) and scheme.onboard_hit_ratio in (0.0, 1.0):
            extra = 0 if scheme.onboard_hit_ratio == 1.0 else self._remote_ns
        elif (
            isinstance(scheme, Dftl)
            and isinstance(scheme.hit_model, FixedRatio)
            and scheme.hit_model.p in (0.0, 1.0)
            and scheme.miss_stage == "index"
        ):
            extra = 0 if scheme.hit_model.p == 1.0 else self.latency.flash_read_ns
        else:
            return None
        return {False: self.calib.n_read * (s + extra), True: self.calib.n_write * (s + extra)}

    # -- index stage --------------------------------------------------------

    def index_service(self, io: IoRequest) -> tuple[int, int]:
        """Returns ``(index occupancy, extra media occupancy)`` in ns for ``io``."""
        calib = self.calib
        if io.sequential:
            k = calib.seq_write_coalesce if io.is_write else calib.seq_read_coalesce
            if k > 1:
                group = io.lpn // k
                if self._last_group[io.is_write] == group:
                    self.coalesced_ios += 1
                    return 0, 0
                self._last_group[io.is_write] = group
        n = calib.n_write if io.is_write else calib.n_read
        self.index_accesses += n
        if self._fixed is not None and (self.binding is None or not self.binding.functional):
            if self.cmt is not None:
                # fixed 0/1 hit ratio: keep the counters honest
                if self.scheme.hit_model.p == 1.0:
                    self.cmt.hits += n
                else:
                    self.cmt.misses += n
            return self._fixed[io.is_write], 0
        s = calib.index_base_ns
        occ = n * s
        media_extra = 0
        scheme = self.scheme
        if isinstance(scheme, Lmb):
            for j in range(n):
                if not self._hit_rng.bernoulli(scheme.onboard_hit_ratio):
                    occ += self._remote_access(io, j)
        elif isinstance(scheme, Dftl):
            flash = self.latency.flash_read_ns
            for j in range(n):
                hit, evicted_dirty = self.cmt.lookup(io.lpn, dirty=io.is_write, part=j)
                cost = (0 if hit else flash) + (scheme.writeback_ns if evicted_dirty else 0)
                if scheme.miss_stage == "index":
                    occ += cost
                else:
                    media_extra += cost
        return occ, media_extra

    def _remote_access(self, io, j):
        b = self.binding
        if not b.functional:
            return self._remote_ns
        addr = b.addr + (io.lpn * L2P_ENTRY_BYTES) % b.size
        if io.is_write and j == self.calib.n_write - 1:
            # last access of a write stores the new mapping
            entry = (io.index & 0xFFFFFFFF).to_bytes(4, "little")
            result = b.lmb.device_mem_access(b.device, MemOp.WR, addr, L2P_ENTRY_BYTES, entry)
        else:
            result = b.lmb.device_mem_access(b.device, MemOp.RD, addr, L2P_ENTRY_BYTES)
        return result.latency_ns

    # -- pipeline -------------------------------------------------------------

    def submit(self, io: IoRequest) -> None:
        if isinstance(self.scheme, Lmb) and self.binding is None:
            raise ConfigError(
                "LMB scheme needs its L2P region allocated through the LMB module before IO",
                key="scheme.kind",
            )
        io.submit_time = self.sim.now
        self.submitted += 1
        if self._idle_engines:
            self._idle_engines -= 1
            self._start_index(io)
        else:
            self._index_q.append(io)

    def _start_index(self, io):
        occ, media_extra = self.index_service(io)
        io.media_ns = self._media_4k[io.is_write, io.sequential] * io.io_size // PAGE + media_extra
        self.index_busy_ns += occ
        self.sim.schedule(occ, self._index_done, io)

    def _index_done(self, io):
        if self._index_q:
            self._start_index(self._index_q.popleft())
        else:
            self._idle_engines += 1
        if self._idle_units:
            self._idle_units -= 1
            self._start_media(io)
        else:
            self._media_q.append(io)

    def _start_media(self, io):
        self.media_busy_ns += io.media_ns
        self.sim.schedule(io.media_ns, self._media_done, io)

    def _media_done(self, io):
        if self._media_q:
            self._start_media(self._media_q.popleft())
        else:
            self._idle_units += 1
        io.complete_time = self.sim.now
        self.completed += 1
        if self.on_complete is not None:
            self.on_complete(io)

    def utilization(self, duration_ns: int) -> tuple[float, float]:
        if duration_ns <= 0:
            return 0.0, 0.0
        return (
            self.index_busy_ns / (self.calib.index_engines * duration_ns),
            self.media_busy_ns / (self.calib.media_units * duration_ns),
        )
