"""Fabric manager: grants fixed-size expander blocks to hosts and installs decoders."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, OutOfCapacity, ProtocolError
from .expander import MemoryExpander
from .intervals import IntervalSet

MiB = 1 << 20
DEFAULT_BLOCK_SIZE = 256 * MiB
DEFAULT_HPA_BASE = 0x1000_0000_0000
DEFAULT_HPA_STRIDE = 1 << 40


@dataclass(frozen=True)
class MemoryBlock:
    block_id: int
    host: int
    hpa_base: int
    dpa_base: int
    size_bytes: int


@dataclass(frozen=True)
class CapacityLedger:
    total_bytes: int
    granted_bytes: int
    per_host: dict = field(default_factory=dict)


class FabricManager:
    """Switch-resident FM with zero control-path latency.

    Blocks come from the lowest free DPA inside one DMP. Each host owns an HPA
    window ``hpa_base + ordinal * hpa_stride``; blocks take its lowest free slot.
    """

    def __init__(
        self,
        expander: MemoryExpander,
        hosts,
        block_size: int = DEFAULT_BLOCK_SIZE,
        hpa_base: int = DEFAULT_HPA_BASE,
        hpa_stride: int = DEFAULT_HPA_STRIDE,
    ):
        if block_size <= 0 or block_size % 4096:
            raise ConfigError("block size must be a positive multiple of 4096", key="fm.block_size_mb")
        if hpa_stride < block_size:
            raise ConfigError("HPA stride smaller than one block", key="fm.hpa_stride")
        self.expander = expander
        self.block_size = block_size
        self.hpa_stride = hpa_stride
        self._windows = {h: hpa_base + i * hpa_stride for i, h in enumerate(hosts)}
        self._hpa_free = {h: IntervalSet([(b, b + hpa_stride)]) for h, b in self._windows.items()}
        usable = []
        barriers = set()
        for dmp in expander.dmps:
            span = dmp.size_bytes // block_size * block_size
            if span:
                usable.append((dmp.dpa_base, dmp.dpa_base + span))
                barriers.update((dmp.dpa_base, dmp.dpa_base + span))
        self._dpa_free = IntervalSet(usable, barriers=barriers)
        self.total_bytes = self._dpa_free.total()
        self.granted_bytes = 0
        self.per_host: dict[int, int] = {}
        self.blocks: dict[int, MemoryBlock] = {}
        self._next_id = 1

    def _check_host(self, host):
        if host not in self._windows:
            raise ProtocolError(f"host {host!r} is not attached to the FM")

    def grant_block(self, host: int) -> MemoryBlock:
        return self.grant_blocks(host, 1)[0]

    def grant_blocks(self, host: int, count: int) -> list[MemoryBlock]:
        """Grant ``count`` blocks whose HPA windows are contiguous (a fused extent)."""
        self._check_host(host)
        if count < 1:
            raise ValueError("count must be >= 1")
        need = count * self.block_size
        if self.total_bytes - self.granted_bytes < need:
            raise OutOfCapacity(
                f"host {host} asked for {need} bytes, {self.total_bytes - self.granted_bytes} free"
            )
        hpa = self._hpa_free[host].first_fit(need)
        if hpa is None:
            raise OutOfCapacity(f"host {host} HPA window exhausted")
        granted = []
        for i in range(count):
            dpa = self._dpa_free.first_fit(self.block_size)
            if dpa is None:  # pragma: no cover - guarded by the byte count above
                raise OutOfCapacity("no free DPA block")
            self._dpa_free.remove(dpa, dpa + self.block_size)
            block = MemoryBlock(self._next_id, host, hpa + i * self.block_size, dpa, self.block_size)
            self._next_id += 1
            self.expander.map_window(block.hpa_base, block.dpa_base, block.size_bytes, host)
            self.blocks[block.block_id] = block
            granted.append(block)
        self._hpa_free[host].remove(hpa, hpa + need)
        self.granted_bytes += need
        self.per_host[host] = self.per_host.get(host, 0) + need
        return granted

    def release_block(self, host: int, block_id: int) -> None:
        self._check_host(host)
        block = self.blocks.get(block_id)
        if block is None:
            raise ProtocolError(f"block {block_id} is not granted (double release?)")
        if block.host != host:
            raise ProtocolError(f"block {block_id} belongs to host {block.host}, not {host}")
        self.expander.unmap_window(block.hpa_base)
        del self.blocks[block_id]
        self._dpa_free.add(block.dpa_base, block.dpa_base + block.size_bytes)
        self._hpa_free[host].add(block.hpa_base, block.hpa_base + block.size_bytes)
        self.granted_bytes -= block.size_bytes
        self.per_host[host] -= block.size_bytes
        if not self.per_host[host]:
            del self.per_host[host]

    def query_capacity(self) -> CapacityLedger:
        return CapacityLedger(self.total_bytes, self.granted_bytes, dict(self.per_host))

    def free_dpa_intervals(self) -> list[tuple[int, int]]:
        return list(self._dpa_free)

    def dump(self) -> dict:
        return {
            "block_size": self.block_size,
            "total_bytes": self.total_bytes,
            "granted_bytes": self.granted_bytes,
            "per_host": {str(h): n for h, n in sorted(self.per_host.items())},
            "blocks": [
                {"block_id": b.block_id, "host": b.host, "hpa_base": hex(b.hpa_base), "dpa_base": hex(b.dpa_base)}
                for b in sorted(self.blocks.values(), key=lambda b: b.block_id)
            ],
        }
