"""LMB kernel module: alloc/free/share for PCIe and CXL devices with dual access control.

PCIe devices reach expander memory through host IOMMU mappings (bus address ->
HPA) and their requests arrive at the expander tagged with the host identity.
CXL devices address GFAM HPAs directly and are policed by the expander's SAT.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import (
    ConfigError,
    IommuFault,
    LmbArgumentError,
    LmbPermissionError,
    LmbStateError,
    MmidLookupError,
    ModelFault,
)
from .expander import PAGE, MemAccessRequest, MemOp, MemoryExpander
from .fabric import Fabric, LatencyModel, RouteClass, access_latency
from .fabric_manager import FabricManager, MemoryBlock
from .intervals import IntervalSet

IOVA_BASE = 0x1_0000_0000
IOVA_LIMIT = 1 << 48


def _round_up(n, quantum=PAGE):
    return -(-n // quantum) * quantum


@dataclass(frozen=True)
class IommuMapping:
    device: tuple
    bus_base: int
    hpa_base: int
    size_bytes: int


class PcieAlloc(NamedTuple):
    bus_addr: int
    mmid: int


class CxlAlloc(NamedTuple):
    hpa: int
    dpid: int
    mmid: int


class CxlShare(NamedTuple):
    hpa: int
    dpid: int


class AccessResult(NamedTuple):
    data: bytes | None
    latency_ns: int


@dataclass
class _Extent:
    """One FM block, or a fused run of blocks backing a single large region."""

    blocks: list[MemoryBlock]
    free: IntervalSet
    fused: bool = False
    live: int = 0

    @property
    def hpa_base(self):
        return self.blocks[0].hpa_base

    @property
    def size(self):
        return sum(b.size_bytes for b in self.blocks)


@dataclass
class MemRegion:
    mmid: int
    owner: object
    hpa_base: int
    size_bytes: int
    extent: _Extent = field(repr=False)
    sharers: set = field(default_factory=set)
    bus_mappings: dict = field(default_factory=dict)

    @property
    def accessors(self):
        return {self.owner} | self.sharers

    @property
    def block_ids(self):
        return [b.block_id for b in self.extent.blocks]


class Iommu:
    """Per-device IOVA allocation and bus->HPA translation on one host."""

    def __init__(self):
        self._free: dict[object, IntervalSet] = {}
        self._maps: dict[object, dict[int, IommuMapping]] = {}

    def map(self, device, hpa_base, size) -> IommuMapping:
        free = self._free.setdefault(device, IntervalSet([(IOVA_BASE, IOVA_LIMIT)]))
        bus = free.first_fit(size, align=PAGE)
        if bus is None:
            raise LmbArgumentError(f"IOVA space exhausted for {device}")
        free.remove(bus, bus + size)
        mapping = IommuMapping(device, bus, hpa_base, size)
        self._maps.setdefault(device, {})[bus] = mapping
        return mapping

    def unmap(self, device, bus_base) -> None:
        mapping = self._maps[device].pop(bus_base)
        self._free[device].add(bus_base, bus_base + mapping.size_bytes)

    def translate(self, device, bus, length) -> int:
        for m in self._maps.get(device, {}).values():
            if m.bus_base <= bus and bus + length <= m.bus_base + m.size_bytes:
                return m.hpa_base + (bus - m.bus_base)
        raise IommuFault(f"{device} has no IOMMU mapping for bus address {bus:#x}")

    def mappings(self, device=None) -> list[IommuMapping]:
        devices = [device] if device is not None else list(self._maps)
        return [m for d in devices for _, m in sorted(self._maps.get(d, {}).items())]


class LmbModule:
    """The LMB kernel module of one host.

    ``sim`` (optional) only supplies timestamps for the API trace.
    """

    def __init__(
        self,
        host: int,
        fabric: Fabric,
        fm: FabricManager,
        expander: MemoryExpander,
        latency: LatencyModel | None = None,
        sim=None,
        trace: bool = False,
    ):
        self.host = host
        self.fabric = fabric
        self.fm = fm
        self.expander = expander
        self.latency = latency or LatencyModel()
        self.sim = sim
        self.iommu = Iommu()
        self.initialized = False
        self.regions: dict[int, MemRegion] = {}
        self.extents: list[_Extent] = []
        self._next_mmid = 1
        self.iommu_faults: dict = {}
        self.trace: list[str] | None = [] if trace else None

    def init(self) -> None:
        """Load the module; device drivers may allocate only afterwards."""
        self.initialized = True

    # -- bookkeeping --------------------------------------------------------

    def _log(self, api, device, size, mmid, result):
        if self.trace is not None:
            now = self.sim.now if self.sim is not None else 0
            dev = list(device) if isinstance(device, tuple) else device
            self.trace.append(json.dumps(
                {"time_ns": now, "api": api, "device": dev, "size": size, "mmid": mmid, "result": result}
            ))

    def _require_init(self):
        if not self.initialized:
            raise LmbStateError("LMB module not initialized; it must load before device drivers")

    def _require_pcie(self, dev):
        if not self.fabric.is_pcie(dev) or dev[0] != self.host:
            raise LmbArgumentError(f"{dev!r} is not a PCIe device behind host {self.host}")

    def _require_cxl(self, cxld):
        if not self.fabric.is_cxl_device(cxld):
            raise LmbArgumentError(f"{cxld!r} is not an attached CXL device")

    def _region(self, mmid) -> MemRegion:
        try:
            return self.regions[mmid]
        except KeyError:
            raise MmidLookupError(f"unknown mmid {mmid}") from None

    def dpa_ranges(self, hpa_base, size) -> list[tuple[int, int]]:
        """DPA pieces backing ``[hpa_base, hpa_base + size)``, one per block."""
        out = []
        end = hpa_base + size
        for ext in self.extents:
            for b in ext.blocks:
                lo = max(hpa_base, b.hpa_base)
                hi = min(end, b.hpa_base + b.size_bytes)
                if lo < hi:
                    out.append((b.dpa_base + lo - b.hpa_base, hi - lo))
        return out

    # -- allocation ---------------------------------------------------------

    def _carve(self, size) -> tuple[int, _Extent]:
        block = self.fm.block_size
        if size <= block:
            for ext in self.extents:
                if ext.fused:
                    continue
                hpa = ext.free.first_fit(size)
                if hpa is not None:
                    break
            else:
                (b,) = self.fm.grant_blocks(self.host, 1)
                ext = _Extent([b], IntervalSet([(b.hpa_base, b.hpa_base + b.size_bytes)]))
                self.extents.append(ext)
                hpa = b.hpa_base
        else:
            blocks = self.fm.grant_blocks(self.host, -(-size // block))
            start = blocks[0].hpa_base
            ext = _Extent(blocks, IntervalSet([(start, start + len(blocks) * block)]), fused=True)
            self.extents.append(ext)
            hpa = start
        ext.free.remove(hpa, hpa + size)
        ext.live += 1
        return hpa, ext

    def _new_region(self, owner, size) -> MemRegion:
        self._require_init()
        if not isinstance(size, int) or size <= 0:
            raise LmbArgumentError(f"allocation size must be a positive integer, got {size!r}")
        size = _round_up(size)
        hpa, ext = self._carve(size)
        mmid = self._next_mmid
        self._next_mmid += 1
        region = MemRegion(mmid, owner, hpa, size, ext)
        self.regions[mmid] = region
        return region

    def _grant(self, region, device):
        """Install the access path for ``device`` and return its address."""
        if self.fabric.is_pcie(device):
            mapping = self.iommu.map(device, region.hpa_base, region.size_bytes)
            region.bus_mappings[device] = mapping.bus_base
            return mapping.bus_base
        for dpa, size in self.dpa_ranges(region.hpa_base, region.size_bytes):
            self.expander.sat_add(device, dpa, size)
        return region.hpa_base

    def _revoke(self, region, device):
        if self.fabric.is_pcie(device):
            self.iommu.unmap(device, region.bus_mappings.pop(device))
        else:
            for dpa, size in self.dpa_ranges(region.hpa_base, region.size_bytes):
                self.expander.sat_remove(device, dpa, size)

    def lmb_pcie_alloc(self, dev, size: int) -> PcieAlloc:
        self._require_pcie(dev)
        try:
            region = self._new_region(dev, size)
            bus = self._grant(region, dev)
        except Exception as exc:
            self._log("lmb_PCIe_alloc", dev, size, None, type(exc).__name__)
            raise
        self._log("lmb_PCIe_alloc", dev, region.size_bytes, region.mmid, "ok")
        return PcieAlloc(bus, region.mmid)

    def lmb_cxl_alloc(self, cxld, size: int) -> CxlAlloc:
        self._require_cxl(cxld)
        try:
            region = self._new_region(cxld, size)
            hpa = self._grant(region, cxld)
        except Exception as exc:
            self._log("lmb_CXL_alloc", cxld, size, None, type(exc).__name__)
            raise
        self._log("lmb_CXL_alloc", cxld, region.size_bytes, region.mmid, "ok")
        return CxlAlloc(hpa, self.fabric.expander_id, region.mmid)

    # -- free -----------------------------------------------------------------

    def _free(self, api, device, mmid):
        self._require_init()
        try:
            region = self._region(mmid)
            if region.owner != device:
                raise LmbPermissionError(f"{device!r} does not own mmid {mmid}")
        except Exception as exc:
            self._log(api, device, None, mmid, type(exc).__name__)
            raise
        for accessor in sorted(region.accessors, key=repr):
            self._revoke(region, accessor)
        ext = region.extent
        ext.free.add(region.hpa_base, region.hpa_base + region.size_bytes)
        ext.live -= 1
        del self.regions[mmid]
        self.sweep()
        self._log(api, device, region.size_bytes, mmid, "ok")

    def sweep(self) -> None:
        """Return extents with no live regions to the FM."""
        keep = []
        for ext in self.extents:
            if ext.live == 0:
                for b in ext.blocks:
                    self.fm.release_block(self.host, b.block_id)
            else:
                keep.append(ext)
        self.extents = keep

    def lmb_pcie_free(self, dev, mmid: int) -> None:
        self._require_pcie(dev)
        self._free("lmb_PCIe_free", dev, mmid)

    def lmb_cxl_free(self, cxld, mmid: int) -> None:
        self._require_cxl(cxld)
        self._free("lmb_CXL_free", cxld, mmid)

    # -- share ----------------------------------------------------------------

    def _share(self, api, device, mmid):
        self._require_init()
        try:
            region = self._region(mmid)
        except MmidLookupError:
            self._log(api, device, None, mmid, "MmidLookupError")
            raise
        if device in region.accessors:
            addr = region.bus_mappings.get(device, region.hpa_base)
        else:
            addr = self._grant(region, device)
            region.sharers.add(device)
        self._log(api, device, region.size_bytes, mmid, "ok")
        return addr

    def lmb_pcie_share(self, dev2, mmid: int) -> int:
        self._require_pcie(dev2)
        return self._share("lmb_PCIe_share", dev2, mmid)

    def lmb_cxl_share(self, cxld2, mmid: int) -> CxlShare:
        self._require_cxl(cxld2)
        return CxlShare(self._share("lmb_CXL_share", cxld2, mmid), self.fabric.expander_id)

    # -- data path ------------------------------------------------------------

    def device_mem_access(self, dev, op: MemOp, addr: int, length: int, data: bytes | None = None) -> AccessResult:
        """Issue one MemRd/MemWr on behalf of ``dev``.

        Faults are counted per device and re-raised.
        """
        op = MemOp(op)
        payload = bytes(data) if op is MemOp.WR else b""
        route = self.fabric.route(dev)
        if route is RouteClass.PCIE_VIA_HOST:
            if dev[0] != self.host:
                raise ConfigError(f"{dev!r} is not behind host {self.host}", key="device")
            try:
                hpa = self.iommu.translate(dev, addr, length)
            except IommuFault:
                self.iommu_faults[dev] = self.iommu_faults.get(dev, 0) + 1
                raise
            req = MemAccessRequest(op, hpa, length, host=self.host, data=payload)
        elif route is RouteClass.CXL_P2P:
            hpa = addr
            req = MemAccessRequest(op, hpa, length, spid=dev, data=payload)
        else:
            hpa = addr
            req = MemAccessRequest(op, hpa, length, host=dev, data=payload)
        now = self.sim.now if self.sim is not None else 0
        result = self.expander.handle(req, at=now)
        latency = access_latency(route, self.fabric.pcie_gen(dev), self.latency)
        return AccessResult(result, latency + self.expander.media_extra_ns(hpa))

    def can_access(self, dev, addr: int, length: int = 1) -> bool:
        """Probe whether ``dev`` may read ``[addr, addr+length)``; counts faults like a real read."""
        try:
            self.device_mem_access(dev, MemOp.RD, addr, length)
        except ModelFault:
            return False
        return True

    def fault_counters(self) -> dict:
        return {"iommu": {str(k): v for k, v in sorted(self.iommu_faults.items(), key=repr)}}
