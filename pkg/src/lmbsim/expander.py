"""GFAM memory expander: DMPs, HPA->DPA decoders, SPID Access Table, backing store."""

from __future__ import annotations

import enum
from bisect import bisect_right, insort
from collections import Counter
from dataclasses import dataclass

from .errors import AccessFault, ConfigError, DecodeFault, ProvisioningError

PAGE = 4096
MAX_ACCESS_BYTES = 64


class Media(enum.Enum):
    DRAM = "dram"
    PM = "pm"


class MemOp(enum.Enum):
    RD = "MemRd"
    WR = "MemWr"


@dataclass(frozen=True)
class Dmp:
    dmp_id: int
    media: Media
    dpa_base: int
    size_bytes: int

    @property
    def dpa_end(self):
        return self.dpa_base + self.size_bytes


@dataclass(frozen=True)
class DecoderEntry:
    hpa_base: int
    dpa_base: int
    size_bytes: int
    owner_host: int

    def translate(self, hpa):
        return self.dpa_base + (hpa - self.hpa_base)


@dataclass(frozen=True)
class SatEntry:
    spid: int
    dpa_base: int
    size_bytes: int


@dataclass(frozen=True)
class MemAccessRequest:
    """A MemRd/MemWr. Exactly one of ``spid`` (CXL device) or ``host`` is set;
    ``host`` marks a request the host forwarded for one of its PCIe devices."""

    op: MemOp
    hpa: int
    length: int
    spid: int | None = None
    host: int | None = None
    data: bytes = b""

    def __post_init__(self):
        if (self.spid is None) == (self.host is None):
            raise ValueError("exactly one of spid/host must identify the requester")
        if not 0 < self.length <= MAX_ACCESS_BYTES:
            raise ValueError(f"access length {self.length} outside (0, {MAX_ACCESS_BYTES}]")
        if self.op is MemOp.WR and len(self.data) != self.length:
            raise ValueError("MemWr data length must equal the access length")

    @property
    def requester(self):
        return ("spid", self.spid) if self.spid is not None else ("host", self.host)


class MemoryExpander:
    """Global fabric-attached memory device.

    ``capacity_bytes`` bounds the DPA space that DMPs may provision. SAT coverage
    is tracked per region range, or per 4KB page when ``sat_granularity="page"``.
    """

    def __init__(self, capacity_bytes: int, sat_granularity: str = "region", pm_extra_ns: int = 0):
        if capacity_bytes <= 0 or capacity_bytes % PAGE:
            raise ConfigError("expander capacity must be a positive multiple of 4096", key="expander.size_gb")
        if sat_granularity not in ("region", "page"):
            raise ConfigError(f"unknown SAT granularity {sat_granularity!r}", key="expander.sat_granularity")
        self.capacity_bytes = capacity_bytes
        self.sat_granularity = sat_granularity
        self.pm_extra_ns = pm_extra_ns
        self.dmps: list[Dmp] = []
        self._dec_bases: list[int] = []
        self._decoders: dict[int, DecoderEntry] = {}
        self._sat: dict[int, set[tuple[int, int]]] = {}
        self._store: dict[int, bytearray] = {}
        self.decode_faults: Counter = Counter()
        self.access_faults: Counter = Counter()
        self.sat_remove_misses = 0
        self.requests = 0

    # -- provisioning -------------------------------------------------------

    def create_dmp(self, media: Media, size: int) -> Dmp:
        if size <= 0 or size % PAGE:
            raise ProvisioningError(f"DMP size {size} is not a positive multiple of 4096")
        base = self.dmps[-1].dpa_end if self.dmps else 0
        if base + size > self.capacity_bytes:
            raise ProvisioningError(
                f"DMP of {size} bytes exceeds expander capacity ({self.capacity_bytes - base} free)"
            )
        dmp = Dmp(len(self.dmps), Media(media), base, size)
        self.dmps.append(dmp)
        return dmp

    def dmp_for(self, dpa: int) -> Dmp | None:
        for dmp in self.dmps:
            if dmp.dpa_base <= dpa < dmp.dpa_end:
                return dmp
        return None

    # -- decoders -----------------------------------------------------------

    def map_window(self, hpa_base: int, dpa_base: int, size: int, owner_host: int) -> DecoderEntry:
        dmp = self.dmp_for(dpa_base)
        if dmp is None or dpa_base + size > dmp.dpa_end:
            raise ProvisioningError(f"DPA [{dpa_base:#x}, +{size:#x}) not inside one DMP")
        i = bisect_right(self._dec_bases, hpa_base)
        if i > 0:
            prev = self._decoders[self._dec_bases[i - 1]]
            if prev.hpa_base + prev.size_bytes > hpa_base:
                raise ProvisioningError(f"HPA window {hpa_base:#x} overlaps {prev.hpa_base:#x}")
        if i < len(self._dec_bases) and self._dec_bases[i] < hpa_base + size:
            raise ProvisioningError(f"HPA window {hpa_base:#x} overlaps {self._dec_bases[i]:#x}")
        entry = DecoderEntry(hpa_base, dpa_base, size, owner_host)
        insort(self._dec_bases, hpa_base)
        self._decoders[hpa_base] = entry
        return entry

    def unmap_window(self, hpa_base: int) -> None:
        entry = self._decoders.pop(hpa_base)
        self._dec_bases.remove(hpa_base)
        # freed memory must not leak into the next owner
        first = entry.dpa_base // PAGE
        for page in range(first, first + entry.size_bytes // PAGE):
            self._store.pop(page, None)

    def decoder_entries(self) -> list[DecoderEntry]:
        return [self._decoders[b] for b in self._dec_bases]

    def _decoder_for(self, hpa: int) -> DecoderEntry:
        i = bisect_right(self._dec_bases, hpa) - 1
        if i >= 0:
            entry = self._decoders[self._dec_bases[i]]
            if hpa < entry.hpa_base + entry.size_bytes:
                return entry
        raise DecodeFault(f"no decoder window covers HPA {hpa:#x}")

    def hpa_to_dpa(self, hpa: int) -> int:
        return self._decoder_for(hpa).translate(hpa)

    # -- SAT ----------------------------------------------------------------

    def _sat_keys(self, dpa_base, size):
        if self.sat_granularity == "page":
            return [(p, PAGE) for p in range(dpa_base, dpa_base + size, PAGE)]
        return [(dpa_base, size)]

    def sat_add(self, spid: int, dpa_base: int, size: int) -> None:
        if size <= 0:
            raise ValueError("SAT range must be non-empty")
        entries = self._sat.setdefault(spid, set())
        entries.update(self._sat_keys(dpa_base, size))

    def sat_remove(self, spid: int, dpa_base: int, size: int) -> None:
        entries = self._sat.get(spid, set())
        for key in self._sat_keys(dpa_base, size):
            if key in entries:
                entries.discard(key)
            else:
                self.sat_remove_misses += 1
        if not entries:
            self._sat.pop(spid, None)

    def sat_entries(self, spid: int | None = None) -> list[SatEntry]:
        spids = [spid] if spid is not None else sorted(self._sat)
        return [
            SatEntry(s, base, size)
            for s in spids
            for base, size in sorted(self._sat.get(s, ()))
        ]

    def sat_covers(self, spid: int, dpa: int, length: int) -> bool:
        end = dpa + length
        ranges = sorted((b, b + s) for b, s in self._sat.get(spid, ()))
        for start, stop in ranges:
            if start > dpa:
                return False
            if stop > dpa:
                dpa = stop
                if dpa >= end:
                    return True
        return False

    # -- data path ----------------------------------------------------------

    def handle(self, req: MemAccessRequest, at: int = 0) -> bytes | None:
        """Serve one request. Returns read data for MemRd, None for MemWr."""
        self.requests += 1
        try:
            entry = self._decoder_for(req.hpa)
            if req.hpa + req.length > entry.hpa_base + entry.size_bytes:
                raise DecodeFault(f"access at {req.hpa:#x} straddles a decoder window")
        except DecodeFault:
            self.decode_faults[req.requester] += 1
            raise
        dpa = entry.translate(req.hpa)
        if req.spid is not None and not self.sat_covers(req.spid, dpa, req.length):
            self.access_faults[req.requester] += 1
            raise AccessFault(f"SPID {req.spid} has no SAT entry for DPA {dpa:#x}")
        if req.op is MemOp.WR:
            self._write(dpa, req.data)
            return None
        return self._read(dpa, req.length)

    def media_extra_ns(self, hpa: int) -> int:
        if not self.pm_extra_ns:
            return 0
        dmp = self.dmp_for(self.hpa_to_dpa(hpa))
        return self.pm_extra_ns if dmp is not None and dmp.media is Media.PM else 0

    def _write(self, dpa: int, data: bytes) -> None:
        pos = 0
        while pos < len(data):
            page, off = divmod(dpa + pos, PAGE)
            n = min(PAGE - off, len(data) - pos)
            buf = self._store.get(page)
            if buf is None:
                buf = self._store[page] = bytearray(PAGE)
            buf[off:off + n] = data[pos:pos + n]
            pos += n

    def _read(self, dpa: int, length: int) -> bytes:
        out = bytearray()
        pos = 0
        while pos < length:
            page, off = divmod(dpa + pos, PAGE)
            n = min(PAGE - off, length - pos)
            buf = self._store.get(page)
            out += buf[off:off + n] if buf is not None else bytes(n)
            pos += n
        return bytes(out)

    def touched_pages(self) -> int:
        return len(self._store)

    def fault_counters(self) -> dict:
        return {
            "decode": {f"{k}:{v}": n for (k, v), n in sorted(self.decode_faults.items())},
            "access": {f"{k}:{v}": n for (k, v), n in sorted(self.access_faults.items())},
            "sat_remove_misses": self.sat_remove_misses,
        }
