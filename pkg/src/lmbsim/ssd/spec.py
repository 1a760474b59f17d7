"""Datasheet-level SSD description and the two reference devices."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

from ..errors import ConfigError

PAGE = 4096
TIB = 1 << 40
L2P_ENTRY_BYTES = 4


class IoClass(enum.Enum):
    RAND_READ = "rand_read"
    RAND_WRITE = "rand_write"
    SEQ_READ = "seq_read"
    SEQ_WRITE = "seq_write"

    @classmethod
    def of(cls, is_write: bool, sequential: bool) -> "IoClass":
        if sequential:
            return cls.SEQ_WRITE if is_write else cls.SEQ_READ
        return cls.RAND_WRITE if is_write else cls.RAND_READ

    @property
    def is_write(self):
        return self in (IoClass.RAND_WRITE, IoClass.SEQ_WRITE)

    @property
    def sequential(self):
        return self in (IoClass.SEQ_READ, IoClass.SEQ_WRITE)


@dataclass(frozen=True)
class SsdSpec:
    pcie_gen: int
    capacity_tb: float = 7.68
    rand_read_kiops: float = 0
    rand_write_kiops: float = 0
    seq_read_MBps: float = 0
    seq_write_MBps: float = 0
    rand_read_lat_ns: int = 0
    rand_write_lat_ns: int = 0

    def __post_init__(self):
        if self.pcie_gen not in (4, 5):
            raise ConfigError(f"unsupported PCIe generation {self.pcie_gen}", key="ssd.pcie_gen")
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError("must be positive", key=f"ssd.{f.name}")

    @property
    def capacity_bytes(self) -> int:
        return int(round(self.capacity_tb * TIB))

    @property
    def logical_pages(self) -> int:
        return self.capacity_bytes // PAGE

    @property
    def l2p_bytes(self) -> int:
        """Full page-level mapping table: one 4-byte entry per 4KB page."""
        return self.logical_pages * L2P_ENTRY_BYTES

    def cap_iops(self, io_class: IoClass, io_size: int = PAGE) -> float:
        """Datasheet throughput ceiling for ``io_class`` in IOs per second."""
        scale = PAGE / io_size
        if io_class is IoClass.RAND_READ:
            return self.rand_read_kiops * 1e3 * scale
        if io_class is IoClass.RAND_WRITE:
            return self.rand_write_kiops * 1e3 * scale
        if io_class is IoClass.SEQ_READ:
            return self.seq_read_MBps * 1e6 / io_size
        return self.seq_write_MBps * 1e6 / io_size

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


GEN4 = SsdSpec(
    pcie_gen=4, rand_read_kiops=1750, rand_write_kiops=340, seq_read_MBps=7200,
    seq_write_MBps=6800, rand_read_lat_ns=67000, rand_write_lat_ns=9000,
)
GEN5 = SsdSpec(
    pcie_gen=5, rand_read_kiops=2800, rand_write_kiops=700, seq_read_MBps=14000,
    seq_write_MBps=10000, rand_read_lat_ns=56000, rand_write_lat_ns=8000,
)
PRESETS = {"gen4": GEN4, "gen5": GEN5}
