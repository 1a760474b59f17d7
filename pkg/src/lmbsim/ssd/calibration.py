"""Fit of pipeline parameters to a datasheet, and calibration-file IO."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..errors import CalibrationError
from .spec import PAGE, IoClass, SsdSpec

DEFAULT_QD_REF = 64


@dataclass(frozen=True)
class FtlCalibration:
    """Pipeline parameters of one SSD.

    The index stage has ``index_engines`` servers; each index access occupies
    one for ``index_base_ns`` plus any remote/flash penalty. The media stage has
    ``media_units`` servers with a per-class service time for 4KB IOs.
    Sequential IOs translate only once per ``seq_*_coalesce`` consecutive pages.
    """

    index_engines: int
    index_base_ns: int
    n_read: int
    n_write: int
    media_units: int
    media_service_ns: dict
    seq_read_coalesce: int = 1
    seq_write_coalesce: int = 1
    provenance: str = ""
    fit_residuals: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("index_engines", "n_read", "n_write", "media_units", "seq_read_coalesce", "seq_write_coalesce"):
            if int(getattr(self, name)) < 1:
                raise CalibrationError(f"{name} must be >= 1")
        if self.index_base_ns < 0:
            raise CalibrationError("index_base_ns must be >= 0")
        missing = {c.value for c in IoClass} - set(self.media_service_ns)
        if missing:
            raise CalibrationError(f"media_service_ns lacks {sorted(missing)}")

    def accesses(self, io_class: IoClass) -> int:
        return self.n_write if io_class.is_write else self.n_read

    def coalesce(self, io_class: IoClass) -> int:
        if not io_class.sequential:
            return 1
        return self.seq_write_coalesce if io_class.is_write else self.seq_read_coalesce

    def media_ns(self, io_class: IoClass, io_size: int = PAGE) -> int:
        return self.media_service_ns[io_class.value] * io_size // PAGE


def calibrate(
    spec: SsdSpec,
    index_engines: int = 1,
    index_base_ns: int = 100,
    n_read: int = 1,
    n_write: int = 2,
    seq_read_coalesce: int = 1,
    seq_write_coalesce: int = 1,
    qd_ref: int = DEFAULT_QD_REF,
    provenance: str = "defaults",
) -> FtlCalibration:
    """Deterministic fit of the media stage to ``spec``.

    Media units follow from the QD1 random-read latency, clamped to
    ``qd_ref // 2`` so that a closed loop at ``qd_ref`` keeps every unit busy.
    Service times then make ``units / service`` equal each class's ceiling.
    """
    if spec.rand_read_lat_ns <= n_read * index_base_ns:
        raise CalibrationError(
            f"random-read latency {spec.rand_read_lat_ns}ns leaves no media time after "
            f"{n_read} x {index_base_ns}ns of indexing"
        )
    from_latency = math.ceil(spec.cap_iops(IoClass.RAND_READ) * (spec.rand_read_lat_ns - n_read * index_base_ns) / 1e9)
    units = max(1, min(from_latency, qd_ref // 2))
    service = {c.value: round(units * 1e9 / spec.cap_iops(c)) for c in IoClass}
    calib = FtlCalibration(
        index_engines=index_engines,
        index_base_ns=index_base_ns,
        n_read=n_read,
        n_write=n_write,
        media_units=units,
        media_service_ns=service,
        seq_read_coalesce=seq_read_coalesce,
        seq_write_coalesce=seq_write_coalesce,
        provenance=provenance,
    )
    for c in IoClass:
        per_io = calib.accesses(c) * index_base_ns / calib.coalesce(c)
        if per_io and index_engines * 1e9 / per_io < spec.cap_iops(c):
            raise CalibrationError(
                f"{c.value}: index stage caps at {index_engines * 1e9 / per_io:.0f} IOPS, "
                f"below the datasheet {spec.cap_iops(c):.0f}"
            )
    return calib


def save_calibration(calib: FtlCalibration, path, ssd: str) -> None:
    record = asdict(calib)
    provenance = record.pop("provenance")
    record = {"ssd": ssd, **record}
    header = "".join(f"# {line}\n" for line in provenance.splitlines() or [""])
    Path(path).write_text(header + yaml.safe_dump(record, sort_keys=False))


def load_calibration(path) -> tuple[str, FtlCalibration]:
    text = Path(path).read_text()
    provenance = "\n".join(
        line[2:] if line.startswith("# ") else line[1:]
        for line in text.splitlines()
        if line.startswith("#")
    )
    record = yaml.safe_load(text)
    if not isinstance(record, dict) or "ssd" not in record:
        raise CalibrationError(f"{path}: not a calibration record")
    ssd = record.pop("ssd")
    try:
        return ssd, FtlCalibration(provenance=provenance, **record)
    except TypeError as exc:
        raise CalibrationError(f"{path}: {exc}") from None
