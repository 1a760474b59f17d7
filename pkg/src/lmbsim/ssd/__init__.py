"""NVMe SSD model: two-stage index/media pipeline with pluggable L2P schemes."""

from .calibration import FtlCalibration, calibrate, load_calibration, save_calibration
from .device import IoRequest, SsdDevice
from .ftl import Dftl, FixedRatio, Ideal, Lmb, Lru
from .spec import GEN4, GEN5, IoClass, SsdSpec

__all__ = [
    "Dftl", "FixedRatio", "FtlCalibration", "GEN4", "GEN5", "Ideal", "IoClass", "IoRequest",
    "Lmb", "Lru", "SsdDevice", "SsdSpec", "calibrate", "load_calibration", "save_calibration",
]
