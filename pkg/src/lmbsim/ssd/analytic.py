"""Closed-form throughput bound for the two-stage pipeline.

Written against the calibration record and scheme definitions only; it does
not import or share code with the event-driven device model.
"""

from __future__ import annotations

from ..fabric import LatencyModel, access_latency
from .calibration import FtlCalibration
from .ftl import Dftl, FixedRatio, Ideal, Lmb
from .spec import PAGE, IoClass, SsdSpec


def remote_penalty_ns(scheme, pcie_gen: int, latency: LatencyModel, dftl_miss_ratio=None) -> float:
    """Expected extra index time per access beyond the onboard base."""
    if isinstance(scheme, Ideal):
        return 0.0
    if isinstance(scheme, Lmb):
        return (1.0 - scheme.onboard_hit_ratio) * access_latency(scheme.route, pcie_gen, latency)
    if isinstance(scheme, Dftl):
        if dftl_miss_ratio is None:
            dftl_miss_ratio = 1.0 - scheme.hit_model.p if isinstance(scheme.hit_model, FixedRatio) else 1.0
        return dftl_miss_ratio * latency.flash_read_ns
    raise TypeError(f"unknown scheme {scheme!r}")


def mean_index_occupancy(calib, scheme, io_class, pcie_gen, latency, dftl_miss_ratio=None) -> float:
    n = calib.n_write if io_class.is_write else calib.n_read
    per_access = calib.index_base_ns
    penalty = remote_penalty_ns(scheme, pcie_gen, latency, dftl_miss_ratio)
    if not (isinstance(scheme, Dftl) and scheme.miss_stage == "media"):
        per_access += penalty
    k = 1
    if io_class.sequential:
        k = calib.seq_write_coalesce if io_class.is_write else calib.seq_read_coalesce
    return n * per_access / k


def throughput_bounds(
    spec: SsdSpec,
    calib: FtlCalibration,
    scheme,
    io_class: IoClass,
    qd: int = 64,
    io_size: int = PAGE,
    latency: LatencyModel | None = None,
    dftl_miss_ratio=None,
) -> dict:
    """The three candidate bottlenecks in IOs per second."""
    latency = latency or LatencyModel()
    occ = mean_index_occupancy(calib, scheme, io_class, spec.pcie_gen, latency, dftl_miss_ratio)
    media = calib.media_service_ns[io_class.value] * io_size / PAGE
    if isinstance(scheme, Dftl) and scheme.miss_stage == "media":
        n = calib.n_write if io_class.is_write else calib.n_read
        k = calib.coalesce(io_class)
        media += n * remote_penalty_ns(scheme, spec.pcie_gen, latency, dftl_miss_ratio) / k
    return {
        "media": calib.media_units * 1e9 / media,
        "index": calib.index_engines * 1e9 / occ if occ > 0 else float("inf"),
        "latency": qd * 1e9 / (occ + media),
    }


def predict_iops(*args, **kwargs) -> float:
    return min(throughput_bounds(*args, **kwargs).values())
