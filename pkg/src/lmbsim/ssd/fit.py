"""Fit the index-stage parameters to a table of normalized scheme throughputs.

The target table gives, per workload class, each scheme's throughput relative
to Ideal, plus optional hard bands and a minimum LMB-over-DFTL ratio. The
search is an exhaustive grid over engines, per-access base time, accesses per
IO and sequential coalescing. Predictions use the closed-form pipeline bound
``min(media, engines / occupancy, qd / (occupancy + media))`` evaluated on the
whole grid at once. Among points that meet every band with a safety margin,
the one with the least squared error wins.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..errors import CalibrationError
from ..fabric import LatencyModel, RouteClass, access_latency
from .calibration import DEFAULT_QD_REF, FtlCalibration, calibrate
from .spec import IoClass, SsdSpec

SCHEMES = ("lmb-cxl", "lmb-pcie", "dftl")
ENGINES = np.arange(1, 9)
BASE_NS = np.arange(10, 1001, 10)
ACCESSES = np.arange(1, 9)
COALESCE = np.array([1, 2, 3, 4, 6, 8, 16])
MARGINS = (0.03, 0.02, 0.01, 0.0)


def load_targets(path=None) -> dict:
    """Read a target table; ``None`` loads the bundled one."""
    if path is None:
        text = resources.files("lmbsim.data").joinpath("figure5_targets.yaml").read_text()
    else:
        text = Path(path).read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict) or "devices" not in data:
        raise CalibrationError(f"{path}: target table needs a 'devices' mapping")
    return data


def _penalties(spec: SsdSpec, latency: LatencyModel) -> dict:
    return {
        "ideal": 0,
        "lmb-cxl": access_latency(RouteClass.CXL_P2P, spec.pcie_gen, latency),
        "lmb-pcie": access_latency(RouteClass.PCIE_VIA_HOST, spec.pcie_gen, latency),
        "dftl": latency.flash_read_ns,
    }


def _grid_iops(spec, penalty, io_class, E, s, n, k, units, qd):
    """Predicted IOPS of ``io_class`` for every grid point (broadcast arrays)."""
    service = np.round(units * 1e9 / spec.cap_iops(io_class))
    occ = n * (s + penalty) / k
    media = units * 1e9 / service
    return np.minimum(np.minimum(media, E * 1e9 / occ), qd * 1e9 / (occ + service))


def _band_ok(value, lo, hi, margin):
    width = hi - lo
    pad = min(margin, width / 4)
    # an upper edge at 1.0 is where an unthrottled scheme sits, so keep it reachable
    top = hi if hi >= 1.0 else hi - pad
    return (value >= lo + pad) & (value <= top + 1e-9)


def fit_device(
    spec: SsdSpec,
    device_targets: dict,
    tolerance: float = 0.20,
    latency: LatencyModel | None = None,
    qd: int = DEFAULT_QD_REF,
    provenance: str = "",
) -> FtlCalibration:
    """Best calibration for one device; raises if no grid point meets the bands."""
    latency = latency or LatencyModel()
    pen = _penalties(spec, latency)
    bars = device_targets.get("bars", {})
    bands = device_targets.get("bands", {})
    ratios = device_targets.get("min_lmb_over_dftl", {})

    # axes: E, s, n_read, k_read, n_write, k_write
    E = ENGINES.reshape(-1, 1, 1, 1, 1, 1).astype(float)
    s = BASE_NS.reshape(1, -1, 1, 1, 1, 1).astype(float)
    nr = ACCESSES.reshape(1, 1, -1, 1, 1, 1).astype(float)
    kr = COALESCE.reshape(1, 1, 1, -1, 1, 1).astype(float)
    nw = ACCESSES.reshape(1, 1, 1, 1, -1, 1).astype(float)
    kw = COALESCE.reshape(1, 1, 1, 1, 1, -1).astype(float)

    lat_budget = spec.rand_read_lat_ns - nr * s
    units = np.minimum(np.ceil(spec.cap_iops(IoClass.RAND_READ) * lat_budget / 1e9), qd // 2)
    units = np.maximum(units, 1)
    feasible = lat_budget > 0

    preds = {}
    for c in IoClass:
        n, k = (nw, kw) if c.is_write else (nr, kr)
        k = k if c.sequential else 1.0
        ideal = _grid_iops(spec, 0, c, E, s, n, k, units, qd)
        # the index stage alone must not cap Ideal below the datasheet
        feasible = feasible & (E * 1e9 / (n * s / k) >= spec.cap_iops(c))
        feasible = feasible & (ideal >= 0.999 * spec.cap_iops(c))
        for scheme in SCHEMES:
            preds[(c.value, scheme)] = _grid_iops(spec, pen[scheme], c, E, s, n, k, units, qd) / ideal

    loss = np.zeros(np.broadcast_shapes(*(p.shape for p in preds.values())))
    for cls, per_scheme in bars.items():
        for scheme, target in per_scheme.items():
            loss = loss + (preds[(cls, scheme)] - float(target)) ** 2

    for margin in MARGINS:
        ok = np.broadcast_to(feasible, loss.shape).copy()
        for cls, per_scheme in bars.items():
            for scheme, target in per_scheme.items():
                ok &= np.abs(preds[(cls, scheme)] - float(target)) <= tolerance - margin
        for cls, per_scheme in bands.items():
            for scheme, (lo, hi) in per_scheme.items():
                ok &= _band_ok(preds[(cls, scheme)], lo, hi, margin)
        for cls, minimum in ratios.items():
            for scheme in ("lmb-cxl", "lmb-pcie"):
                ok &= preds[(cls, scheme)] / preds[(cls, "dftl")] >= minimum * (1 + margin)
        if ok.any():
            masked = np.where(ok, loss, np.inf)
            idx = np.unravel_index(int(np.argmin(masked)), loss.shape)
            break
    else:
        raise CalibrationError("no grid point satisfies the target bands")

    e, si, ri, kri, wi, kwi = idx
    residuals = {
        f"{cls}/{scheme}": round(float(preds[(cls, scheme)][_pick(preds[(cls, scheme)], idx)]) - float(t), 4)
        for cls, per_scheme in bars.items()
        for scheme, t in per_scheme.items()
    }
    note = (
        f"{provenance}\nfit: margin {margin}, squared error {float(loss[idx]):.5f}".strip()
    )
    calib = calibrate(
        spec,
        index_engines=int(ENGINES[e]),
        index_base_ns=int(BASE_NS[si]),
        n_read=int(ACCESSES[ri]),
        n_write=int(ACCESSES[wi]),
        seq_read_coalesce=int(COALESCE[kri]),
        seq_write_coalesce=int(COALESCE[kwi]),
        qd_ref=qd,
        provenance=note,
    )
    return FtlCalibration(**{**calib.__dict__, "fit_residuals": residuals})


def _pick(arr, idx):
    # index a broadcast array with a full-rank index
    return tuple(0 if arr.shape[d] == 1 else i for d, i in enumerate(idx))


def predicted_bars(spec, calib: FtlCalibration, latency=None, qd=DEFAULT_QD_REF) -> dict:
    """``{(class, scheme): normalized throughput}`` from the closed form."""
    latency = latency or LatencyModel()
    pen = _penalties(spec, latency)
    out = {}
    for c in IoClass:
        n = calib.accesses(c)
        k = calib.coalesce(c)
        media = calib.media_service_ns[c.value]

        def iops(p):
            occ = n * (calib.index_base_ns + p) / k
            return min(calib.media_units * 1e9 / media, calib.index_engines * 1e9 / occ, qd * 1e9 / (occ + media))

        ideal = iops(0)
        for scheme in SCHEMES:
            out[(c.value, scheme)] = iops(pen[scheme]) / ideal
    return out

