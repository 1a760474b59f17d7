"""Build a fabric + SSD for a scenario, run it, and sweep scenario lists."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import LmbSimError, ModelFault
from ..expander import Media, MemoryExpander
from ..fabric import CxlDevice, Expander, Fabric, Host, PcieDevice
from ..fabric_manager import FabricManager
from ..lmb_core import LmbModule
from ..sim_core import Simulator
from ..ssd.calibration import FtlCalibration, calibrate, load_calibration
from ..ssd.device import L2pBinding, SsdDevice
from ..ssd.ftl import Dftl, Lmb
from .config import Scenario, resolve_calibration_path
from .report import RunReport, latency_stats, log2_histogram
from .workload import ClosedLoop

GiB = 1 << 30
MiB = 1 << 20


@dataclass
class System:
    sim: Simulator
    fabric: Fabric
    host: int
    device_id: object
    expander: MemoryExpander
    fm: FabricManager
    lmb: LmbModule
    ssd: SsdDevice
    calibration_source: str


def load_scenario_calibration(scenario: Scenario):
    spec = scenario.ssd_spec()
    source = scenario["calibration.file"]
    if source is None:
        return calibrate(spec), "defaults"
    path = resolve_calibration_path(source, scenario.ssd_gen)
    _, calib = load_calibration(path)
    return calib, str(path)


def build_system(scenario: Scenario, calibration: FtlCalibration | None = None) -> System:
    """Topology: one host, the switch, the expander, and the SSD.

    The SSD is a CXL device for LMB-CXL and a PCIe device behind the host
    otherwise. LMB schemes run the driver-init flow: load the LMB module,
    allocate the full L2P table from the expander, bind it to the SSD.
    ``calibration`` replaces the one named by the scenario.
    """
    spec = scenario.ssd_spec()
    scheme = scenario.scheme()
    latency = scenario.latency()
    sim = Simulator(seed=scenario.seed)

    fabric = Fabric()
    host = fabric.attach(Host(pcie_gen=spec.pcie_gen))
    fabric.attach(Expander())
    if isinstance(scheme, Lmb) and scheme.kind == "lmb-cxl":
        dev = fabric.attach(CxlDevice("ssd"))
    else:
        dev = fabric.attach(PcieDevice(host, spec.pcie_gen, "ssd"))
    fabric.seal()

    size = scenario["expander.size_gb"] * GiB
    expander = MemoryExpander(size)
    expander.create_dmp(Media.DRAM, size)
    fm = FabricManager(expander, fabric.hosts(), block_size=scenario["fm.block_size_mb"] * MiB)
    lmb = LmbModule(host, fabric, fm, expander, latency=latency, sim=sim)
    lmb.init()

    if calibration is None:
        calib, source = load_scenario_calibration(scenario)
    else:
        calib, source = calibration, "explicit"
    ssd = SsdDevice(sim, spec, calib, scheme, latency=latency, rng=sim.rng.fork("ssd"))
    if isinstance(scheme, Lmb):
        l2p = spec.l2p_bytes
        if scheme.kind == "lmb-cxl":
            hpa, _dpid, mmid = lmb.lmb_cxl_alloc(dev, l2p)
            addr = hpa
        else:
            addr, mmid = lmb.lmb_pcie_alloc(dev, l2p)
        ssd.attach_l2p(L2pBinding(lmb, dev, addr, lmb.regions[mmid].size_bytes, mmid,
                                  functional=scenario["scheme.lmb.functional_index"]))
    return System(sim, fabric, host, dev, expander, fm, lmb, ssd, source)


def _fault_total(system: System) -> int:
    exp = system.expander
    return (
        sum(exp.decode_faults.values())
        + sum(exp.access_faults.values())
        + sum(system.lmb.iommu_faults.values())
    )


def run(scenario: Scenario, calibration: FtlCalibration | None = None) -> RunReport:
    wall = time.perf_counter()
    w = scenario.workload()
    report = RunReport(
        scenario=scenario.name, ssd_gen=scenario.ssd_gen, scheme=scenario.scheme_kind,
        pattern=w.pattern, qd=w.qd, io_size=w.io_size, total_ios=w.total_ios, seed=scenario.seed,
        header=scenario.v,
    )
    system = None
    try:
        system = build_system(scenario, calibration)
        loop = ClosedLoop(system.sim, system.ssd, w, system.sim.rng.fork("workload"))
        loop.start()
        stats = system.sim.run_to_completion()
    except (ModelFault, LmbSimError) as exc:
        report.error = type(exc).__name__
        report.details = {"message": str(exc)}
        if system is not None:
            report.details["faults"] = _counters(system)
            report.faults = _fault_total(system)
        report.wall_s = time.perf_counter() - wall
        return report

    ssd = system.ssd
    duration = loop.last_completion
    lat = np.frombuffer(loop.latencies, dtype=np.int64)[w.qd:]
    st = latency_stats(lat)
    report.iops = w.total_ios * 1e9 / duration if duration else 0.0
    report.bw_mbps = report.iops * w.io_size / 1e6
    report.lat_mean_ns = st["mean"]
    report.lat_p50_ns, report.lat_p99_ns, report.lat_p999_ns = st["p50"], st["p99"], st["p999"]
    report.index_util, report.media_util = ssd.utilization(duration)
    report.faults = _fault_total(system)
    report.sim_ns = stats.final_time
    report.histogram = log2_histogram(lat)
    report.details = {
        "events_dispatched": stats.events_dispatched,
        "submitted": ssd.submitted,
        "completed": ssd.completed,
        "index_accesses": ssd.index_accesses,
        "coalesced_ios": ssd.coalesced_ios,
        "calibration": system.calibration_source,
        "faults": _counters(system),
        "fm": system.fm.dump(),
        "sat": [e.__dict__ for e in system.expander.sat_entries()],
        "decoders": len(system.expander.decoder_entries()),
    }
    if isinstance(ssd.scheme, Dftl):
        report.details["dftl"] = {
            "hits": ssd.cmt.hits, "misses": ssd.cmt.misses,
            "miss_ratio": ssd.cmt.miss_ratio, "dirty_evictions": ssd.cmt.dirty_evictions,
        }
    report.wall_s = time.perf_counter() - wall
    return report


def _counters(system: System) -> dict:
    return {**system.expander.fault_counters(), **system.lmb.fault_counters()}


def sweep(scenarios, workers: int = 1) -> list[RunReport]:
    """Run each scenario in its own simulation; rows keep scenario order."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("sweep needs at least one scenario")
    if workers <= 1 or len(scenarios) == 1:
        return [run(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, scenarios))
