"""Acceptance suite. Each test prints one ``[criterion N] PASS|FAIL`` line.

The full run takes several minutes: criteria 1 and 2 simulate 40 runs of 2M IOs.
"""

import random
import time

import pytest
from conftest import MiB, Rig

from fuzz import access_probe, fm_fuzz, lmb_fuzz
from lmbsim.errors import ModelFault
from lmbsim.expander import MemOp
from lmbsim.harness import make_scenario, parse_config, run, sweep, to_csv
from lmbsim.harness.config import profile_text
from lmbsim.ssd.analytic import throughput_bounds
from lmbsim.ssd.calibration import FtlCalibration, calibrate
from lmbsim.ssd.spec import PRESETS, IoClass
from lmbsim.sim_core import Simulator

REPORTS = []  # every closed-loop run, checked by criterion 9

PATTERN_CLASS = {
    "seqread": IoClass.SEQ_READ, "randread": IoClass.RAND_READ,
    "seqwrite": IoClass.SEQ_WRITE, "randwrite": IoClass.RAND_WRITE,
}

# normalized throughput per (gen, pattern, scheme); writes share one value per scheme
FIGURE5 = {
    "gen4": {
        "seqread": {"lmb-cxl": 1.0, "lmb-pcie": 0.834, "dftl": 0.0596},
        "randread": {"lmb-cxl": 1.0, "lmb-pcie": 0.867, "dftl": 0.0619},
        "seqwrite": {"lmb-cxl": 1.0, "lmb-pcie": 1.0, "dftl": 0.1429},
        "randwrite": {"lmb-cxl": 1.0, "lmb-pcie": 1.0, "dftl": 0.1429},
    },
    "gen5": {
        "seqread": {"lmb-cxl": 0.92, "lmb-pcie": 0.38, "dftl": 0.019},
        "randread": {"lmb-cxl": 0.44, "lmb-pcie": 0.30, "dftl": 0.015},
        "seqwrite": {"lmb-cxl": 1.0, "lmb-pcie": 1.0, "dftl": 0.05},
        "randwrite": {"lmb-cxl": 1.0, "lmb-pcie": 1.0, "dftl": 0.05},
    },
}
TOLERANCE = 0.20
# (gen, pattern, scheme): (lo, hi) hard anchors on the normalized ratio
ANCHORS = {
    **{("gen4", p, s): (0.95, float("inf")) for p in ("seqwrite", "randwrite") for s in ("lmb-cxl", "lmb-pcie")},
    **{("gen4", p, "lmb-pcie"): (0.75, 0.92) for p in ("seqread", "randread")},
    ("gen5", "randread", "lmb-cxl"): (0.30, 0.60),
    **{("gen5", p, "lmb-pcie"): (0.15, 0.50) for p in ("seqread", "randread")},
}
MIN_WRITE_RATIO = {"gen4": 5, "gen5": 10}


def _record(log, n, ok, detail):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    log.append(line)
    return ok


def _run(scenario, calibration=None):
    r = run(scenario, calibration)
    assert not r.error, r.details
    REPORTS.append(r)
    return r


@pytest.fixture(scope="module")
def figure5():
    """The bundled comparison grid at full length, keyed by (gen, pattern, scheme)."""
    reports = [_run(s) for s in parse_config(profile_text("figure5"))]
    return {(r.ssd_gen, r.pattern, r.scheme): r for r in reports}


def test_criterion_1_calibration_gate(acceptance_log):
    worst, slowest, bad = 0.0, 0.0, []
    for gen, spec in sorted(PRESETS.items()):
        for pattern, cls in PATTERN_CLASS.items():
            s = make_scenario({"ssd.gen": gen, "scheme.kind": "ideal", "workload.pattern": pattern,
                               "workload.qd": 64, "workload.io_size": 4096, "workload.total_ios": 2_000_000})
            r = _run(s)
            if cls.sequential:
                target = spec.seq_write_MBps if cls.is_write else spec.seq_read_MBps
                err = r.bw_mbps / target - 1
            else:
                err = r.iops / spec.cap_iops(cls) - 1
            worst = max(worst, abs(err))
            slowest = max(slowest, r.wall_s)
            if abs(err) > 0.05 or r.wall_s >= 30:
                bad.append(f"{gen}/{pattern} err {err:+.3f} wall {r.wall_s:.1f}s")
    ok = not bad
    _record(acceptance_log, 1, ok, f"ideal vs datasheet: worst error {worst:.4f} (limit 0.05), "
                                   f"slowest run {slowest:.1f}s (limit 30s) {bad}")
    assert ok, bad


def test_criterion_2_figure5_shape(acceptance_log, figure5):
    bad, residuals = [], []
    for gen, per_pattern in FIGURE5.items():
        for pattern, per_scheme in per_pattern.items():
            ideal = figure5[(gen, pattern, "ideal")].iops
            for scheme, target in per_scheme.items():
                ratio = figure5[(gen, pattern, scheme)].iops / ideal
                residuals.append(f"{gen}/{pattern}/{scheme} {ratio:.3f} ({ratio - target:+.3f})")
                if abs(ratio - target) > TOLERANCE:
                    bad.append(f"{gen}/{pattern}/{scheme} {ratio:.3f} vs {target}")
                lo, hi = ANCHORS.get((gen, pattern, scheme), (-1, float("inf")))
                if not lo <= ratio <= hi:
                    bad.append(f"{gen}/{pattern}/{scheme} {ratio:.3f} outside [{lo}, {hi}]")
    for line in residuals:
        print("  residual", line)
    ok = not bad
    _record(acceptance_log, 2, ok, f"{len(residuals)} bars within ±{TOLERANCE}, all anchors held {bad}")
    assert ok, bad


def test_criterion_3_lmb_over_dftl(acceptance_log, figure5):
    bad, ratios, misses = [], [], []
    for gen, minimum in MIN_WRITE_RATIO.items():
        for pattern in ("seqwrite", "randwrite"):
            dftl = figure5[(gen, pattern, "dftl")].iops
            for scheme in ("lmb-cxl", "lmb-pcie"):
                ratio = figure5[(gen, pattern, scheme)].iops / dftl
                ratios.append(ratio)
                if ratio < minimum:
                    bad.append(f"{gen}/{pattern}/{scheme} {ratio:.2f} < {minimum}")
        # the same comparison with a real LRU cache under uniform random writes
        base = {"ssd.gen": gen, "workload.pattern": "randwrite", "workload.total_ios": 200_000,
                "experiment.seed": 20240601, "calibration.file": "builtin:figure5"}
        lru = _run(make_scenario({**base, "scheme.kind": "dftl", "scheme.dftl.hit_model": "lru"}))
        miss = lru.details["dftl"]["miss_ratio"]
        misses.append(miss)
        accesses = lru.details["dftl"]["hits"] + lru.details["dftl"]["misses"]
        if miss <= 0.99 or accesses < 100_000:
            bad.append(f"{gen} LRU miss ratio {miss:.4f} over {accesses} accesses")
        for scheme in ("lmb-cxl", "lmb-pcie"):
            ratio = _run(make_scenario({**base, "scheme.kind": scheme})).iops / lru.iops
            ratios.append(ratio)
            if ratio < minimum:
                bad.append(f"{gen}/randwrite/{scheme} vs LRU {ratio:.2f} < {minimum}")
    ok = not bad
    _record(acceptance_log, 3, ok, f"min LMB/DFTL write ratio {min(ratios):.2f} (need 5 gen4, 10 gen5), "
                                   f"LRU miss ratios {[round(m, 4) for m in misses]} {bad}")
    assert ok, bad


def _random_calibration(rnd, spec):
    while True:
        try:
            return calibrate(
                spec,
                index_engines=rnd.randint(1, 8),
                index_base_ns=rnd.randrange(10, 1001, 10),
                n_read=rnd.randint(1, 8),
                n_write=rnd.randint(1, 8),
                seq_read_coalesce=rnd.choice((1, 2, 4, 8, 16)),
                seq_write_coalesce=rnd.choice((1, 2, 4, 8, 16)),
                qd_ref=rnd.choice((8, 16, 32, 64, 128)),
            )
        except Exception:
            continue


def test_criterion_4_ordering(acceptance_log):
    rnd = random.Random(404)
    violations, cases = [], 0
    for case in range(50):
        gen = rnd.choice(sorted(PRESETS))
        calib = _random_calibration(rnd, PRESETS[gen])
        base = {
            "ssd.gen": gen, "experiment.seed": rnd.randrange(1 << 30),
            "workload.pattern": rnd.choice(list(PATTERN_CLASS)),
            "workload.qd": rnd.choice((1, 2, 8, 32, 64, 128)),
            "workload.io_size": rnd.choice((4096, 8192, 16384)),
            "workload.total_ios": 20_000,
            "scheme.dftl.hit_model": "fixed:0",
        }
        iops = [_run(make_scenario({**base, "scheme.kind": k}), calib).iops
                for k in ("ideal", "lmb-cxl", "lmb-pcie", "dftl")]
        cases += 1
        if not iops[0] >= iops[1] >= iops[2] >= iops[3]:
            violations.append((case, base, iops))
    ok = not violations
    _record(acceptance_log, 4, ok, f"ideal >= lmb-cxl >= lmb-pcie >= dftl over {cases} random cases, "
                                   f"{len(violations)} violations")
    assert ok, violations


def _bottleneck_cases(count=30):
    """Random pipelines whose tightest bound beats the next by at least 20%,
    a third each bound by media, index and queue depth."""
    rnd = random.Random(505)
    want = {"media": count // 3, "index": count // 3, "latency": count - 2 * (count // 3)}
    cases = []
    while any(want.values()):
        gen = rnd.choice(sorted(PRESETS))
        spec = PRESETS[gen]
        units = rnd.randint(1, 48)
        service = {c.value: rnd.randrange(2_000, 80_000, 10) for c in IoClass}
        calib = FtlCalibration(
            index_engines=rnd.randint(1, 8), index_base_ns=rnd.randrange(50, 3000, 10),
            n_read=rnd.randint(1, 4), n_write=rnd.randint(1, 4),
            media_units=units, media_service_ns=service,
        )
        kind = rnd.choice(("ideal", "lmb-cxl", "lmb-pcie", "dftl"))
        pattern = rnd.choice(list(PATTERN_CLASS))
        qd = rnd.choice((1, 2, 4, 8, 16, 32, 64, 128))
        s = make_scenario({"ssd.gen": gen, "scheme.kind": kind, "workload.pattern": pattern,
                           "workload.qd": qd, "workload.total_ios": 100_000,
                           "scheme.dftl.hit_model": "fixed:0", "experiment.seed": rnd.randrange(1 << 30)})
        bounds = throughput_bounds(spec, calib, s.scheme(), PATTERN_CLASS[pattern], qd=qd, latency=s.latency())
        (first, lo), (_, second) = sorted(bounds.items(), key=lambda kv: kv[1])[:2]
        if lo <= 0.8 * second and want[first]:
            want[first] -= 1
            cases.append((s, calib, first, lo))
    return cases


def test_criterion_5_analytic_oracle(acceptance_log):
    worst, bad = 0.0, []
    cases = _bottleneck_cases()
    for s, calib, kind, predicted in cases:
        r = _run(s, calib)
        err = r.iops / predicted - 1
        worst = max(worst, abs(err))
        if abs(err) > 0.03:
            bad.append(f"{s.scheme_kind}/{s['workload.pattern']} qd{s['workload.qd']} {kind}-bound err {err:+.4f}")
    ok = not bad and len(cases) == 30
    _record(acceptance_log, 5, ok, f"{len(cases)} single-bottleneck configs, worst DES/oracle error {worst:.4f} "
                                   f"(limit 0.03) {bad}")
    assert ok, bad


def test_criterion_6_allocator_and_access_control(acceptance_log):
    t = time.perf_counter()
    fm_fuzz(100_000, seed=7)
    lmb_fuzz(100_000, seed=31337)
    probes = false_grants = false_denials = 0
    for n_pcie, n_cxl in ((1, 2), (2, 1), (3, 0), (0, 3)):
        p, g, d = access_probe(n_pcie, n_cxl, ops=400)
        probes, false_grants, false_denials = probes + p, false_grants + g, false_denials + d
    ok = probes > 0 and false_grants == 0 and false_denials == 0
    _record(acceptance_log, 6, ok, f"1e5-op FM and LMB fuzz matched the oracles, {probes} access probes with "
                                   f"{false_grants} false grants / {false_denials} false denials, ledger back to 0 "
                                   f"({time.perf_counter() - t:.0f}s)")
    assert ok


def _interleaving(rnd):
    """One zero-copy exchange: the PCIe SSD writes its buffer while the CXL
    accelerator reads it through the shared mapping, at random times."""
    r = Rig(n_pcie=1, n_cxl=1, capacity=4 * MiB, block_size=MiB)
    ssd, accel = r.pcie[0], r.cxl[0]
    sim = Simulator(seed=rnd.randrange(1 << 30))
    r.lmb.sim = sim
    size = rnd.randint(1, 3 * 4096)
    bus, mmid = r.lmb.lmb_pcie_alloc(ssd, size)
    hpa, _ = r.lmb.lmb_cxl_share(accel, mmid)
    shadow = bytearray(size)
    mismatches = []

    def span():
        off = rnd.randrange(size)
        return off, rnd.randint(1, min(64, size - off))

    def write(off, data):
        r.lmb.device_mem_access(ssd, MemOp.WR, bus + off, len(data), data)
        shadow[off:off + len(data)] = data

    def read(off, n):
        got = r.lmb.device_mem_access(accel, MemOp.RD, hpa + off, n).data
        if got != bytes(shadow[off:off + n]):
            mismatches.append((off, n))

    for _ in range(rnd.randint(5, 40)):
        off, n = span()
        sim.schedule(rnd.randrange(10_000), write, off, rnd.randbytes(n))
    for _ in range(rnd.randint(5, 40)):
        sim.schedule(rnd.randrange(10_000), read, *span())
    sim.run_to_completion()
    for off in range(0, size, 64):
        read(off, min(64, size - off))

    r.lmb.lmb_pcie_free(ssd, mmid)
    revoked = 0
    for dev, addr in ((ssd, bus), (accel, hpa)):
        off = rnd.randrange(size)
        try:
            r.lmb.device_mem_access(dev, MemOp.RD, addr + off, 1)
        except ModelFault:
            revoked += 1
    return not mismatches, revoked == 2


def test_criterion_7_shared_memory_integrity(acceptance_log):
    rnd = random.Random(707)
    results = [_interleaving(rnd) for _ in range(1000)]
    identical = sum(a for a, _ in results)
    revoked = sum(b for _, b in results)
    ok = identical == revoked == 1000
    _record(acceptance_log, 7, ok, f"{identical}/1000 interleavings byte-identical, "
                                   f"{revoked}/1000 revoked for both devices after free")
    assert ok


def test_criterion_8_determinism(acceptance_log):
    text = """
experiment: {name: det, seed: 99}
workload: {total_ios: 20000, qd: 16}
scheme: {dftl: {hit_model: lru, cmt_entries: 64}}
matrix:
  ssd.gen: [gen4, gen5]
  workload.pattern: [seqread, randwrite]
  scheme.kind: [ideal, lmb-cxl, lmb-pcie, dftl]
"""
    first = sweep(parse_config(text))
    second = sweep(parse_config(text))
    parallel = sweep(parse_config(text), workers=2)
    REPORTS.extend(first)
    csvs = [to_csv(x) for x in (first, second, parallel)]
    ok = csvs[0] == csvs[1] == csvs[2] and not any(r.error for r in first)
    _record(acceptance_log, 8, ok, f"{len(first)}-row sweep byte-identical across 2 serial runs and a 2-worker run")
    assert ok


def test_criterion_9_littles_law(acceptance_log):
    assert REPORTS, "criterion 9 runs after the simulation criteria"
    worst, bad = 0.0, []
    for r in REPORTS:
        err = r.iops * r.lat_mean_ns / 1e9 / r.qd - 1
        worst = max(worst, abs(err))
        if abs(err) > 0.05:
            bad.append(f"{r.ssd_gen}/{r.scheme}/{r.pattern} qd{r.qd} err {err:+.4f}")
    ok = not bad
    _record(acceptance_log, 9, ok, f"throughput x mean latency = QD on {len(REPORTS)} runs, "
                                   f"worst error {worst:.4f} (limit 0.05) {bad[:5]}")
    assert ok, bad
