"""Property tests for the invariants each module promises."""

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import Rig
from lmbsim.expander import PAGE, Media, MemoryExpander
from lmbsim.fabric import LatencyModel, RouteClass, access_latency
from lmbsim.fabric_manager import FabricManager
from lmbsim.harness.config import make_scenario, parse_config
from lmbsim.harness.runner import run
from lmbsim.intervals import IntervalSet
from lmbsim.sim_core import Simulator
from lmbsim.ssd import GEN4, GEN5, Dftl, FtlCalibration, Ideal, IoClass, Lmb
from lmbsim.ssd.analytic import predict_iops

FAST = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@FAST
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 60), st.integers(1, 8)), max_size=80))
def test_interval_set_matches_point_set(ops):
    s = IntervalSet()
    points = set()
    for add, start, length in ops:
        span = set(range(start, start + length))
        if add and not span & points:
            s.add(start, start + length)
            points |= span
        elif not add and span <= points:
            s.remove(start, start + length)
            points -= span
    assert {p for a, b in s for p in range(a, b)} == points
    spans = list(s)
    assert all(b1 < a2 for (_, b1), (a2, _) in zip(spans, spans[1:]))  # disjoint and coalesced


@FAST
@given(st.lists(st.integers(0, 50), min_size=1, max_size=60))
def test_dispatch_order_is_time_then_insertion(delays):
    sim = Simulator()
    order = []
    for i, d in enumerate(delays):
        sim.schedule(d, order.append, (d, i))
    stats = sim.run_to_completion()
    assert order == sorted(order)
    assert stats.final_time == max(delays) and stats.events_dispatched == len(delays)


@FAST
@given(st.integers(0, 10_000), st.integers(0, 10_000), st.sampled_from([4, 5]))
def test_host_direct_is_hop_sum(port, hdm, gen):
    m = LatencyModel(cxl_port_ns=port, switch_hdm_ns=hdm)
    assert access_latency(RouteClass.HOST_DIRECT, gen, m) == 2 * port + hdm


@FAST
@given(st.lists(st.tuples(st.integers(0, 15), st.integers(1, 4)), max_size=20),
       st.integers(0, 15 * PAGE), st.integers(1, 64))
def test_sat_covers_iff_every_page_granted(grants, dpa, length):
    e = MemoryExpander(16 * PAGE)
    e.create_dmp(Media.DRAM, 16 * PAGE)
    pages = set()
    for first, n in grants:
        n = min(n, 16 - first)
        e.sat_add(9, first * PAGE, n * PAGE)
        pages |= set(range(first, first + n))
    length = min(length, 16 * PAGE - dpa)
    want = all(p in pages for p in range(dpa // PAGE, (dpa + length - 1) // PAGE + 1))
    assert e.sat_covers(9, dpa, length) == want


@FAST
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 1)), max_size=60))
def test_fm_ledger_conservation_and_round_trip(ops):
    e = MemoryExpander(8 * 16 * PAGE)
    e.create_dmp(Media.DRAM, 8 * 16 * PAGE)
    fm = FabricManager(e, [1, 2], block_size=16 * PAGE)
    initial = fm.free_dpa_intervals()
    held = []
    for grant, h in ops:
        before = fm.query_capacity().granted_bytes
        if grant and before < fm.total_bytes:
            held.append(fm.grant_block(h + 1))
        elif held:
            b = held.pop(0)
            fm.release_block(b.host, b.block_id)
        delta = fm.query_capacity().granted_bytes - before
        assert delta in (0, fm.block_size, -fm.block_size)
        assert fm.query_capacity().granted_bytes <= fm.total_bytes
        blocks = list(fm.blocks.values())
        dpas = sorted(b.dpa_base for b in blocks)
        assert all(a + fm.block_size <= b for a, b in zip(dpas, dpas[1:]))
    for b in held:
        fm.release_block(b.host, b.block_id)
    assert fm.free_dpa_intervals() == initial


@FAST
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(1, 40 * PAGE)), min_size=1, max_size=25))
def test_lmb_free_everything_leaves_no_trace(allocs):
    r = Rig(n_pcie=2, n_cxl=1, capacity=64 * 16 * PAGE, block_size=16 * PAGE)
    devs = r.pcie + r.cxl
    owned = []
    for which, size in allocs:
        d = devs[which]
        if r.fabric.is_pcie(d):
            owned.append((d, r.lmb.lmb_pcie_alloc(d, size).mmid))
        else:
            owned.append((d, r.lmb.lmb_cxl_alloc(d, size).mmid))
    for d, mmid in owned:
        (r.lmb.lmb_pcie_free if r.fabric.is_pcie(d) else r.lmb.lmb_cxl_free)(d, mmid)
    assert r.fm.query_capacity().granted_bytes == 0
    assert r.expander.sat_entries() == [] and r.expander.decoder_entries() == []


calibrations = st.builds(
    lambda e, s, nr, nw, units, svc, kr, kw: FtlCalibration(
        e, s, nr, nw, units, {c.value: svc * (1 + i) for i, c in enumerate(IoClass)}, kr, kw),
    st.integers(1, 8), st.integers(0, 1000), st.integers(1, 8), st.integers(1, 8),
    st.integers(1, 64), st.integers(500, 50_000), st.sampled_from([1, 2, 4, 8]), st.sampled_from([1, 2, 4, 8]),
)


@FAST
@given(calibrations, st.sampled_from(list(IoClass)), st.integers(1, 256), st.sampled_from([GEN4, GEN5]))
def test_predicted_scheme_ordering(calib, cls, qd, spec):
    values = [predict_iops(spec, calib, scheme, cls, qd=qd)
              for scheme in (Ideal(), Lmb("cxl"), Lmb("pcie"), Dftl(hit_model="fixed:0"))]
    assert values == sorted(values, reverse=True)


@settings(max_examples=25, deadline=None)
@given(calibrations, st.sampled_from(["randread", "randwrite", "seqread", "seqwrite"]),
       st.integers(1, 96), st.sampled_from(["ideal", "lmb-cxl", "lmb-pcie", "dftl"]), st.integers(0, 2**32))
def test_littles_law_on_random_runs(calib, pattern, qd, kind, seed):
    s = make_scenario({"workload.pattern": pattern, "workload.qd": qd, "workload.total_ios": max(40 * qd, 2000),
                       "scheme.kind": kind, "scheme.dftl.hit_model": "fixed:0.3", "experiment.seed": seed})
    r = run(s, calibration=calib)
    assert r.iops * r.lat_mean_ns / 1e9 == pytest.approx(qd, rel=0.05)


@FAST
@given(st.fixed_dictionaries({}, optional={
    "experiment.seed": st.integers(0, 2**40),
    "ssd.gen": st.sampled_from(["gen4", "gen5"]),
    "scheme.kind": st.sampled_from(["ideal", "dftl", "lmb-cxl", "lmb-pcie"]),
    "scheme.dftl.hit_model": st.sampled_from(["lru", "fixed:0", "fixed:0.75"]),
    "scheme.lmb.onboard_hit_ratio": st.floats(0, 1),
    "workload.pattern": st.sampled_from(["seqread", "randwrite"]),
    "workload.qd": st.integers(1, 512),
    "latency.flash_read_ns": st.integers(0, 10**6),
    "fm.block_size_mb": st.integers(1, 1024),
}))
def test_config_round_trip(overrides):
    s = make_scenario(overrides)
    (back,) = parse_config(s.dump())
    assert back == s
