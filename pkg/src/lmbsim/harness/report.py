"""Run reports: CSV rows, latency histograms, and the normalized comparison table."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = (
    "scenario", "ssd_gen", "scheme", "pattern", "qd", "io_size", "total_ios", "seed",
    "iops", "bw_mbps", "lat_mean_ns", "lat_p50_ns", "lat_p99_ns", "lat_p999_ns",
    "index_util", "media_util", "faults", "sim_ns",
)
SCHEME_ORDER = ("ideal", "lmb-cxl", "lmb-pcie", "dftl")
PATTERN_ORDER = ("seqread", "randread", "seqwrite", "randwrite")


@dataclass
class RunReport:
    scenario: str
    ssd_gen: str
    scheme: str
    pattern: str
    qd: int
    io_size: int
    total_ios: int
    seed: int
    iops: float = 0.0
    bw_mbps: float = 0.0
    lat_mean_ns: float = 0.0
    lat_p50_ns: int = 0
    lat_p99_ns: int = 0
    lat_p999_ns: int = 0
    index_util: float = 0.0
    media_util: float = 0.0
    faults: int = 0
    sim_ns: int = 0
    error: str = ""
    histogram: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    header: dict = field(default_factory=dict)
    wall_s: float = 0.0

    def row(self) -> list[str]:
        if self.error:
            head = [self.scenario, self.ssd_gen, self.scheme, self.pattern, self.qd, self.io_size, self.total_ios, self.seed]
            return [str(v) for v in head] + [f"ERROR:{self.error}"] + [""] * (len(CSV_COLUMNS) - len(head) - 1)
        return [
            self.scenario, self.ssd_gen, self.scheme, self.pattern, str(self.qd), str(self.io_size),
            str(self.total_ios), str(self.seed), f"{self.iops:.1f}", f"{self.bw_mbps:.2f}",
            f"{self.lat_mean_ns:.1f}", str(self.lat_p50_ns), str(self.lat_p99_ns), str(self.lat_p999_ns),
            f"{self.index_util:.4f}", f"{self.media_util:.4f}", str(self.faults), str(self.sim_ns),
        ]


def latency_stats(latencies: np.ndarray) -> dict:
    if len(latencies) == 0:
        return {"mean": 0.0, "p50": 0, "p99": 0, "p999": 0}
    p50, p99, p999 = np.percentile(latencies, [50, 99, 99.9], method="inverted_cdf")
    return {"mean": float(latencies.mean()), "p50": int(p50), "p99": int(p99), "p999": int(p999)}


def log2_histogram(latencies: np.ndarray) -> dict:
    """Counts per bucket ``[2^i, 2^(i+1))`` ns, keyed by the lower edge."""
    if len(latencies) == 0:
        return {}
    buckets = np.floor(np.log2(np.maximum(latencies, 1))).astype(np.int64)
    edges, counts = np.unique(buckets, return_counts=True)
    return {int(2 ** e): int(c) for e, c in zip(edges, counts)}


def to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


def normalized(reports) -> dict:
    """``{(ssd_gen, pattern): {scheme: iops / ideal iops}}`` for groups with an Ideal run."""
    groups: dict = {}
    for r in reports:
        if not r.error:
            groups.setdefault((r.ssd_gen, r.pattern), {})[r.scheme] = r.iops
    out = {}
    for key, runs in groups.items():
        ideal = runs.get("ideal")
        if ideal:
            out[key] = {s: v / ideal for s, v in runs.items()}
    return out


def format_table(reports) -> str:
    lines = []
    header = ["scenario", "scheme", "pattern", "KIOPS", "MB/s", "mean us", "p99 us", "idx util", "media util"]
    rows = []
    for r in reports:
        if r.error:
            rows.append([r.scenario, r.scheme, r.pattern, "ERROR", r.error, "", "", "", ""])
        else:
            rows.append([
                r.scenario, r.scheme, r.pattern, f"{r.iops / 1e3:.1f}", f"{r.bw_mbps:.0f}",
                f"{r.lat_mean_ns / 1e3:.1f}", f"{r.lat_p99_ns / 1e3:.1f}",
                f"{r.index_util:.2f}", f"{r.media_util:.2f}",
            ])
    lines.extend(_align([header] + rows))
    norm = normalized(reports)
    if norm:
        schemes = [s for s in SCHEME_ORDER if any(s in v for v in norm.values())]
        lines.append("")
        lines.append("Throughput relative to Ideal")
        table = [["ssd", "pattern"] + schemes]
        for (gen, pattern) in sorted(norm, key=lambda k: (k[0], _pattern_rank(k[1]))):
            vals = norm[(gen, pattern)]
            table.append([gen, pattern] + [f"{vals[s]:.3f}" if s in vals else "-" for s in schemes])
        lines.extend(_align(table))
    return "\n".join(lines)


def _pattern_rank(p):
    return PATTERN_ORDER.index(p) if p in PATTERN_ORDER else len(PATTERN_ORDER)


def _align(rows):
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(str(c).rjust(w) if j >= 2 else str(c).ljust(w) for j, (c, w) in enumerate(zip(r, widths))).rstrip() for r in rows]
