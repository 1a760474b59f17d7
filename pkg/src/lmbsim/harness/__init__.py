"""Scenario configs, workloads, runs, sweeps and reports."""

from .config import KEYS, Scenario, load_config, make_scenario, parse_config
from .report import CSV_COLUMNS, RunReport, format_table, normalized, to_csv
from .runner import build_system, run, sweep
from .workload import ClosedLoop, WorkloadSpec, generate
