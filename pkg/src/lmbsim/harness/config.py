"""Scenario configuration: a YAML file of dotted keys with documented defaults.

Keys may be nested (``scheme: {kind: dftl}``) or dotted (``scheme.kind: dftl``).
A file may add ``sweep:`` (list of override maps) and ``matrix:`` (key -> list
of values, expanded as a cartesian product) to describe several scenarios.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..fabric import LatencyModel, RouteClass
from ..ssd.ftl import SCHEME_KINDS, Dftl, Ideal, Lmb, format_hit_model, parse_hit_model
from ..ssd.spec import PRESETS, SsdSpec
from .workload import WorkloadSpec


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _str(v):
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _opt(parser):
    def parse(v):
        return None if v is None else parser(v)
    return parse


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError(f"expected true/false, got {v!r}")
    return v


def _hit_model(v):
    return format_hit_model(parse_hit_model(v))


# dotted key -> (default, parser)
KEYS = {
    "experiment.name": ("scenario", _str),
    "experiment.seed": (1, _int),
    "ssd.gen": ("gen4", _str),
    "ssd.capacity_tb": (7.68, _float),
    "scheme.kind": ("ideal", _str),
    "scheme.dftl.cmt_entries": (1024, _int),
    "scheme.dftl.hit_model": ("lru", _hit_model),
    "scheme.dftl.entries_per_translation_page": (1024, _int),
    "scheme.dftl.miss_stage": ("index", _str),
    "scheme.dftl.writeback_ns": (0, _int),
    "scheme.lmb.route": ("cxl", _str),
    "scheme.lmb.onboard_hit_ratio": (0.0, _float),
    "scheme.lmb.functional_index": (False, _bool),
    "workload.pattern": ("randread", _str),
    "workload.qd": (64, _int),
    "workload.io_size": (4096, _int),
    "workload.total_ios": (2_000_000, _int),
    "workload.addr_space": (None, _opt(_int)),
    "calibration.file": (None, _opt(_str)),
    "fm.block_size_mb": (256, _int),
    "expander.size_gb": (64, _int),
}
for _name in LatencyModel.field_names():
    KEYS[f"latency.{_name}"] = (getattr(LatencyModel(), _name), _int)
SSD_FIELDS = [f for f in SsdSpec.field_names() if f != "capacity_tb"]
for _name in SSD_FIELDS:
    KEYS[f"ssd.{_name}"] = (None, _opt(_int if _name in ("pcie_gen", "rand_read_lat_ns", "rand_write_lat_ns") else _float))

ROUTES = {"cxl": RouteClass.CXL_P2P, "pcie": RouteClass.PCIE_VIA_HOST}


@dataclass(frozen=True)
class Scenario:
    """Fully resolved scenario; ``values`` holds every effective key."""

    values: tuple

    @property
    def v(self) -> dict:
        return dict(self.values)

    def __getitem__(self, key):
        return self.v[key]

    @property
    def name(self):
        return self["experiment.name"]

    @property
    def seed(self):
        return self["experiment.seed"]

    @property
    def ssd_gen(self):
        return self["ssd.gen"]

    @property
    def scheme_kind(self):
        return self["scheme.kind"]

    def ssd_spec(self) -> SsdSpec:
        v = self.v
        fields = {f: v[f"ssd.{f}"] for f in SSD_FIELDS}
        return SsdSpec(capacity_tb=v["ssd.capacity_tb"], **fields)

    def latency(self) -> LatencyModel:
        v = self.v
        return LatencyModel(**{f: v[f"latency.{f}"] for f in LatencyModel.field_names()})

    def scheme(self):
        v = self.v
        kind = v["scheme.kind"]
        if kind == "ideal":
            return Ideal()
        if kind == "dftl":
            return Dftl(
                cmt_capacity_entries=v["scheme.dftl.cmt_entries"],
                entries_per_translation_page=v["scheme.dftl.entries_per_translation_page"],
                hit_model=v["scheme.dftl.hit_model"],
                miss_stage=v["scheme.dftl.miss_stage"],
                writeback_ns=v["scheme.dftl.writeback_ns"],
            )
        return Lmb(route=ROUTES[v["scheme.lmb.route"]], onboard_hit_ratio=v["scheme.lmb.onboard_hit_ratio"])

    def workload(self) -> WorkloadSpec:
        v = self.v
        return WorkloadSpec(
            pattern=v["workload.pattern"],
            qd=v["workload.qd"],
            io_size=v["workload.io_size"],
            total_ios=v["workload.total_ios"],
            addr_space=v["workload.addr_space"],
            seed=v["experiment.seed"],
        )

    def to_nested(self) -> dict:
        out: dict = {}
        for key, value in self.values:
            node = out
            *parents, leaf = key.split(".")
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = value
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_nested(), sort_keys=False)

    def replace(self, **dotted) -> "Scenario":
        v = self.v
        v.update(dotted)
        return make_scenario(v)


def make_scenario(overrides: dict, lines: dict | None = None) -> Scenario:
    """Resolve ``overrides`` (dotted keys) against the defaults and validate."""
    lines = lines or {}
    values = {k: d for k, (d, _) in KEYS.items()}
    for key, raw in overrides.items():
        if key not in KEYS:
            raise ConfigError("unrecognized configuration key", key=key, line=lines.get(key))
        try:
            values[key] = KEYS[key][1](raw)
        except ValueError as exc:
            raise ConfigError(str(exc), key=key, line=lines.get(key)) from None

    def fail(key, msg):
        raise ConfigError(msg, key=key, line=lines.get(key))

    gen = values["ssd.gen"]
    if gen in PRESETS:
        preset = PRESETS[gen]
        for f in SSD_FIELDS:
            if values[f"ssd.{f}"] is None:
                values[f"ssd.{f}"] = getattr(preset, f)
    elif gen == "custom":
        for f in SSD_FIELDS:
            if values[f"ssd.{f}"] is None:
                fail(f"ssd.{f}", "required when ssd.gen is custom")
    else:
        fail("ssd.gen", f"expected gen4, gen5 or custom, got {gen!r}")

    kind = values["scheme.kind"]
    route = values["scheme.lmb.route"]
    if route not in ROUTES:
        fail("scheme.lmb.route", f"expected cxl or pcie, got {route!r}")
    if kind == "lmb":
        kind = f"lmb-{route}"
    elif kind in ("lmb-cxl", "lmb-pcie"):
        implied = kind.split("-")[1]
        if "scheme.lmb.route" in overrides and route != implied:
            fail("scheme.lmb.route", f"conflicts with scheme.kind {kind}")
        route = implied
    elif kind not in SCHEME_KINDS:
        fail("scheme.kind", f"expected one of {', '.join(SCHEME_KINDS)}, got {kind!r}")
    values["scheme.kind"] = kind
    values["scheme.lmb.route"] = route

    for key, check in (("fm.block_size_mb", 1), ("expander.size_gb", 1), ("experiment.seed", 0)):
        if values[key] < check:
            fail(key, f"must be >= {check}")

    scenario = Scenario(tuple(values.items()))
    # build every object once so domain errors surface with their key
    for build in (scenario.ssd_spec, scenario.latency, scenario.scheme, scenario.workload):
        try:
            build()
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], key=exc.key, line=lines.get(exc.key)) from None
    return scenario


def _flatten(data, prefix="", out=None):
    out = {} if out is None else out
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            _flatten(value, full + ".", out)
        else:
            out[full] = value
    return out


def _line_map(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            full = f"{prefix}{key_node.value}"
            if isinstance(value_node, yaml.MappingNode):
                _line_map(value_node, full + ".", out)
            else:
                out[full] = key_node.start_mark.line + 1
    return out


def parse_config(text: str, overrides: dict | None = None) -> list[Scenario]:
    """Parse config text into one scenario, or several if it has sweep/matrix."""
    try:
        data = yaml.safe_load(text) or {}
        lines = _line_map(yaml.compose(text))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", key="<file>", line=mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", key="<file>")
    sweep = data.pop("sweep", None)
    matrix = data.pop("matrix", None)
    base = _flatten(data)
    base.update(overrides or {})

    variants: list[dict] = [{}]
    if matrix:
        if not isinstance(matrix, dict):
            raise ConfigError("matrix must map keys to value lists", key="matrix", line=lines.get("matrix"))
        keys = list(_flatten(matrix))
        flat = _flatten(matrix)
        for key in keys:
            if not isinstance(flat[key], list):
                raise ConfigError("matrix values must be lists", key=f"matrix.{key}", line=lines.get(f"matrix.{key}"))
        variants = [dict(zip(keys, combo)) for combo in itertools.product(*(flat[k] for k in keys))]
    if sweep:
        if not isinstance(sweep, list):
            raise ConfigError("sweep must be a list of override maps", key="sweep", line=lines.get("sweep"))
        variants = [{**v, **_flatten(s)} for v in variants for s in sweep]

    scenarios = []
    base_name = base.get("experiment.name", KEYS["experiment.name"][0])
    for variant in variants:
        merged = {**base, **variant}
        merged.update(overrides or {})
        if variant and "experiment.name" not in variant:
            merged["experiment.name"] = "-".join([str(base_name)] + [str(variant[k]) for k in variant])
        scenarios.append(make_scenario(merged, lines))
    return scenarios


def load_config(path, overrides: dict | None = None) -> list[Scenario]:
    return parse_config(Path(path).read_text(), overrides)


def profile_text(name: str) -> str:
    try:
        return resources.files("lmbsim.data").joinpath("profiles", f"{name}.yaml").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown profile {name!r}", key="--profile") from None


def resolve_calibration_path(value: str, gen: str) -> Path:
    """``builtin:<name>`` refers to ``data/calibration/<gen>_<name>.yaml``."""
    if value.startswith("builtin:"):
        name = value.split(":", 1)[1]
        return Path(str(resources.files("lmbsim.data").joinpath("calibration", f"{gen}_{name}.yaml")))
    return Path(value.format(gen=gen))
