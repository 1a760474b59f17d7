"""CXL topology: hosts, PBR switch, CXL/PCIe devices, the expander, and route latencies."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

from .errors import ConfigError, RoutingError


class RouteClass(enum.Enum):
    ONBOARD = "onboard"
    CXL_P2P = "cxl_p2p"
    PCIE_VIA_HOST = "pcie_via_host"
    HOST_DIRECT = "host_direct"


# Node handles compare by identity so the same handle cannot be attached twice.
@dataclass(eq=False)
class Host:
    pcie_gen: int = 5


@dataclass(eq=False)
class CxlDevice:
    name: str = ""


@dataclass(eq=False)
class PcieDevice:
    host: int  # PbrId of the host the device sits behind
    pcie_gen: int = 4
    name: str = ""


@dataclass(eq=False)
class Switch:
    pass


@dataclass(eq=False)
class Expander:
    pass


class LocalId(NamedTuple):
    """Host-local id of a PCIe device; PCIe devices hold no PbrId."""

    host: int
    index: int


@dataclass(frozen=True)
class LatencyModel:
    """Per-hop and per-route latencies in nanoseconds.

    ``overrides`` maps a RouteClass to a total that replaces the composed value.
    """

    cxl_port_ns: int = 25
    switch_hdm_ns: int = 70
    pcie_host_ns: int = 780
    lmb_cxl_extra_ns: int = 190
    lmb_pcie_extra_gen4_ns: int = 880
    lmb_pcie_extra_gen5_ns: int = 1190
    flash_read_ns: int = 25000
    overrides: dict = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            if f.name == "overrides":
                continue
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"must be a non-negative integer, got {value!r}", key=f"latency.{f.name}")
        for route, value in self.overrides.items():
            if not isinstance(route, RouteClass):
                raise ConfigError(f"unknown route class {route!r}", key="latency.overrides")
            if not isinstance(value, int) or value < 0:
                raise ConfigError(f"must be a non-negative integer, got {value!r}", key=f"latency.overrides.{route.value}")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "overrides"]

    def with_overrides(self, **values) -> "LatencyModel":
        unknown = set(values) - set(self.field_names())
        if unknown:
            raise ConfigError(f"unknown latency field(s) {sorted(unknown)}", key="latency")
        return replace(self, **values)


def access_latency(route: RouteClass, pcie_gen: int, model: LatencyModel) -> int:
    """Latency charged for one LMB index access along ``route``."""
    if route in model.overrides:
        return model.overrides[route]
    if route is RouteClass.ONBOARD:
        return 0
    if route is RouteClass.CXL_P2P:
        return model.lmb_cxl_extra_ns
    if route is RouteClass.PCIE_VIA_HOST:
        if pcie_gen == 4:
            return model.lmb_pcie_extra_gen4_ns
        if pcie_gen == 5:
            return model.lmb_pcie_extra_gen5_ns
        raise ConfigError(f"unsupported PCIe generation {pcie_gen}", key="pcie_gen")
    if route is RouteClass.HOST_DIRECT:
        return 2 * model.cxl_port_ns + model.switch_hdm_ns
    raise RoutingError(f"unknown route class {route!r}")


class Fabric:
    """Single-switch, single-expander CXL fabric.

    CXL-attached nodes (hosts, CXL devices, the expander) get sequential PbrIds
    starting at 1. PCIe devices get a :class:`LocalId` under their host.
    """

    def __init__(self):
        self.switch = Switch()
        self._nodes: dict[object, object] = {}  # id -> handle
        self._ids: dict[int, object] = {}  # id(handle) -> assigned id
        self._next_pbr = 1
        self._pcie_count: dict[int, int] = {}
        self.expander_id: int | None = None
        self.sealed = False

    def attach(self, node):
        if self.sealed:
            raise ConfigError("fabric is sealed", key="fabric")
        if id(node) in self._ids:
            raise ConfigError(f"{type(node).__name__} handle already attached", key="fabric")
        if isinstance(node, Switch):
            raise ConfigError("the fabric already owns its switch", key="fabric")
        if isinstance(node, PcieDevice):
            host = self._nodes.get(node.host)
            if not isinstance(host, Host):
                raise ConfigError(f"PCIe device behind unknown host {node.host}", key="fabric")
            if node.pcie_gen not in (4, 5):
                raise ConfigError(f"unsupported PCIe generation {node.pcie_gen}", key="pcie_gen")
            index = self._pcie_count.get(node.host, 0)
            self._pcie_count[node.host] = index + 1
            node_id = LocalId(node.host, index)
        elif isinstance(node, (Host, CxlDevice, Expander)):
            if isinstance(node, Expander) and self.expander_id is not None:
                raise ConfigError("fabric already has an expander", key="fabric")
            if isinstance(node, Host) and node.pcie_gen not in (4, 5):
                raise ConfigError(f"unsupported PCIe generation {node.pcie_gen}", key="pcie_gen")
            if self._next_pbr > 0xFFFF:
                raise ConfigError("PbrId space exhausted", key="fabric")
            node_id = self._next_pbr
            self._next_pbr += 1
            if isinstance(node, Expander):
                self.expander_id = node_id
        else:
            raise ConfigError(f"cannot attach {node!r}", key="fabric")
        self._nodes[node_id] = node
        self._ids[id(node)] = node_id
        return node_id

    def seal(self) -> None:
        if self.expander_id is None:
            raise ConfigError("fabric has no expander", key="fabric")
        self.sealed = True

    def node(self, node_id):
        try:
            return self._nodes[node_id]
        except KeyError:
            raise RoutingError(f"node {node_id!r} is not attached") from None

    def hosts(self) -> list[int]:
        return [i for i, n in self._nodes.items() if isinstance(n, Host)]

    def is_pcie(self, node_id) -> bool:
        return isinstance(self._nodes.get(node_id), PcieDevice)

    def is_cxl_device(self, node_id) -> bool:
        return isinstance(self._nodes.get(node_id), CxlDevice)

    def route(self, requester, target=None) -> RouteClass:
        if target is None:
            target = self.expander_id
        if target is None or target != self.expander_id:
            raise RoutingError(f"target {target!r} is not the attached expander")
        node = self.node(requester)
        if isinstance(node, CxlDevice):
            return RouteClass.CXL_P2P
        if isinstance(node, PcieDevice):
            return RouteClass.PCIE_VIA_HOST
        if isinstance(node, Host):
            return RouteClass.HOST_DIRECT
        raise RoutingError(f"{type(node).__name__} {requester!r} cannot issue memory requests")

    def pcie_gen(self, node_id) -> int:
        node = self.node(node_id)
        return getattr(node, "pcie_gen", 5)
