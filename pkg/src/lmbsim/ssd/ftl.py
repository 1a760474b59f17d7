"""L2P indexing schemes and the DFTL cached mapping table."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..fabric import RouteClass


@dataclass(frozen=True)
class Ideal:
    """Whole mapping table in onboard DRAM."""

    kind = "ideal"


@dataclass(frozen=True)
class Lru:
    name = "lru"


@dataclass(frozen=True)
class FixedRatio:
    """Each CMT lookup hits with probability ``p``."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"hit ratio {self.p} outside [0, 1]", key="scheme.dftl.hit_model")

    name = "fixed"


def parse_hit_model(text):
    """``"lru"`` or ``"fixed:<p>"`` (hit probability)."""
    if isinstance(text, (Lru, FixedRatio)):
        return text
    text = str(text).strip().lower()
    if text == "lru":
        return Lru()
    if text.startswith(("fixed:", "fixed_ratio:")):
        try:
            return FixedRatio(float(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise ConfigError(f"expected 'lru' or 'fixed:<p>', got {text!r}", key="scheme.dftl.hit_model")


def format_hit_model(model) -> str:
    return "lru" if isinstance(model, Lru) else f"fixed:{model.p:g}"


@dataclass(frozen=True)
class Dftl:
    """Flash-backed mapping table with a DRAM cache of translation pages.

    ``cmt_capacity_entries`` counts cached translation-page groups. A miss costs
    one flash read on the index engine (or on the media stage when
    ``miss_stage="media"``). ``writeback_ns`` > 0 charges a flash program when a
    dirty translation page is evicted (LRU model only).
    """

    cmt_capacity_entries: int = 1024
    entries_per_translation_page: int = 1024
    hit_model: object = field(default_factory=Lru)
    miss_stage: str = "index"
    writeback_ns: int = 0

    kind = "dftl"

    def __post_init__(self):
        if self.cmt_capacity_entries < 1:
            raise ConfigError("must be >= 1", key="scheme.dftl.cmt_entries")
        if self.entries_per_translation_page < 1:
            raise ConfigError("must be >= 1", key="scheme.dftl.entries_per_translation_page")
        if self.miss_stage not in ("index", "media"):
            raise ConfigError(f"unknown stage {self.miss_stage!r}", key="scheme.dftl.miss_stage")
        if self.writeback_ns < 0:
            raise ConfigError("must be >= 0", key="scheme.dftl.writeback_ns")
        object.__setattr__(self, "hit_model", parse_hit_model(self.hit_model))


@dataclass(frozen=True)
class Lmb:
    """Mapping table in expander memory, reached over ``route``."""

    route: RouteClass = RouteClass.CXL_P2P
    onboard_hit_ratio: float = 0.0

    def __post_init__(self):
        route = self.route
        if isinstance(route, str):
            route = {"cxl": RouteClass.CXL_P2P, "pcie": RouteClass.PCIE_VIA_HOST}.get(route) or RouteClass(route)
            object.__setattr__(self, "route", route)
        if route not in (RouteClass.CXL_P2P, RouteClass.PCIE_VIA_HOST):
            raise ConfigError(f"LMB route must be CXL P2P or PCIe via host, got {route}", key="scheme.lmb.route")
        if not 0.0 <= self.onboard_hit_ratio <= 1.0:
            raise ConfigError("must be in [0, 1]", key="scheme.lmb.onboard_hit_ratio")

    @property
    def kind(self):
        return "lmb-cxl" if self.route is RouteClass.CXL_P2P else "lmb-pcie"


SCHEME_KINDS = ("ideal", "dftl", "lmb-cxl", "lmb-pcie")


class CachedMappingTable:
    """DFTL CMT over translation pages (``lpn // entries_per_translation_page``).

    Each of an IO's index accesses reads its own part of the index, so ``part``
    keys the cached page alongside the translation page number.
    """

    def __init__(self, scheme: Dftl, rng=None):
        self.scheme = scheme
        self.capacity = scheme.cmt_capacity_entries
        self.per_page = scheme.entries_per_translation_page
        self.model = scheme.hit_model
        self.rng = rng
        self._lru: OrderedDict[tuple, bool] = OrderedDict()  # (part, tpage) -> dirty
        self.hits = 0
        self.misses = 0
        self.dirty_evictions = 0

    @property
    def miss_ratio(self) -> float:
        total = self.hits + self.misses
        return self.misses / total if total else 0.0

    def lookup(self, lpn: int, dirty: bool = False, part: int = 0) -> tuple[bool, bool]:
        """Returns ``(hit, evicted_dirty)``."""
        if isinstance(self.model, FixedRatio):
            hit = self.rng.bernoulli(self.model.p)
            if hit:
                self.hits += 1
            else:
                self.misses += 1
            return hit, False
        tpage = (part, lpn // self.per_page)
        lru = self._lru
        if tpage in lru:
            lru.move_to_end(tpage)
            if dirty:
                lru[tpage] = True
            self.hits += 1
            return True, False
        self.misses += 1
        evicted_dirty = False
        if len(lru) >= self.capacity:
            _, evicted_dirty = lru.popitem(last=False)
            if evicted_dirty:
                self.dirty_evictions += 1
        lru[tpage] = dirty
        return False, evicted_dirty
