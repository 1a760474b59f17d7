import pytest

from lmbsim.expander import Media, MemoryExpander
from lmbsim.fabric import CxlDevice, Expander, Fabric, Host, PcieDevice
from lmbsim.fabric_manager import FabricManager
from lmbsim.lmb_core import LmbModule

KiB = 1 << 10
MiB = 1 << 20
GiB = 1 << 30


class Rig:
    """One host with PCIe devices behind it, CXL devices, and the expander."""

    def __init__(self, n_pcie=1, n_cxl=1, capacity=GiB, block_size=256 * MiB, host_gen=4, sat_granularity="region"):
        self.fabric = Fabric()
        self.host = self.fabric.attach(Host(pcie_gen=host_gen))
        self.expander_id = self.fabric.attach(Expander())
        self.cxl = [self.fabric.attach(CxlDevice(f"cxl{i}")) for i in range(n_cxl)]
        self.pcie = [self.fabric.attach(PcieDevice(self.host, host_gen, f"pcie{i}")) for i in range(n_pcie)]
        self.fabric.seal()
        self.expander = MemoryExpander(capacity, sat_granularity=sat_granularity)
        self.expander.create_dmp(Media.DRAM, capacity)
        self.fm = FabricManager(self.expander, self.fabric.hosts(), block_size=block_size)
        self.lmb = LmbModule(self.host, self.fabric, self.fm, self.expander)
        self.lmb.init()


@pytest.fixture
def rig():
    return Rig()


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one summary line per acceptance criterion."""
    return request.config.stash.setdefault(ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
