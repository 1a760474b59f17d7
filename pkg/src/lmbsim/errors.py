"""Exception hierarchy shared by all simulator modules."""


class LmbSimError(Exception):
    pass


class ConfigError(LmbSimError, ValueError):
    """Invalid simulation or scenario configuration.

    ``key`` and ``line`` locate the offending config entry when known.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"{key}"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)


class SimulationError(LmbSimError, RuntimeError):
    """An unrecoverable model error raised during event dispatch."""

    def __init__(self, message, time_ns=None, kind=None):
        self.time_ns = time_ns
        self.kind = kind
        super().__init__(f"{message} [t={time_ns}ns, event={kind}]")


class RoutingError(LmbSimError):
    pass


class ProvisioningError(LmbSimError):
    pass


class OutOfCapacity(LmbSimError):
    pass


class ProtocolError(LmbSimError):
    pass


class CalibrationError(LmbSimError, ValueError):
    pass


class ModelFault(LmbSimError):
    """Base for faults a device can provoke through a memory access."""


class DecodeFault(ModelFault):
    """No decoder window covers the HPA."""


class AccessFault(ModelFault):
    """Requester SPID lacks SAT coverage."""


class IommuFault(ModelFault):
    """PCIe bus address not mapped for the device."""


class LmbArgumentError(LmbSimError, ValueError):
    pass


class LmbStateError(LmbSimError, RuntimeError):
    """API used before the kernel module was initialized."""


class LmbPermissionError(LmbSimError, PermissionError):
    pass


class MmidLookupError(LmbSimError, LookupError):
    pass
