"""Exception hierarchy."""


class GpuMuxError(Exception):
    pass


class CapacityExceeded(GpuMuxError):
    def __init__(self, tier, needed=None, free=None):
        self.tier = tier
        msg = f"capacity exceeded on {getattr(tier, 'label', tier)}"
        if needed is not None:
            msg += f" (needed {needed}, free {free})"
        super().__init__(msg)


class UnknownChunk(GpuMuxError):
    pass


class UnknownApp(GpuMuxError):
    pass


class ChunkBusy(GpuMuxError):
    pass


class NotInFlight(GpuMuxError):
    pass


class AppTooLarge(GpuMuxError):
    pass


class InsufficientEvictable(GpuMuxError):
    pass


class InfeasiblePlan(GpuMuxError):
    pass


class Deadlock(GpuMuxError):
    """Raised when a plan stalls with no transfer in flight. Always a bug."""


class InvalidSpec(GpuMuxError):
    pass


class InvariantViolation(GpuMuxError):
    pass


class ScenarioError(GpuMuxError):
    """Base for problems with a scenario file; maps to exit code 1."""


class ParseError(ScenarioError):
    def __init__(self, msg, line=None, column=None):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(msg + where)


class ValidationError(ScenarioError):
    def __init__(self, field, msg):
        self.field = field
        super().__init__(f"{field}: {msg}")


class InvalidScenario(ScenarioError):
    pass
