"""Exceptions raised by the certification library.

Everything derives from ``ValueError`` so callers that only care about
"bad input" can keep catching that.
"""


class DomainError(ValueError):
    """Invalid group point, window, resolution or grid pairing."""


class KernelError(ValueError):
    """Kernel fails a structural requirement (diagonal, admissibility)."""


class CoverError(ValueError):
    """A family cannot produce the requested cover."""

    def __init__(self, message: str, uncovered=None):
        super().__init__(message)
        self.uncovered = [] if uncovered is None else list(uncovered)


class GateFailure(ValueError):
    """A certification gate rejected its input."""

    def __init__(self, gate: str, measured: float, limit: float, detail: str = ""):
        self.gate = gate
        self.measured = float(measured)
        self.limit = float(limit)
        message = f"gate '{gate}' failed: measured {self.measured:.6g} vs limit {self.limit:.6g}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ConfigError(ValueError):
    """Run configuration could not be parsed or validated."""


class StageMissing(RuntimeError):
    """A pipeline stage needs an artifact that an earlier stage did not write."""

    def __init__(self, stage: str, path: str, detail: str = ""):
        self.stage = stage
        self.path = path
        super().__init__(f"missing upstream stage '{stage}': {detail or f'expected {path}'}")
