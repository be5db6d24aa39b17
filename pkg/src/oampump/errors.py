"""Exception types shared across the package."""


class OAMPumpError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"


class ConfigError(OAMPumpError, ValueError):
    kind = "ConfigError"


class GapClosed(OAMPumpError, ArithmeticError):
    """The band gap closes (or nearly closes) somewhere on the pump loop."""

    kind = "GapClosed"


class EdgeLeak(OAMPumpError, RuntimeError):
    """Population reached the edge of the truncated OAM chain."""

    kind = "EdgeLeak"


class StepFailure(OAMPumpError, RuntimeError):
    kind = "StepFailure"


class Unstable(OAMPumpError, ValueError):
    """Cavity geometry outside the stability region."""

    kind = "Unstable"


class Unrepresentable(OAMPumpError, ValueError):
    kind = "Unrepresentable"
