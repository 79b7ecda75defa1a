"""Exception hierarchy shared by the simulator, controllers and CLI."""
from __future__ import annotations


class PlatoonError(Exception):
    """Base class for every error raised by the platoon package."""


class ConfigError(PlatoonError):
    """A configuration value is missing, mistyped or infeasible.

    `path` is the dotted field path inside the scenario file (e.g. ``twin.horizon``).
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ValidationError(PlatoonError):
    """Non-finite or out-of-range input to a pure function."""


class CollisionStateError(PlatoonError):
    """Car-following law evaluated on an already-overlapping pair."""


class UnknownVehicleError(PlatoonError):
    pass


class ActionError(PlatoonError):
    """Joint action index or per-vehicle action outside the encoding range."""


class LqrError(PlatoonError):
    pass


class MaskError(PlatoonError):
    """Every action of a distribution is masked out."""


class TrainingError(PlatoonError):
    """Non-finite loss or exhausted trust-region rollbacks."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class ReplayError(PlatoonError):
    """Trace file is malformed or cannot be re-simulated."""
