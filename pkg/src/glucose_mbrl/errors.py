class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


class SimulationError(RuntimeError):
    """The patient simulator reached a non-finite state."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class NotFittedError(ValueError):
    """A readout was used before it was fitted."""
