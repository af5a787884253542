"""SignalSmith: signalized-intersection capacity under mixed connected and automated fleets."""

__version__ = "0.1.0"

from signalsmith.api.client import SignalSmithClient

__all__ = ["SignalSmithClient"]
