"""API layer providing stable public interface."""

from signalsmith.api.client import SignalSmithClient

__all__ = ["SignalSmithClient"]
