"""Tests for SignalSmith."""
