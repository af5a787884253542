"""Typer command-line interface for SignalSmith."""
