"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class IngestionError(ValueError):
    """Raw clip material cannot be turned into a valid Clip."""
