"""Shared exception types."""


class InsufficientDataError(Exception):
    """Not enough samples/pairs to build the requested structure."""


class IllConditionedError(Exception):
    """A linear solve failed because the system is (numerically) singular."""


class DivergedError(Exception):
    """An optimization produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(Exception):
    """An experiment configuration is malformed."""
