"""Exception types shared across the package.

The CLI maps InputError to exit code 1 and ProviderError to exit code 2.
"""


class GrgError(Exception):
    """Base class for all package errors."""


class InputError(GrgError):
    """Bad user-supplied data: corpus files, topic files, configs, prompts."""


class ProviderError(GrgError):
    """A generation or embedding provider failed (transport, protocol, script)."""
