"""Shared exception types, grouped by the CLI exit code they map to."""


class LegalRagError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(LegalRagError):
    """Invalid or missing configuration (CLI exit code 2)."""


class DataError(LegalRagError):
    """Malformed or inconsistent data files (CLI exit code 3)."""


class ProviderError(LegalRagError):
    """Embedding / chat / classifier provider failure (CLI exit code 4)."""
