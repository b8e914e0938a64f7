class ConfigError(ValueError):
    """Bad configuration: thresholds, templates, missing files, malformed patterns."""


class DataError(ValueError):
    """Input data that cannot be processed (misaligned corpora, empty text, ...)."""
