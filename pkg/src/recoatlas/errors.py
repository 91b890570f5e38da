class RecoAtlasError(Exception):
    """Base class for harness errors."""


class EmptyCatalogError(RecoAtlasError):
    pass


class InsufficientDescriptionError(RecoAtlasError):
    pass


class CannotSplitError(RecoAtlasError):
    pass


class EmbeddingError(RecoAtlasError):
    """Provider failure. ``retryable`` tells callers whether a retry may help."""

    def __init__(self, message: str, item_ids=(), retryable: bool = True):
        super().__init__(message)
        self.item_ids = list(item_ids)
        self.retryable = retryable


class ZeroVectorError(RecoAtlasError):
    pass


class TrainingError(RecoAtlasError):
    pass


class ConfigError(RecoAtlasError):
    pass


class PolicyError(RecoAtlasError):
    """Policy transport failed after retries; the episode is marked failed."""


class QueryFileError(RecoAtlasError):
    def __init__(self, message: str, key=None, field=None):
        super().__init__(message)
        self.key = key
        self.field = field
