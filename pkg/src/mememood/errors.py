"""Exception hierarchy shared across the package."""


class MememoodError(Exception):
    """Base class for all package-specific errors."""


class InputError(MememoodError):
    """A caller-supplied value violates an operation precondition."""


class ConfigurationError(MememoodError):
    """Backend/model dimensions or run settings are inconsistent."""


class DataValidationError(MememoodError):
    """A dataset record or manifest violates the schema."""


class ManifestParseError(DataValidationError):
    """A manifest line could not be parsed; carries the line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CacheIntegrityError(MememoodError):
    """An embedding cache file is corrupt; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CheckpointIntegrityError(MememoodError):
    """A checkpoint file is corrupt, truncated, or of the wrong type."""


class TrainingDivergenceError(MememoodError):
    """A loss became non-finite during training."""

    def __init__(self, epoch: int, term: str):
        super().__init__(f"non-finite loss in epoch {epoch} (term: {term})")
        self.epoch = epoch
        self.term = term
