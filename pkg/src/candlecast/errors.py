"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
anything else -> 3.
"""


class ContractError(ValueError):
    """A function was called outside its documented preconditions."""


class ConfigError(ValueError):
    """Invalid experiment configuration, detected before any work is done."""


class DataError(Exception):
    """Input data is missing, malformed or insufficient."""


class CsvFormatError(DataError):
    pass


class CsvRowError(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CheckpointError(DataError):
    """Checkpoint file is truncated, has the wrong magic, or does not fit the model."""


class TrainingDiverged(RuntimeError):
    def __init__(self, layer: str, message: str = ""):
        super().__init__(f"non-finite values first produced by layer {layer!r}" + (f": {message}" if message else ""))
        self.layer = layer
