"""Exception hierarchy shared across the engine."""


class FeatureEngineError(Exception):
    """Base class for every error raised by featevolve."""


class ConfigError(FeatureEngineError):
    pass


class IoError(FeatureEngineError, OSError):
    pass


class DatasetError(FeatureEngineError):
    pass


class MissingDataFileError(IoError, DatasetError):
    """A dataset input file does not exist."""


class SchemaError(DatasetError):
    pass


class ParseError(DatasetError):
    """Uncoercible cell in an input file; carries the row and column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateSplitError(DatasetError):
    pass


class ProvenanceError(FeatureEngineError):
    pass


class StateError(FeatureEngineError):
    pass


class CorruptStateError(FeatureEngineError):
    pass


class EmptyKnowledgeBaseError(FeatureEngineError):
    pass


class ProviderError(FeatureEngineError):
    """Failures of the completion backend. These are fatal to a run."""


class TransportError(ProviderError):
    pass


class ScriptExhaustedError(ProviderError):
    pass


class OutputParseError(FeatureEngineError):
    """An agent reply could not be turned into the expected payload.

    ``reason`` is phrased so it can be fed back to the agent verbatim.
    """

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class DSLError(FeatureEngineError):
    pass


class DSLParseError(DSLError):
    def __init__(self, message, line, column, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(sorted(set(expected)))
        detail = f"line {line}, column {column}: {message}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class TypecheckError(DSLError):
    def __init__(self, feature, reason):
        self.feature = feature
        self.reason = reason
        super().__init__(f"feature {feature!r}: {reason}")


class ExecutionError(DSLError):
    def __init__(self, feature, reason):
        self.feature = feature
        self.reason = reason
        super().__init__(f"feature {feature!r}: {reason}")


class ExecutionTimeoutError(DSLError, TimeoutError):
    pass


class RunnerError(FeatureEngineError):
    def __init__(self, message, stderr=""):
        super().__init__(message)
        self.stderr = stderr


class OutputContractError(FeatureEngineError):
    pass


class DegenerateLabelsError(FeatureEngineError):
    pass


class LockError(FeatureEngineError):
    pass
