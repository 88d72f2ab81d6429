"""Exception hierarchy shared by every stage of the pipeline."""


class ClusterJudgeError(Exception):
    """Base class for all errors raised by clusterjudge."""


class ArgumentError(ClusterJudgeError, ValueError):
    """An argument violates an operation's precondition."""


class ValidationError(ClusterJudgeError, ValueError):
    """Input data violates a structural invariant."""


class DuplicateIdError(ValidationError):
    pass


class CorpusParseError(ClusterJudgeError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyVocabularyError(ClusterJudgeError):
    pass


class UndefinedScoreError(ClusterJudgeError):
    """DBCV is undefined for the given labelling (fewer than two valid clusters)."""


class NoValidClusteringError(ClusterJudgeError):
    pass


class UndefinedMetricError(ClusterJudgeError):
    """A validity index needs at least two clusters."""


class DegenerateError(ClusterJudgeError):
    """A statistic is undefined for the given data (zero variance, all ties, ...)."""


class SelectionError(ClusterJudgeError):
    pass


class ProviderError(ClusterJudgeError):
    pass


class ParseError(ClusterJudgeError):
    """A provider reply did not match the expected response contract."""


class BudgetExceededError(ProviderError):
    pass


class ConfigurationError(ClusterJudgeError):
    pass


class StoreError(ClusterJudgeError):
    pass


class NotARunError(StoreError):
    pass


class StageConflictError(StoreError):
    pass


class StageOrderError(StoreError):
    pass


class RunLockedError(StoreError):
    pass


class StageFailedError(ClusterJudgeError):
    """A pipeline stage raised; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
