class SRRNError(Exception):
    exit_code = 1


class ConfigurationError(SRRNError, ValueError):
    pass


class ArchParseError(ConfigurationError):

    def __init__(self, message, position=None, token=None):
        self.position = position
        self.token = token
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class ConfigKeyError(ConfigurationError):

    def __init__(self, key, source=None):
        self.key = key
        where = f" in {source}" if source else ""
        super().__init__(f"unknown configuration key '{key}'{where}")


class UsageError(SRRNError):
    pass


class UninitializedStatisticsError(UsageError):
    pass


class DataError(SRRNError):
    exit_code = 2


class CheckpointError(DataError):
    code = 'checkpoint_error'


class NotACheckpointError(CheckpointError):
    code = 'not_a_checkpoint'


class CheckpointVersionError(CheckpointError):
    code = 'unsupported_version'


class TruncatedCheckpointError(CheckpointError):
    code = 'truncated'


class InconsistentCheckpointError(CheckpointError):
    code = 'inconsistent_checkpoint'


class DivergenceError(SRRNError):
    exit_code = 3

    def __init__(self, message, best_state=None, history=None):
        super().__init__(message)
        self.best_state = best_state
        self.history = history if history is not None else []


class NonFiniteGradientError(DivergenceError):

    def __init__(self, parameter):
        self.parameter = parameter
        super().__init__(f"non-finite gradient for parameter '{parameter}'")


class SkippedImageWarning(UserWarning):
    pass


class PathEnumerationWarning(UserWarning):
    pass
