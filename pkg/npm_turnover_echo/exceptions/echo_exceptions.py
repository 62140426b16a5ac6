class TurnoverEchoError(Exception):
    """
    A generic exception to be raised when loading, transforming or analysing turnover-echo data.
    """
    exit_code: int = 1


class EchoConfigError(TurnoverEchoError):
    """
    An exception to be raised when a study or generator configuration is invalid or
    refers to inputs that cannot be found.
    """
    exit_code = 2


class EchoDataError(TurnoverEchoError):
    """
    An exception to be raised when input data is unusable: missing mandatory columns,
    duplicate keys, unparseable values or factor months that are not present.
    """
    exit_code = 3


class EchoFormatError(EchoDataError):
    """
    An exception to be raised when a month string or numeric field is not in a recognized format.
    """
    pass


class EchoDomainError(EchoDataError):
    """
    An exception to be raised when an argument is passed to an operation which is outside permitted bounds.
    For example: scale 7, a month outside the dataset's range or a negative turnover.
    """
    pass


class EchoNumericalError(TurnoverEchoError):
    """
    An exception to be raised when a numerical procedure cannot proceed: a rank deficient design,
    a HAC lag at least as long as the sample or a series too short to test.
    """
    exit_code = 4


class EchoStageError(TurnoverEchoError):
    """
    An exception to be raised by the study runner when one of its stages fails.
    The stage tag and the exit code of the underlying failure are carried along.
    """

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', 1)
        super().__init__(f"STAGE {stage}: {cause}")
