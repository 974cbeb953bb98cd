"""Exception hierarchy.

Every error raised by the pipeline derives from :class:`SteerIdError` and
carries a short ``kind`` tag that the CLI prints in its one-line reason.
"""


class SteerIdError(Exception):
    kind = "error"
    exit_code = 2


class FormatError(SteerIdError):
    kind = "format"


class RowError(SteerIdError):
    kind = "row"

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InsufficientDataError(SteerIdError):
    kind = "insufficient-data"


class DegenerateSignalError(SteerIdError):
    kind = "degenerate-signal"


class EmptyInputError(SteerIdError):
    kind = "empty-input"


class BalanceError(SteerIdError):
    kind = "balance"

    def __init__(self, driver_id, message: str):
        super().__init__(f"driver {driver_id}: {message}")
        self.driver_id = driver_id


class TooShortError(SteerIdError):
    kind = "too-short"


class ConfigurationError(SteerIdError):
    kind = "configuration"


class WiringError(SteerIdError):
    kind = "wiring"


class LabelError(SteerIdError):
    kind = "label"


class CheckpointError(SteerIdError):
    kind = "checkpoint"


class FitError(SteerIdError):
    kind = "fit"


class DivergenceError(SteerIdError):
    kind = "divergence"
    exit_code = 3

    def __init__(self, step: int, message: str = "non-finite loss"):
        super().__init__(f"step {step}: {message}")
        self.step = step
