"""Exception hierarchy shared by all presslab modules."""


class PresslabError(Exception):
    pass


class ConfigError(PresslabError):
    """Bad configuration value; ``line`` is set when it came from a file."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = ""
        if line is not None:
            where = f"line {line}: "
        if key is not None and key not in message:
            message = f"{key}: {message}"
        super().__init__(where + message)


class TimelineParseError(ConfigError):
    pass


class EmptyTimeline(PresslabError):
    pass


class InvalidTimeline(PresslabError):
    def __init__(self, result):
        self.result = result
        super().__init__(str(result))


class UnclosedRow(PresslabError):
    pass


class TONOutOfRange(PresslabError):
    pass


class RowOutOfRange(PresslabError):
    pass


class RowsTooClose(PresslabError):
    pass


class UnsupportedCombination(PresslabError):
    pass


class IncompatiblePairing(PresslabError):
    pass


class BudgetTooSmall(PresslabError):
    pass


class InsufficientMitigations(PresslabError):
    pass


class MismatchedWorkload(PresslabError):
    pass


class SchemaError(PresslabError):
    pass
