"""Exception hierarchy shared by all modules."""


class StudyforgeError(ValueError):
    """Base class for input and contract errors raised by studyforge."""


class DefinitionError(StudyforgeError):
    """Malformed study definition.

    ``line`` and ``column`` are 1-based and set for syntax errors only.
    """

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class PlaceholderError(DefinitionError):
    pass


class CaseMapError(StudyforgeError):
    pass


class TableError(StudyforgeError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RunnerError(StudyforgeError):
    pass


class LedgerError(StudyforgeError):
    pass


class PackagingError(StudyforgeError):
    pass


class ChartError(StudyforgeError):
    pass
