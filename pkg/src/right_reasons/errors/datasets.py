"""Custom exceptions for dataset generators and loaders."""


class DatasetError(Exception):
    """Base class for all dataset errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class DatasetShapeError(DatasetError):
    """Error raised when the arrays of a dataset disagree in shape or encoding."""


class IdxFormatError(DatasetError):
    """Error raised when an IDX file has an unexpected magic number."""


class IdxTruncatedError(IdxFormatError):
    """Error raised when an IDX file ends before its header says it should."""

    def __init__(self, path: str, offset: int, expected: int):
        self.path = path
        self.offset = offset
        self.expected = expected
        super().__init__(f"IDX file {path} truncated at byte offset {offset} (expected {expected} bytes)")


class IdxCountMismatchError(DatasetError):
    """Error raised when image and label files hold a different number of items."""


class SourceFormatError(DatasetError):
    """Error raised when a tabular source file has a malformed row."""


class NewsgroupsCorpusError(DatasetError):
    """Error raised when the newsgroups directory is missing a class or documents."""


class SplitError(DatasetError):
    """Error raised when a stratified split leaves a class without examples on one side."""


class DatasetStorageError(DatasetError):
    """Error raised when a stored dataset file cannot be parsed."""
