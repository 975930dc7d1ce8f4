"""Exception hierarchy shared across the toolkit.

The CLI maps these onto distinct exit codes: ConfigError for bad
configuration or missing inputs, FormatError for malformed data files,
and everything else (including ValueError from the numeric core) onto a
generic runtime failure.
"""


class LexrelError(Exception):
    """Base class for toolkit-specific failures."""


class ConfigError(LexrelError):
    """Invalid experiment configuration or missing referenced file."""


class FormatError(LexrelError):
    """Malformed input file; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OutOfVocabularyError(LexrelError, LookupError):
    """A pair references a word missing from the embedding table."""

    def __init__(self, word: str) -> None:
        super().__init__(f"word {word!r} is not in the embedding table")
        self.word = word


class EmptySplitError(LexrelError):
    """A split discarded every pair (degenerate vocabulary partition)."""
