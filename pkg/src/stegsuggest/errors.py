"""Exception hierarchy shared by every module."""

from __future__ import annotations


class StegSuggestError(Exception):
    """Base class for all package errors."""


# codebook
class InsufficientWords(StegSuggestError):
    pass


class DuplicateRank(StegSuggestError):
    pass


class UnknownWord(StegSuggestError, KeyError):
    """The word belongs to no codebook group."""

    def __init__(self, word: str):
        super().__init__(word)
        self.word = word

    def __str__(self) -> str:
        return f"word not in codebook: {self.word!r}"


class KeyMismatch(StegSuggestError):
    pass


class MalformedFile(StegSuggestError):
    pass


class IoFailure(StegSuggestError, OSError):
    pass


# wire model
class ParseError(StegSuggestError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class RowTooShort(StegSuggestError, ValueError):
    pass


# covert scheme
class FrameInvalid(StegSuggestError, ValueError):
    pass


class FormatMismatch(StegSuggestError):
    """Expected steg positions do not decode as codebook words."""


class SsiMismatch(StegSuggestError):
    pass


class NoMatch(StegSuggestError):
    """A SYN does not carry a registration request for this key."""


class AmbiguousMatch(NoMatch):
    """Two or more original WS values hash to the carried identifier."""


class GapTimeout(StegSuggestError):
    def __init__(self, missing: list[int], partial: str):
        super().__init__(f"missing frames {missing[:8]}{'...' if len(missing) > 8 else ''}")
        self.missing = missing
        self.partial = partial
