"""Exception classes shared across the engine."""


class EmobranchError(Exception):
    """Base class for all engine errors."""


class InvalidInput(EmobranchError):
    """Input data violates an operation's preconditions."""


class InvalidSpec(EmobranchError):
    """A framing/analysis specification is unusable (e.g. non-integer shift)."""


class InvalidConfig(EmobranchError):
    """A model or training configuration violates its invariants."""


class InvalidLabel(EmobranchError):
    """A raw emotion label is outside the known inventory."""


class InvalidAlignment(EmobranchError):
    """Word alignments overlap or are otherwise inconsistent."""


class ShapeError(EmobranchError):
    """Tensor/matrix shapes do not agree."""


class FormatError(EmobranchError):
    """An on-disk file does not match its documented format."""


class MissingData(EmobranchError):
    """A requested experiment condition needs data that was not supplied."""
