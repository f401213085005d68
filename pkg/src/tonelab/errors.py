"""Exception hierarchy shared by every tonelab module.

All domain failures raise a subclass of :class:`ToneLabError`, so callers
(and the CLI) can distinguish bad inputs from programming errors.
"""


class ToneLabError(Exception):
    """Base class for all domain errors raised by this package."""


# --- audio ---------------------------------------------------------------
class EmptyAudio(ToneLabError):
    """A waveform with zero samples was supplied."""


class AudioTooShort(ToneLabError):
    """The waveform is shorter than one analysis window."""


class UnsupportedAudio(ToneLabError):
    """The audio file is not mono PCM16 / float32 WAV."""


class InvalidConfig(ToneLabError):
    """A configuration value violates its documented constraints."""


# --- alignments & vocabulary ---------------------------------------------
class DuplicateSyllable(ToneLabError):
    """The vocabulary file lists the same syllable twice."""


class ToneLeak(ToneLabError):
    """A vocabulary entry contains a digit (tone information)."""


class BadVocabHeader(ToneLabError):
    """The first vocabulary entry is not "sil"."""


class UnknownSyllable(ToneLabError):
    """A syllable is missing from the vocabulary."""


class OverlapError(ToneLabError):
    """Two aligned units of one utterance overlap in time."""


class BadDuration(ToneLabError):
    """An aligned unit has a non-positive duration."""


class BadTime(ToneLabError):
    """A negative timestamp was passed to a time/frame conversion."""


class ParseError(ToneLabError):
    """A malformed row or field in an alignment/vocabulary file."""


# --- segmentation ---------------------------------------------------------
class EmptyUtterance(ToneLabError):
    """An utterance with no syllables cannot be segmented."""


class BadBounds(ToneLabError):
    """Frame intervals are unordered, overlapping, or out of range."""


# --- features & archives ---------------------------------------------------
class AlignmentSliceMismatch(ToneLabError):
    """Slice count does not match the utterance's syllable count."""


class CorruptArchive(ToneLabError):
    """Archive payload does not match its manifest."""


class VersionError(ToneLabError):
    """Archive/checkpoint manifest has an unsupported version."""


# --- network ---------------------------------------------------------------
class ShapeError(ToneLabError):
    """A batch is inconsistent with the model's wiring."""


class NumericError(ToneLabError):
    """A non-finite activation was produced."""


class BadLabel(ToneLabError):
    """A tone label index is outside [0, 6)."""


class EmptySegment(ToneLabError):
    """Statistics pooling was asked to pool zero valid frames."""


# --- training ----------------------------------------------------------------
class EmptyDataset(ToneLabError):
    """No samples were supplied where at least one is required."""


class DivergenceError(ToneLabError):
    """Training produced a non-finite loss.

    Carries the partial ``history`` recorded up to the failing step.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


# --- evaluation ---------------------------------------------------------------
class ConfigMismatch(ToneLabError):
    """Model and sample set disagree on variant or context size."""


class BadPattern(ToneLabError):
    """An empty or malformed tone pattern."""


# --- synthesis ------------------------------------------------------------------
class NotVoiced(ToneLabError):
    """A pitch contour was requested for an unvoiced unit (T0)."""


class IoError(ToneLabError):
    """Corpus files could not be written or read."""
