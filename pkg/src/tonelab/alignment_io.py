"""Syllable vocabularies, force-alignment TSV parsing, time/frame mapping.

Alignment files are header-less UTF-8 TSV with five columns:
``utt_id  start_s  dur_s  syllable  tone``. Tone is an explicit label
(T0..T5); syllables are tone-stripped, so any digit in a vocabulary entry
is treated as leaked tone information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    BadDuration,
    BadTime,
    BadVocabHeader,
    DuplicateSyllable,
    OverlapError,
    ParseError,
    ToneLeak,
    UnknownSyllable,
)

TONES = ("T0", "T1", "T2", "T3", "T4", "T5")

# Successive units may touch exactly. Files carry >= 3 decimal places, and
# (start, dur) pairs quantised independently can disagree with the next
# start by up to ~1e-3 s, so overlaps below this slop are not errors.
_OVERLAP_TOLERANCE_S = 1.5e-3


def tone_index(tone: str) -> int:
    try:
        return TONES.index(tone)
    except ValueError:
        raise ParseError(f"unknown tone label {tone!r}") from None


@dataclass(frozen=True)
class Vocabulary:
    """Tone-stripped syllables with consecutive integer IDs; entry 0 is "sil"."""

    syllables: tuple[str, ...]

    def __post_init__(self):
        if not self.syllables or self.syllables[0] != "sil":
            raise BadVocabHeader('vocabulary must start with "sil"')
        seen = set()
        for syl in self.syllables:
            if any(ch.isdigit() for ch in syl):
                raise ToneLeak(f"syllable {syl!r} contains a digit")
            if syl in seen:
                raise DuplicateSyllable(f"syllable {syl!r} listed twice")
            seen.add(syl)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.syllables)})

    def __len__(self) -> int:
        return len(self.syllables)

    @property
    def index(self) -> dict[str, int]:
        return self._index

    def id_of(self, syllable: str) -> int:
        try:
            return self._index[syllable]
        except KeyError:
            raise UnknownSyllable(f"syllable {syllable!r} not in vocabulary") from None


@dataclass(frozen=True)
class AlignedSyllable:
    """One force-aligned unit: an initial (tone T0) or a tone-bearing final."""

    start_s: float
    dur_s: float
    syllable_id: int
    tone: str

    @property
    def end_s(self) -> float:
        return self.start_s + self.dur_s


@dataclass(frozen=True)
class UtteranceAlignment:
    utt_id: str
    syllables: tuple[AlignedSyllable, ...]

    def tones(self) -> list[str]:
        return [syl.tone for syl in self.syllables]


def load_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        entries = [line.rstrip("\n") for line in fh if line.strip()]
    return Vocabulary(tuple(entries))


def save_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for syl in vocab.syllables:
            fh.write(syl + "\n")


def parse_alignment(path, vocab: Vocabulary) -> list[UtteranceAlignment]:
    """Parse a 5-column alignment TSV into per-utterance, time-sorted units."""
    rows: dict[str, list[AlignedSyllable]] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 columns, got {len(fields)}")
            utt_id, start_str, dur_str, syllable, tone = fields
            try:
                start_s = float(start_str)
                dur_s = float(dur_str)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad number") from None
            if start_s < 0:
                raise BadTime(f"{path}:{lineno}: negative start time {start_s}")
            if dur_s <= 0:
                raise BadDuration(f"{path}:{lineno}: non-positive duration {dur_s}")
            if tone not in TONES:
                raise ParseError(f"{path}:{lineno}: unknown tone {tone!r}")
            if syllable not in vocab.index:
                raise UnknownSyllable(
                    f"{path}:{lineno}: utterance {utt_id!r} uses unknown syllable {syllable!r}"
                )
            if utt_id not in rows:
                rows[utt_id] = []
                order.append(utt_id)
            rows[utt_id].append(
                AlignedSyllable(start_s, dur_s, vocab.id_of(syllable), tone)
            )

    utterances = []
    for utt_id in order:
        syls = sorted(rows[utt_id], key=lambda s: s.start_s)
        for prev, cur in zip(syls, syls[1:]):
            if cur.start_s < prev.end_s - _OVERLAP_TOLERANCE_S:
                raise OverlapError(
                    f"{utt_id}: unit at {cur.start_s:.3f}s overlaps previous "
                    f"(ends {prev.end_s:.3f}s)"
                )
        utterances.append(UtteranceAlignment(utt_id, tuple(syls)))
    return utterances


def write_alignment(utterances: list[UtteranceAlignment], vocab: Vocabulary, path) -> None:
    """Write utterances back to the 5-column TSV format (6-decimal seconds)."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            for syl in utt.syllables:
                fh.write(
                    f"{utt.utt_id}\t{syl.start_s:.6f}\t{syl.dur_s:.6f}\t"
                    f"{vocab.syllables[syl.syllable_id]}\t{syl.tone}\n"
                )


def seconds_to_frames(t_s: float, hop_s: float) -> int:
    """Map a timestamp to the frame index containing it: floor(t / hop)."""
    if t_s < 0:
        raise BadTime(f"negative time {t_s}")
    if hop_s <= 0:
        raise BadTime(f"non-positive hop {hop_s}")
    return int(math.floor(t_s / hop_s))


def syllable_frame_interval(start_s: float, dur_s: float, hop_s: float) -> tuple[int, int]:
    """Convert [start, start+dur) to a frame interval owning >= 1 frame."""
    f_start = seconds_to_frames(start_s, hop_s)
    f_end = max(f_start + 1, seconds_to_frames(start_s + dur_s, hop_s))
    return f_start, f_end
