"""Cut spectrogram frames into plain, di-tone, or tri-tone syllable segments.

A tri-tone segment widens a syllable's own frame interval by half of each
neighbour's frames, which keeps the tone's pitch movement visible even when
the aligner places boundaries a little off. Halves are floor(L/2) of the
neighbour's *plain* interval; gap frames between units are absorbed into the
widened interval because they carry the transition.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio_dsp import MelSpectrogram
from .errors import BadBounds, EmptyUtterance


class SegmentMode(str, Enum):
    PLAIN = "plain"
    DITONE = "ditone"
    TRITONE = "tritone"


@dataclass(frozen=True)
class FrameInterval:
    """Half-open frame interval [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise BadBounds(f"bad interval [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


def _validate_bounds(bounds: list[FrameInterval], total_frames: int) -> None:
    if not bounds:
        raise EmptyUtterance("no syllable bounds given")
    for iv in bounds:
        if iv.end > total_frames:
            raise BadBounds(f"interval [{iv.start}, {iv.end}) exceeds {total_frames} frames")
    for prev, cur in zip(bounds, bounds[1:]):
        if cur.start < prev.end:
            raise BadBounds(
                f"intervals [{prev.start}, {prev.end}) and [{cur.start}, {cur.end}) "
                "overlap or are unordered"
            )


def segment_intervals(
    bounds: list[FrameInterval], total_frames: int, mode: SegmentMode
) -> list[FrameInterval]:
    """Widen per-syllable frame intervals according to ``mode``.

    For syllable i with plain interval [s_i, e_i) of length L_i:

    * plain:   [s_i, e_i)
    * tritone: [e_{i-1} - L_{i-1}//2, s_{i+1} + L_{i+1}//2), falling back to
      s_i / e_i at the utterance edges
    * ditone:  [s_i, s_{i+1} + L_{i+1}//2), same right rule as tritone
    """
    mode = SegmentMode(mode)
    _validate_bounds(bounds, total_frames)

    out = []
    last = len(bounds) - 1
    for i, iv in enumerate(bounds):
        a, b = iv.start, iv.end
        if mode is not SegmentMode.PLAIN:
            if i < last:
                nxt = bounds[i + 1]
                b = nxt.start + len(nxt) // 2
            if mode is SegmentMode.TRITONE and i > 0:
                prv = bounds[i - 1]
                a = prv.end - len(prv) // 2
        a = max(0, a)
        b = min(total_frames, b)
        out.append(FrameInterval(a, b))
    return out


def slice_segments(mel: MelSpectrogram, intervals: list[FrameInterval]) -> list[np.ndarray]:
    """Copy out the frame rows of each interval."""
    total = mel.n_frames
    slices = []
    for iv in intervals:
        if iv.end > total:
            raise BadBounds(f"interval [{iv.start}, {iv.end}) exceeds {total} frames")
        slices.append(mel.values[iv.start : iv.end].copy())
    return slices
