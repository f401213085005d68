"""Segment features, context windows, and on-disk feature archives.

A context sample for syllable i holds the spectrogram slices and segment
features of syllables i-n .. i+n. Slots that fall outside the utterance get
an empty slice and an all-zero segment feature; downstream those slots
contribute exact-zero embeddings. Context windows never cross utterances.

An archive is a directory with ``manifest.json`` plus ``data.bin``, one flat
blob of little-endian float32 matrices (row-major), addressed by per-sample
byte offsets in the manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .alignment_io import (
    AlignedSyllable,
    TONES,
    UtteranceAlignment,
    Vocabulary,
    syllable_frame_interval,
)
from .audio_dsp import MelSpectrogram
from .errors import (
    AlignmentSliceMismatch,
    CorruptArchive,
    EmptyDataset,
    InvalidConfig,
    UnknownSyllable,
    VersionError,
)
from .segmenter import FrameInterval, SegmentMode, segment_intervals, slice_segments

ARCHIVE_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "data.bin"


@dataclass
class ContextSample:
    """One classification instance: (2n+1) slices + segment features + label."""

    slices: list[np.ndarray]
    seg_feats: np.ndarray  # [2n+1, 1 + vocab_size]
    label: str
    utt_id: str
    pos: int

    @property
    def context_size(self) -> int:
        return (len(self.slices) - 1) // 2

    @property
    def center_slice(self) -> np.ndarray:
        return self.slices[len(self.slices) // 2]


def segment_feature(syl: AlignedSyllable, vocab: Vocabulary) -> np.ndarray:
    """[duration, one-hot syllable ID] as float32."""
    if not (0 <= syl.syllable_id < len(vocab)):
        raise UnknownSyllable(f"syllable id {syl.syllable_id} outside vocabulary")
    feat = np.zeros(1 + len(vocab), dtype=np.float32)
    feat[0] = syl.dur_s
    feat[1 + syl.syllable_id] = 1.0
    return feat


def padding_feature(vocab_size: int) -> np.ndarray:
    """All-zero segment feature used for out-of-utterance slots."""
    return np.zeros(1 + vocab_size, dtype=np.float32)


def build_context(
    utt: UtteranceAlignment,
    slices: list[np.ndarray],
    i: int,
    n: int,
    vocab: Vocabulary,
) -> ContextSample:
    """Assemble the (2n+1)-slot window centred on syllable ``i``."""
    count = len(utt.syllables)
    if len(slices) != count:
        raise AlignmentSliceMismatch(
            f"{utt.utt_id}: {len(slices)} slices for {count} syllables"
        )
    if not (0 <= i < count):
        raise InvalidConfig(f"position {i} outside utterance of {count} syllables")
    if n < 0:
        raise InvalidConfig("context size must be >= 0")

    n_bins = slices[i].shape[1]
    window_slices = []
    feats = np.zeros((2 * n + 1, 1 + len(vocab)), dtype=np.float32)
    for slot, j in enumerate(range(i - n, i + n + 1)):
        if 0 <= j < count:
            window_slices.append(np.ascontiguousarray(slices[j], dtype=np.float32))
            feats[slot] = segment_feature(utt.syllables[j], vocab)
        else:
            window_slices.append(np.zeros((0, n_bins), dtype=np.float32))
    return ContextSample(
        slices=window_slices,
        seg_feats=feats,
        label=utt.syllables[i].tone,
        utt_id=utt.utt_id,
        pos=i,
    )


def frame_bounds(utt: UtteranceAlignment, hop_s: float, total_frames: int) -> list[FrameInterval]:
    """Per-syllable plain frame intervals, clamped to the spectrogram."""
    bounds = []
    for syl in utt.syllables:
        f_start, f_end = syllable_frame_interval(syl.start_s, syl.dur_s, hop_s)
        f_start = min(f_start, total_frames - 1)
        f_end = max(min(f_end, total_frames), f_start + 1)
        bounds.append(FrameInterval(f_start, f_end))
    return bounds


def build_utterance_samples(
    utt: UtteranceAlignment,
    mel: MelSpectrogram,
    vocab: Vocabulary,
    n: int,
    mode: SegmentMode = SegmentMode.TRITONE,
) -> list[ContextSample]:
    """All context samples of one utterance (one per aligned unit)."""
    bounds = frame_bounds(utt, mel.hop_s, mel.n_frames)
    intervals = segment_intervals(bounds, mel.n_frames, mode)
    slices = slice_segments(mel, intervals)
    return [build_context(utt, slices, i, n, vocab) for i in range(len(slices))]


def trim_context(sample: ContextSample, n: int) -> ContextSample:
    """Narrow a sample to context size ``n`` (keeps the centre slot)."""
    have = sample.context_size
    if n > have:
        raise InvalidConfig(f"cannot widen context from {have} to {n}")
    if n == have:
        return sample
    lo, hi = have - n, have + n + 1
    return ContextSample(
        slices=sample.slices[lo:hi],
        seg_feats=sample.seg_feats[lo:hi],
        label=sample.label,
        utt_id=sample.utt_id,
        pos=sample.pos,
    )


def write_archive(
    samples: list[ContextSample],
    path,
    *,
    mel_config: dict | None = None,
    segment_mode: str = SegmentMode.TRITONE.value,
) -> None:
    """Write samples to an archive directory (manifest.json + data.bin)."""
    if not samples:
        raise EmptyDataset("refusing to write an empty archive")
    context_size = samples[0].context_size
    feat_len = samples[0].seg_feats.shape[1]
    for s in samples:
        if s.context_size != context_size or s.seg_feats.shape[1] != feat_len:
            raise InvalidConfig("samples disagree on context size or feature length")
        if s.label not in TONES:
            raise InvalidConfig(f"bad tone label {s.label!r}")

    os.makedirs(path, exist_ok=True)
    records = []
    offset = 0
    with open(os.path.join(path, BLOB_NAME), "wb") as blob:
        for s in samples:
            offsets = []
            shapes = []
            for sl in s.slices:
                arr = np.ascontiguousarray(sl, dtype="<f4")
                offsets.append(offset)
                shapes.append([int(arr.shape[0]), int(arr.shape[1])])
                blob.write(arr.tobytes())
                offset += arr.nbytes
            feats = np.ascontiguousarray(s.seg_feats, dtype="<f4")
            offsets.append(offset)
            blob.write(feats.tobytes())
            offset += feats.nbytes
            records.append(
                {
                    "utt_id": s.utt_id,
                    "pos": s.pos,
                    "label": s.label,
                    "slice_shapes": shapes,
                    "feat_len": feat_len,
                    "byte_offsets": offsets,
                }
            )

    manifest = {
        "version": ARCHIVE_VERSION,
        "mel": mel_config or {},
        "vocab_size": feat_len - 1,
        "context_size": context_size,
        "segment_mode": str(segment_mode),
        "samples": records,
    }
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True)


def read_manifest(path) -> dict:
    try:
        with open(os.path.join(path, MANIFEST_NAME), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptArchive(f"cannot read manifest in {path}: {exc}") from exc
    if manifest.get("version") != ARCHIVE_VERSION:
        raise VersionError(f"unsupported archive version {manifest.get('version')!r}")
    return manifest


def read_archive(path) -> tuple[list[ContextSample], dict]:
    """Read an archive back; returns (samples, manifest).

    Matrices round-trip bit-exactly (they are stored as raw float32).
    """
    manifest = read_manifest(path)
    blob_path = os.path.join(path, BLOB_NAME)
    try:
        blob = np.fromfile(blob_path, dtype="<f4")
    except OSError as exc:
        raise CorruptArchive(f"cannot read blob in {path}: {exc}") from exc

    expected_floats = 0
    for rec in manifest["samples"]:
        for rows, cols in rec["slice_shapes"]:
            expected_floats += rows * cols
        expected_floats += len(rec["slice_shapes"]) * rec["feat_len"]
    actual_bytes = os.path.getsize(blob_path)
    if actual_bytes != expected_floats * 4:
        raise CorruptArchive(
            f"blob holds {actual_bytes} bytes, manifest expects {expected_floats * 4}"
        )

    samples = []
    for rec in manifest["samples"]:
        shapes = rec["slice_shapes"]
        offsets = rec["byte_offsets"]
        if len(offsets) != len(shapes) + 1:
            raise CorruptArchive("byte_offsets length does not match slice_shapes")
        slices = []
        for (rows, cols), off in zip(shapes, offsets[:-1]):
            if off % 4:
                raise CorruptArchive("misaligned byte offset")
            start = off // 4
            slices.append(blob[start : start + rows * cols].reshape(rows, cols).copy())
        n_slots = len(shapes)
        start = offsets[-1] // 4
        feats = blob[start : start + n_slots * rec["feat_len"]].reshape(
            n_slots, rec["feat_len"]
        ).copy()
        samples.append(
            ContextSample(
                slices=slices,
                seg_feats=feats,
                label=rec["label"],
                utt_id=rec["utt_id"],
                pos=rec["pos"],
            )
        )
    return samples, manifest
