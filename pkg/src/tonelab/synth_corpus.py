"""Synthetic Mandarin-tone corpus: waveforms, alignments, vocabulary.

Finals are rendered as a three-harmonic source following a per-tone pitch
template; initials are band-passed noise bursts. Adjacent finals are joined
with a raised-cosine f0 cross-fade so the glottal frequency never jumps,
reproducing the boundary blur that makes continuous tone classification
hard. Two consecutive T3 finals trigger sandhi: the first is *rendered* as
T2 while its label stays T3, so only context can recover the truth. The
"aligner" output is the true alignment with every interior boundary shifted
by uniform jitter.

All template values, widths, and amplitudes here are invented synthesis
parameters, exposed on :class:`SynthConfig`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import butter, sosfilt

from .alignment_io import (
    AlignedSyllable,
    UtteranceAlignment,
    Vocabulary,
    save_vocab,
    write_alignment,
)
from .audio_dsp import Waveform, save_wav
from .errors import InvalidConfig, IoError, NotVoiced

CONTROL_RATE_HZ = 200.0

# Pinyin-like syllable inventory (tone-stripped, no digits).
INITIALS = (
    "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h",
    "zh", "ch", "sh", "r", "z", "c", "s", "j", "q", "x",
)
FINALS = (
    "a", "o", "e", "i", "u", "v", "ai", "ei", "ao", "ou", "an", "en",
    "ang", "eng", "ong", "ia", "ie", "iao", "iu", "ian", "in", "iang",
    "ing", "ua", "uo", "uai", "ui", "uan", "un", "uang", "er",
)

DEFAULT_TEMPLATES = {
    "T1": ((0.0, 280.0), (1.0, 280.0)),
    "T2": ((0.0, 180.0), (1.0, 280.0)),
    "T3": ((0.0, 200.0), (0.4, 140.0), (1.0, 220.0)),
    "T4": ((0.0, 300.0), (1.0, 160.0)),
}

DEFAULT_TONE_PROBS = {"T1": 0.19, "T2": 0.19, "T3": 0.26, "T4": 0.22, "T5": 0.14}

# T3 longest and T5 shortest on purpose: duration is a usable tone cue.
DEFAULT_DUR_RANGES = {
    "T0": (0.045, 0.080),
    "T1": (0.10, 0.22),
    "T2": (0.10, 0.22),
    "T3": (0.16, 0.30),
    "T4": (0.10, 0.22),
    "T5": (0.06, 0.11),
}


@dataclass(frozen=True)
class SynthConfig:
    n_utterances: int = 100
    syllables_range: tuple[int, int] = (5, 10)  # finals per utterance
    sample_rate: int = 44100
    f0_templates: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    t5_decay: float = 0.88
    t5_default_start_hz: float = 200.0
    f0_clamp_hz: tuple[float, float] = (80.0, 340.0)
    coart_tau_s: float = 0.040
    sandhi_enabled: bool = True
    # Sandhi-T2 keeps T3's higher register: the whole contour sits this
    # factor above a lexical T2. Same shape, so with the speaker's f0 scale
    # unknown the difference is only visible relative to neighbours.
    sandhi_f0_lift: float = 1.08
    jitter_max_s: float = 0.020
    speaker_scale_range: tuple[float, float] = (0.8, 1.25)
    seed: int = 0
    n_speakers: int = 12
    n_test_speakers: int = 2
    tone_probs: dict = field(default_factory=lambda: dict(DEFAULT_TONE_PROBS))
    initial_prob: float = 0.40
    pause_prob: float = 0.12
    pause_range_s: tuple[float, float] = (0.06, 0.15)
    dur_ranges_s: dict = field(default_factory=lambda: dict(DEFAULT_DUR_RANGES))
    edge_silence_s: tuple[float, float] = (0.05, 0.10)
    harmonic_amps: tuple[float, ...] = (1.0, 0.35, 0.15)
    voiced_amp: float = 0.22
    t5_amp_factor: float = 0.6
    initial_amp: float = 0.12
    initial_band_hz: tuple[float, float] = (1200.0, 4500.0)
    noise_snr_db: float = 30.0

    def __post_init__(self):
        min_dur = min(lo for lo, _ in self.dur_ranges_s.values())
        if self.jitter_max_s >= min_dur / 2:
            raise InvalidConfig(
                f"jitter_max_s {self.jitter_max_s} must be < half the minimum "
                f"syllable duration {min_dur}"
            )
        if self.pause_range_s[0] <= 2 * self.jitter_max_s:
            raise InvalidConfig("pauses must be longer than twice the jitter")
        if self.syllables_range[0] < 1 or self.syllables_range[0] > self.syllables_range[1]:
            raise InvalidConfig("bad syllables_range")
        if self.n_test_speakers >= self.n_speakers:
            raise InvalidConfig("need at least one training speaker")
        if abs(sum(self.tone_probs.values()) - 1.0) > 1e-9:
            raise InvalidConfig("tone_probs must sum to 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown synth config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("syllables_range", "f0_clamp_hz", "speaker_scale_range",
                    "declination_range", "pause_range_s", "edge_silence_s",
                    "harmonic_amps", "initial_band_hz"):
            if key in d:
                d[key] = tuple(d[key])
        if "dur_ranges_s" in d:
            d["dur_ranges_s"] = {k: tuple(v) for k, v in d["dur_ranges_s"].items()}
        if "f0_templates" in d:
            d["f0_templates"] = {
                k: tuple((float(a), float(b)) for a, b in v)
                for k, v in d["f0_templates"].items()
            }
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_utterances": self.n_utterances,
            "syllables_range": list(self.syllables_range),
            "sample_rate": self.sample_rate,
            "f0_templates": {k: [list(p) for p in v] for k, v in self.f0_templates.items()},
            "t5_decay": self.t5_decay,
            "t5_default_start_hz": self.t5_default_start_hz,
            "f0_clamp_hz": list(self.f0_clamp_hz),
            "coart_tau_s": self.coart_tau_s,
            "sandhi_enabled": self.sandhi_enabled,
            "sandhi_f0_lift": self.sandhi_f0_lift,
            "jitter_max_s": self.jitter_max_s,
            "speaker_scale_range": list(self.speaker_scale_range),
            "declination_range": list(self.declination_range),
            "seed": self.seed,
            "n_speakers": self.n_speakers,
            "n_test_speakers": self.n_test_speakers,
            "tone_probs": dict(self.tone_probs),
            "initial_prob": self.initial_prob,
            "pause_prob": self.pause_prob,
            "pause_range_s": list(self.pause_range_s),
            "dur_ranges_s": {k: list(v) for k, v in self.dur_ranges_s.items()},
            "edge_silence_s": list(self.edge_silence_s),
            "harmonic_amps": list(self.harmonic_amps),
            "voiced_amp": self.voiced_amp,
            "t5_amp_factor": self.t5_amp_factor,
            "initial_amp": self.initial_amp,
            "initial_band_hz": list(self.initial_band_hz),
            "noise_snr_db": self.noise_snr_db,
            "inband_noise_snr_db": self.inband_noise_snr_db,
        }


@dataclass
class SynthUtterance:
    waveform: Waveform
    truth: UtteranceAlignment
    jittered: UtteranceAlignment
    f0_control: np.ndarray  # scaled Hz at CONTROL_RATE_HZ, NaN where unvoiced
    declination: float = 0.0  # f0 slope factor actually applied, per second
    control_hop_s: float = 1.0 / CONTROL_RATE_HZ


def _template_points(tone: str, cfg: SynthConfig, prev_end_f0: float | None):
    if tone == "T5":
        start = cfg.t5_default_start_hz if prev_end_f0 is None else prev_end_f0
        return (0.0, start), (1.0, start * cfg.t5_decay)
    try:
        return cfg.f0_templates[tone]
    except KeyError:
        raise NotVoiced(f"no pitch template for {tone!r}") from None


def _eval_template(points, rel: np.ndarray) -> np.ndarray:
    fracs = np.array([p[0] for p in points])
    values = np.array([p[1] for p in points])
    return np.interp(rel, fracs, values)


def tone_contour(
    tone: str,
    dur_s: float,
    prev_end_f0: float | None = None,
    f0_scale: float = 1.0,
    cfg: SynthConfig | None = None,
) -> np.ndarray:
    """Pitch trajectory of one final at the 200 Hz control rate.

    ``prev_end_f0`` is the previous final's template-domain end frequency
    (used only by T5, which continues the preceding syllable). The template
    is multiplied by ``f0_scale`` and clamped to the configured band.
    """
    if tone == "T0":
        raise NotVoiced("initials are noise bursts, not pitch contours")
    if dur_s <= 0:
        raise InvalidConfig(f"duration must be positive, got {dur_s}")
    cfg = cfg or SynthConfig()
    points = _template_points(tone, cfg, prev_end_f0)
    n = max(2, int(round(dur_s * CONTROL_RATE_HZ)) + 1)
    rel = np.linspace(0.0, 1.0, n)
    values = _eval_template(points, rel) * f0_scale
    lo, hi = cfg.f0_clamp_hz
    return np.clip(values, lo, hi)


def apply_sandhi(final_tones: list[str]) -> list[str]:
    """T3 immediately followed by T3 is rendered as T2 (left-to-right scan)."""
    rendered = list(final_tones)
    for i in range(len(final_tones) - 1):
        if final_tones[i] == "T3" and final_tones[i + 1] == "T3":
            rendered[i] = "T2"
    return rendered


_SOS_CACHE: dict = {}


def _bandpass_sos(band, fs):
    key = (band, fs)
    if key not in _SOS_CACHE:
        _SOS_CACHE[key] = butter(4, band, btype="bandpass", fs=fs, output="sos")
    return _SOS_CACHE[key]


def _raised_cosine(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, n)))


@dataclass
class _Unit:
    syllable: str
    tone: str  # label
    start: float
    dur: float
    rendered: str = ""  # rendering tone for finals (sandhi-aware)

    @property
    def end(self) -> float:
        return self.start + self.dur


def synth_utterance(
    tone_seq: list[tuple[str, str]],
    vocab: Vocabulary,
    cfg: SynthConfig,
    rng: np.random.Generator,
    f0_scale: float | None = None,
    utt_id: str = "utt",
) -> SynthUtterance:
    """Render one utterance from a (syllable, tone) sequence.

    ``tone_seq`` alternates optional T0 initials with tone-bearing finals.
    """
    if not tone_seq:
        raise InvalidConfig("empty tone sequence")
    for syl, tone in tone_seq:
        if (tone == "T0") != (syl in INITIALS):
            raise InvalidConfig(f"unit ({syl!r}, {tone}) mixes initial/final roles")
    if f0_scale is None:
        f0_scale = rng.uniform(*cfg.speaker_scale_range)

    # --- timeline ---------------------------------------------------------
    lead = rng.uniform(*cfg.edge_silence_s)
    trail = rng.uniform(*cfg.edge_silence_s)
    units: list[_Unit] = []
    t = lead
    for i, (syl, tone) in enumerate(tone_seq):
        group_start = tone == "T0" or (i > 0 and tone_seq[i - 1][1] != "T0") or i == 0
        if i > 0 and group_start and rng.random() < cfg.pause_prob:
            t += rng.uniform(*cfg.pause_range_s)
        dur = rng.uniform(*cfg.dur_ranges_s[tone])
        units.append(_Unit(syl, tone, t, dur))
        t += dur
    total = t + trail

    # --- sandhi (labels untouched) -----------------------------------------
    finals = [u for u in units if u.tone != "T0"]
    final_tones = [u.tone for u in finals]
    rendered = apply_sandhi(final_tones) if cfg.sandhi_enabled else list(final_tones)
    for u, r in zip(finals, rendered):
        u.rendered = r

    # --- f0 control track ---------------------------------------------------
    n_ctrl = int(np.ceil(total * CONTROL_RATE_HZ)) + 1
    ctrl_t = np.arange(n_ctrl) / CONTROL_RATE_HZ
    f0 = np.full(n_ctrl, np.nan)

    templates = []
    prev_end: float | None = None
    for u in finals:
        points = _template_points(u.rendered, cfg, prev_end)
        if u.rendered != u.tone:  # sandhi keeps the underlying high register
            points = tuple((frac, hz * cfg.sandhi_f0_lift) for frac, hz in points)
        templates.append(points)
        prev_end = float(points[-1][1])

    for u, points in zip(finals, templates):
        idx = (ctrl_t >= u.start) & (ctrl_t <= u.end)
        f0[idx] = _eval_template(points, (ctrl_t[idx] - u.start) / u.dur)

    # Raised-cosine cross-fade at directly adjacent voiced boundaries.
    tau = cfg.coart_tau_s
    for k in range(len(finals) - 1):
        left, right = finals[k], finals[k + 1]
        if abs(left.end - right.start) > 1e-9:
            continue
        b = left.end
        idx = (ctrl_t >= b - tau / 2) & (ctrl_t <= b + tau / 2)
        if not idx.any():
            continue
        w = 0.5 * (1.0 - np.cos(np.pi * ((ctrl_t[idx] - (b - tau / 2)) / tau)))
        lv = _eval_template(templates[k], (ctrl_t[idx] - left.start) / left.dur)
        rv = _eval_template(templates[k + 1], (ctrl_t[idx] - right.start) / right.dur)
        f0[idx] = (1.0 - w) * lv + w * rv

    declination = rng.uniform(*cfg.declination_range)
    lo, hi = cfg.f0_clamp_hz
    f0 = np.clip(f0 * f0_scale * (1.0 - declination * ctrl_t), lo, hi)

    # --- audio -------------------------------------------------------------
    fs = cfg.sample_rate
    n_samples = int(round(total * fs))
    audio = np.zeros(n_samples)
    ramp_n = max(2, int(0.005 * fs))

    # Voiced runs: maximal chains of directly adjacent finals.
    runs: list[list[_Unit]] = []
    for k, u in enumerate(finals):
        if runs and abs(runs[-1][-1].end - u.start) <= 1e-9:
            runs[-1].append(u)
        else:
            runs.append([u])

    voiced_ctrl = ~np.isnan(f0)
    for run in runs:
        i0 = int(round(run[0].start * fs))
        i1 = min(n_samples, int(round(run[-1].end * fs)))
        if i1 <= i0:
            continue
        t_run = np.arange(i0, i1) / fs
        in_run = voiced_ctrl & (ctrl_t >= run[0].start - 1e-9) & (ctrl_t <= run[-1].end + 1e-9)
        f0_run = np.interp(t_run, ctrl_t[in_run], f0[in_run])
        phase = 2.0 * np.pi * np.cumsum(f0_run) / fs
        sig = np.zeros_like(phase)
        for h, amp in enumerate(cfg.harmonic_amps, start=1):
            sig += amp * np.sin(h * phase)
        sig /= sum(cfg.harmonic_amps)

        # Per-syllable amplitude with edge ramps and smoothed interior steps.
        amp_points_t = [run[0].start]
        amp_points_v = [0.0]
        for u in run:
            a = cfg.voiced_amp * (cfg.t5_amp_factor if u.tone == "T5" else 1.0)
            amp_points_t += [u.start + 0.005, u.end - 0.005]
            amp_points_v += [a, a]
        amp_points_t.append(run[-1].end)
        amp_points_v.append(0.0)
        env = np.interp(t_run, amp_points_t, amp_points_v)
        audio[i0:i1] += sig * env

    sos = _bandpass_sos(cfg.initial_band_hz, fs)
    for u in units:
        if u.tone != "T0":
            continue
        i0 = int(round(u.start * fs))
        i1 = min(n_samples, int(round(u.end * fs)))
        if i1 <= i0:
            continue
        burst = sosfilt(sos, rng.standard_normal(i1 - i0))
        rms = np.sqrt(np.mean(burst**2)) or 1.0
        burst = burst / rms * cfg.initial_amp
        k = min(ramp_n, len(burst) // 2)
        if k > 1:
            burst[:k] *= _raised_cosine(k)
            burst[-k:] *= _raised_cosine(k)[::-1]
        audio[i0:i1] += burst

    speech_rms = np.sqrt(np.mean(audio**2)) or 1.0
    noise_rms = speech_rms / (10.0 ** (cfg.noise_snr_db / 20.0))
    audio += rng.standard_normal(n_samples) * noise_rms
    # Broadband noise barely reaches the narrow pitch band, so add a second
    # component confined to it; this is what actually blurs the contours.
    lo_hz, hi_hz = 50.0, min(cfg.f0_clamp_hz[1] + 10.0, fs / 2 - 1.0)
    band_sos = _bandpass_sos((lo_hz, hi_hz), fs)
    band_noise = sosfilt(band_sos, rng.standard_normal(n_samples))
    band_rms = np.sqrt(np.mean(band_noise**2)) or 1.0
    band_level = speech_rms / (10.0 ** (cfg.inband_noise_snr_db / 20.0))
    audio += band_noise / band_rms * band_level
    audio = np.clip(audio, -1.0, 1.0)

    # --- alignments ----------------------------------------------------------
    def to_alignment(starts: list[float], ends: list[float]) -> UtteranceAlignment:
        syls = tuple(
            AlignedSyllable(s, e - s, vocab.id_of(u.syllable), u.tone)
            for u, s, e in zip(units, starts, ends)
        )
        return UtteranceAlignment(utt_id, syls)

    starts = [u.start for u in units]
    ends = [u.end for u in units]
    truth = to_alignment(starts, ends)

    j_starts, j_ends = list(starts), list(ends)
    if cfg.jitter_max_s > 0:
        deltas_start = [0.0] * len(units)
        deltas_end = [0.0] * len(units)
        for k in range(len(units)):
            if k == 0:
                deltas_start[k] = rng.uniform(-cfg.jitter_max_s, cfg.jitter_max_s)
            if k + 1 < len(units) and abs(units[k].end - units[k + 1].start) <= 1e-9:
                shared = rng.uniform(-cfg.jitter_max_s, cfg.jitter_max_s)
                deltas_end[k] = shared
                deltas_start[k + 1] = shared
            else:
                deltas_end[k] = rng.uniform(-cfg.jitter_max_s, cfg.jitter_max_s)
                if k + 1 < len(units):
                    deltas_start[k + 1] = rng.uniform(-cfg.jitter_max_s, cfg.jitter_max_s)
        j_starts = [s + d for s, d in zip(starts, deltas_start)]
        j_ends = [e + d for e, d in zip(ends, deltas_end)]
    jittered = to_alignment(j_starts, j_ends)

    return SynthUtterance(
        waveform=Waveform(audio, fs),
        truth=truth,
        jittered=jittered,
        f0_control=f0,
        declination=declination,
    )


def default_vocab() -> Vocabulary:
    return Vocabulary(("sil",) + tuple(sorted(INITIALS + FINALS)))


def sample_tone_seq(cfg: SynthConfig, rng: np.random.Generator) -> list[tuple[str, str]]:
    """Draw one utterance's (syllable, tone) sequence."""
    tones = sorted(cfg.tone_probs)
    probs = np.array([cfg.tone_probs[t] for t in tones])
    probs = probs / probs.sum()
    n_finals = int(rng.integers(cfg.syllables_range[0], cfg.syllables_range[1] + 1))
    seq: list[tuple[str, str]] = []
    for _ in range(n_finals):
        if rng.random() < cfg.initial_prob:
            seq.append((INITIALS[rng.integers(len(INITIALS))], "T0"))
        tone = tones[int(rng.choice(len(tones), p=probs))]
        seq.append((FINALS[rng.integers(len(FINALS))], tone))
    return seq


def generate_corpus(cfg: SynthConfig, out_dir, rng: np.random.Generator | None = None) -> dict:
    """Write WAVs, truth/jittered alignments, vocab, and corpus metadata.

    Utterance k is generated from its own stream seeded with
    ``cfg.seed XOR k``, so generation is order-independent and reproducible.
    Speakers are an f0-scale pool split into disjoint train/test subsets;
    utterance k belongs to speaker ``k mod n_speakers``.
    """
    master = rng if rng is not None else np.random.default_rng(cfg.seed)
    try:
        wav_dir = os.path.join(out_dir, "wav")
        os.makedirs(wav_dir, exist_ok=True)

        vocab = default_vocab()
        scales = master.uniform(*cfg.speaker_scale_range, size=cfg.n_speakers)
        if len(np.unique(scales)) != cfg.n_speakers:
            scales += np.arange(cfg.n_speakers) * 1e-9
        n_train_speakers = cfg.n_speakers - cfg.n_test_speakers

        truth_all: list[UtteranceAlignment] = []
        jitter_all: list[UtteranceAlignment] = []
        utts_meta = []
        tone_counts: dict[str, int] = {}
        for k in range(cfg.n_utterances):
            utt_id = f"u{k:05d}"
            speaker = k % cfg.n_speakers
            split = "train" if speaker < n_train_speakers else "test"
            rng_k = np.random.default_rng(cfg.seed ^ k)
            seq = sample_tone_seq(cfg, rng_k)
            utt = synth_utterance(
                seq, vocab, cfg, rng_k, f0_scale=float(scales[speaker]), utt_id=utt_id
            )
            save_wav(os.path.join(wav_dir, f"{utt_id}.wav"), utt.waveform, pcm16=True)
            truth_all.append(utt.truth)
            jitter_all.append(utt.jittered)
            for _, tone in seq:
                tone_counts[tone] = tone_counts.get(tone, 0) + 1
            utts_meta.append(
                {"utt_id": utt_id, "speaker": f"spk{speaker:03d}", "split": split,
                 "n_units": len(seq)}
            )

        save_vocab(vocab, os.path.join(out_dir, "vocab.txt"))
        write_alignment(truth_all, vocab, os.path.join(out_dir, "truth.tsv"))
        write_alignment(jitter_all, vocab, os.path.join(out_dir, "jittered.tsv"))

        meta = {
            "version": 1,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "speakers": {
                f"spk{i:03d}": {
                    "f0_scale": float(scales[i]),
                    "split": "train" if i < n_train_speakers else "test",
                }
                for i in range(cfg.n_speakers)
            },
            "utterances": utts_meta,
            "train_utts": [u["utt_id"] for u in utts_meta if u["split"] == "train"],
            "test_utts": [u["utt_id"] for u in utts_meta if u["split"] == "test"],
            "tone_counts": tone_counts,
        }
        with open(os.path.join(out_dir, "corpus_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, indent=1)
        return meta
    except OSError as exc:
        raise IoError(f"cannot write corpus to {out_dir}: {exc}") from exc
