"""Waveform handling: WAV I/O, polyphase resampling, log-Mel spectrograms.

The spectrogram front end is tuned for pitch patterns: a narrow [50, 350] Hz
band covered by many overlapping triangular Mel filters. At that band width
the filters are only a few Hz wide, so the STFT is zero-padded to a large FFT
size (default 8192) to give the filterbank enough frequency resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import (
    AudioTooShort,
    EmptyAudio,
    InvalidConfig,
    UnsupportedAudio,
)

# Polyphase anti-aliasing filter design (fixed for determinism).
RESAMPLE_TAPS_PER_PHASE = 32
RESAMPLE_KAISER_BETA = 8.0


@dataclass(frozen=True)
class Waveform:
    """Mono audio: float samples in [-1, 1] at an integer sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise InvalidConfig(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise UnsupportedAudio(f"expected mono audio, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise InvalidConfig("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    """Log-Mel front-end parameters.

    ``n_fft`` is the zero-padded FFT size; it must be large enough that every
    triangular filter covers at least one FFT bin, otherwise the filterbank
    degenerates (see :func:`mel_filterbank`).
    """

    n_filters: int = 64
    fmin_hz: float = 50.0
    fmax_hz: float = 350.0
    win_ms: float = 13.0
    hop_ms: float = 10.0
    sample_rate: int = 16000
    log_floor: float = 1e-10
    n_fft: int = 8192

    def __post_init__(self):
        if self.n_filters < 1:
            raise InvalidConfig("n_filters must be >= 1")
        if not (0 < self.fmin_hz < self.fmax_hz):
            raise InvalidConfig("need 0 < fmin_hz < fmax_hz")
        if self.fmax_hz > self.sample_rate / 2:
            raise InvalidConfig(
                f"fmax_hz {self.fmax_hz} exceeds Nyquist {self.sample_rate / 2}"
            )
        if self.win_ms <= 0 or self.hop_ms <= 0:
            raise InvalidConfig("window and hop must be positive")
        if self.log_floor <= 0:
            raise InvalidConfig("log_floor must be positive")
        if self.n_fft < self.win_samples:
            raise InvalidConfig("n_fft must be >= the window length in samples")

    @property
    def win_samples(self) -> int:
        return round(self.win_ms * self.sample_rate / 1000.0)

    @property
    def hop_samples(self) -> int:
        return round(self.hop_ms * self.sample_rate / 1000.0)

    def to_dict(self) -> dict:
        return {
            "n_filters": self.n_filters,
            "fmin_hz": self.fmin_hz,
            "fmax_hz": self.fmax_hz,
            "win_ms": self.win_ms,
            "hop_ms": self.hop_ms,
            "sample_rate": self.sample_rate,
            "log_floor": self.log_floor,
            "n_fft": self.n_fft,
        }


@dataclass(frozen=True)
class MelSpectrogram:
    """Frames x n_filters matrix of log Mel energies."""

    values: np.ndarray
    hop_s: float
    win_s: float

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def hz_to_mel(f_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Build the triangular filterbank.

    Returns ``(weights, centers_hz)`` where ``weights`` is
    ``[n_filters, n_fft // 2 + 1]``. Triangles are linear on the Mel scale
    and each row is normalised to unit weight sum, so a filter output is a
    weighted average of power around its center frequency. Raises
    :class:`InvalidConfig` when the FFT resolution is too coarse for a
    filter to cover any bin.
    """
    n_bins = cfg.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (cfg.sample_rate / cfg.n_fft)
    bin_mel = hz_to_mel(bin_hz)

    mel_edges = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_filters + 2)
    centers_hz = mel_to_hz(mel_edges[1:-1])

    lo = mel_edges[:-2, None]
    center = mel_edges[1:-1, None]
    hi = mel_edges[2:, None]
    rising = (bin_mel[None, :] - lo) / (center - lo)
    falling = (hi - bin_mel[None, :]) / (hi - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    sums = weights.sum(axis=1)
    if np.any(sums == 0.0):
        raise InvalidConfig(
            "mel filterbank has empty filters; increase n_fft or widen the band"
        )
    weights /= sums[:, None]
    return weights, centers_hz


def resample(wave: Waveform, target_rate: int) -> Waveform:
    """Resample with a Kaiser-windowed-sinc polyphase filter.

    The low-pass cutoff sits at the smaller of the two Nyquist frequencies,
    which suppresses content that would alias when downsampling.
    """
    if len(wave) == 0:
        raise EmptyAudio("cannot resample an empty waveform")
    if target_rate <= 0:
        raise InvalidConfig(f"target_rate must be positive, got {target_rate}")
    if target_rate == wave.sample_rate:
        return Waveform(wave.samples.copy(), target_rate)

    g = math.gcd(wave.sample_rate, target_rate)
    up, down = target_rate // g, wave.sample_rate // g

    # Windowed sinc at the upsampled rate; cutoff = min Nyquist of the two
    # rates, RESAMPLE_TAPS_PER_PHASE taps per polyphase branch.
    half = (RESAMPLE_TAPS_PER_PHASE * up) // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    cutoff = min(1.0 / up, 1.0 / down)  # cycles per upsampled sample, x2 = Nyquist
    taps = cutoff * np.sinc(cutoff * t) * np.kaiser(len(t), RESAMPLE_KAISER_BETA)
    taps /= taps.sum()  # resample_poly scales by `up` itself: keep unit DC gain here

    out = resample_poly(wave.samples, up, down, window=taps)
    return Waveform(out, target_rate)


def mel_spectrogram(wave: Waveform, cfg: MelConfig) -> MelSpectrogram:
    """Log Mel spectrogram with 1 + floor((N - win) / hop) frames."""
    if wave.sample_rate != cfg.sample_rate:
        raise InvalidConfig(
            f"waveform rate {wave.sample_rate} != config rate {cfg.sample_rate}; "
            "resample first"
        )
    win, hop = cfg.win_samples, cfg.hop_samples
    n = len(wave)
    if n < win:
        raise AudioTooShort(f"waveform has {n} samples, window needs {win}")

    n_frames = 1 + (n - win) // hop
    frames = np.lib.stride_tricks.sliding_window_view(wave.samples, win)[::hop][:n_frames]
    window = np.hanning(win)
    spectrum = np.fft.rfft(frames * window, n=cfg.n_fft, axis=1)
    power = np.abs(spectrum) ** 2

    weights, _ = mel_filterbank(cfg)
    mel_power = power @ weights.T
    values = np.log(np.maximum(mel_power, cfg.log_floor))
    return MelSpectrogram(values=values, hop_s=hop / cfg.sample_rate, win_s=win / cfg.sample_rate)


def load_wav(path) -> Waveform:
    """Read a mono PCM16 or IEEE float32 WAV file."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise UnsupportedAudio(f"cannot read WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise UnsupportedAudio(f"{path}: expected mono audio, got shape {data.shape}")
    if data.size == 0:
        raise EmptyAudio(f"{path}: empty audio")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedAudio(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, int(rate))


def save_wav(path, wave: Waveform, pcm16: bool = True) -> None:
    """Write a mono WAV file (PCM16 by default, float32 otherwise)."""
    if pcm16:
        clipped = np.clip(wave.samples, -1.0, 1.0)
        data = np.round(clipped * 32767.0).astype(np.int16)
    else:
        data = wave.samples.astype(np.float32)
    wavfile.write(path, wave.sample_rate, data)
