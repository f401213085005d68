"""Desk-scale Mandarin tone classification toolkit.

Pipeline: WAV -> log-Mel spectrogram -> tri-tone segments per force-aligned
syllable -> context samples (spectrogram slices + duration/syllable-identity
features) -> residual embedding network with statistics pooling -> 6-way
tone classifier. A synthetic pitch-contour corpus generator makes the whole
chain verifiable end to end without external data.
"""

from . import (
    alignment_io,
    audio_dsp,
    errors,
    evaluator,
    feature_builder,
    nn_core,
    segmenter,
    synth_corpus,
    trainer,
)

__version__ = "0.1.0"

__all__ = [
    "alignment_io",
    "audio_dsp",
    "errors",
    "evaluator",
    "feature_builder",
    "nn_core",
    "segmenter",
    "synth_corpus",
    "trainer",
    "__version__",
]
