"""From waveform to context samples: spectrograms, tri-tone segments, features.

Shows the plain / di-tone / tri-tone frame intervals side by side, then
builds (2n+1)-slot context samples and round-trips them through a feature
archive.

Run:  python demos/02_segments_and_features.py [corpus_dir]
      (generate one first with demos/01_synthesize_corpus.py)
"""

import os
import sys
import tempfile

import numpy as np

from tonelab import audio_dsp, feature_builder
from tonelab.alignment_io import load_vocab, parse_alignment
from tonelab.segmenter import SegmentMode, segment_intervals, slice_segments
from tonelab.synth_corpus import SynthConfig, generate_corpus

corpus = sys.argv[1] if len(sys.argv) > 1 else "demo_corpus"
if not os.path.exists(os.path.join(corpus, "vocab.txt")):
    print(f"(no corpus at {corpus}; generating a small one)")
    generate_corpus(SynthConfig(n_utterances=8, n_speakers=4, n_test_speakers=1, seed=7), corpus)

vocab = load_vocab(os.path.join(corpus, "vocab.txt"))
utt = parse_alignment(os.path.join(corpus, "jittered.tsv"), vocab)[0]

mel_cfg = audio_dsp.MelConfig()
wave = audio_dsp.load_wav(os.path.join(corpus, "wav", f"{utt.utt_id}.wav"))
print(f"{utt.utt_id}: {len(wave)} samples @ {wave.sample_rate} Hz "
      f"-> resample to {mel_cfg.sample_rate} Hz")
wave = audio_dsp.resample(wave, mel_cfg.sample_rate)
mel = audio_dsp.mel_spectrogram(wave, mel_cfg)
print(f"log-Mel: {mel.n_frames} frames x {mel.values.shape[1]} filters "
      f"(hop {mel.hop_s*1000:.0f} ms, win {mel.win_s*1000:.0f} ms)")

bounds = feature_builder.frame_bounds(utt, mel.hop_s, mel.n_frames)
print(f"\nframe intervals per aligned unit ({len(bounds)} units):")
print(f"  {'unit':>7} {'plain':>10} {'ditone':>10} {'tritone':>10}")
plain = segment_intervals(bounds, mel.n_frames, SegmentMode.PLAIN)
ditone = segment_intervals(bounds, mel.n_frames, SegmentMode.DITONE)
tritone = segment_intervals(bounds, mel.n_frames, SegmentMode.TRITONE)
for i, syl in enumerate(utt.syllables[:10]):
    name = vocab.syllables[syl.syllable_id]
    print(f"  {name:>4}/{syl.tone} "
          f"[{plain[i].start:3d},{plain[i].end:3d}) "
          f"[{ditone[i].start:3d},{ditone[i].end:3d}) "
          f"[{tritone[i].start:3d},{tritone[i].end:3d})")

slices = slice_segments(mel, tritone)
samples = [
    feature_builder.build_context(utt, slices, i, 1, vocab)
    for i in range(len(slices))
]
s = samples[min(2, len(samples) - 1)]
print(f"\ncontext sample (n=1) at position {s.pos}, label {s.label}:")
for j, (sl, feat) in enumerate(zip(s.slices, s.seg_feats)):
    kind = "placeholder" if sl.shape[0] == 0 else f"{sl.shape[0]} frames"
    onehot = int(np.argmax(feat[1:])) if feat[1:].any() else None
    print(f"  slot {j - 1:+d}: {kind:>12}, dur {feat[0]:.3f}s, syllable id {onehot}")

with tempfile.TemporaryDirectory() as tmp:
    arc = os.path.join(tmp, "demo.arc")
    feature_builder.write_archive(samples, arc, mel_config=mel_cfg.to_dict())
    back, manifest = feature_builder.read_archive(arc)
    same = all(
        np.array_equal(a.slices[k], b.slices[k])
        for a, b in zip(samples, back) for k in range(3)
    )
    size = os.path.getsize(os.path.join(arc, "data.bin"))
    print(f"\narchive round trip: {len(back)} samples, {size} bytes, bit-exact: {same}")
