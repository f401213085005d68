"""Generate a small synthetic tone corpus and look inside it.

Walks through: corpus generation, the on-disk layout, what a pitch contour
looks like per tone, and how the "aligner" jitter perturbs the truth.

Run:  python demos/01_synthesize_corpus.py [out_dir]
"""

import json
import os
import sys

import numpy as np

from tonelab.alignment_io import load_vocab, parse_alignment
from tonelab.synth_corpus import SynthConfig, generate_corpus, tone_contour

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_corpus"

cfg = SynthConfig(n_utterances=20, n_speakers=5, n_test_speakers=1, seed=7)
meta = generate_corpus(cfg, out_dir)
print(f"wrote {out_dir}/: wav/*.wav, truth.tsv, jittered.tsv, vocab.txt, corpus_meta.json")
print(f"  train utterances: {len(meta['train_utts'])}, test: {len(meta['test_utts'])}")
print(f"  tone counts: {meta['tone_counts']}")

# Tone templates at a glance: sampled pitch trajectories (200 Hz control rate).
print("\npitch contours (Hz), 200 ms each:")
for tone in ("T1", "T2", "T3", "T4", "T5"):
    c = tone_contour(tone, 0.2, prev_end_f0=280.0)
    marks = " ".join(f"{c[i]:5.0f}" for i in np.linspace(0, len(c) - 1, 9).astype(int))
    print(f"  {tone}: {marks}")

# Compare truth vs jittered boundaries for the first utterance.
vocab = load_vocab(os.path.join(out_dir, "vocab.txt"))
truth = parse_alignment(os.path.join(out_dir, "truth.tsv"), vocab)[0]
jitter = parse_alignment(os.path.join(out_dir, "jittered.tsv"), vocab)[0]
print(f"\n{truth.utt_id}: truth vs jittered boundaries (s)")
for a, b in list(zip(truth.syllables, jitter.syllables))[:8]:
    syl = vocab.syllables[a.syllable_id]
    print(f"  {syl:>5} {a.tone}  {a.start_s:6.3f}-{a.end_s:6.3f}   "
          f"{b.start_s:6.3f}-{b.end_s:6.3f}  (shift {1000*(b.start_s-a.start_s):+.0f} ms)")
