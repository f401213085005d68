"""Train the three classifier variants on a small corpus and compare them.

A miniature version of the full experiment: synthesize, featurize once at
context size 1, train baseline / sf / sf_ctx, and render the evaluation
table. Takes a few minutes on a laptop; scale n_utterances up for a real
comparison (the structural gaps need data to show).

Run:  python demos/03_train_and_evaluate.py [n_utterances]
"""

import os
import sys
import tempfile
import time

from tonelab import alignment_io, audio_dsp, evaluator, feature_builder, nn_core, trainer
from tonelab.segmenter import SegmentMode
from tonelab.synth_corpus import SynthConfig, generate_corpus

n_utts = int(sys.argv[1]) if len(sys.argv) > 1 else 120

MODEL = dict(
    conv_channels=(4, 8), blocks_per_stage=(1, 1), stem_stride=(2, 2),
    embedding_dim=48, sf_dense_dim=32, fusion_hidden_dim=128, n_mel_bins=64,
)
TRAIN = dict(max_epochs=12)  # bump this (or remove) for a full run


def featurize(corpus, ids, vocab, mel_cfg):
    utts = alignment_io.parse_alignment(os.path.join(corpus, "jittered.tsv"), vocab)
    samples = []
    for utt in utts:
        if utt.utt_id not in ids:
            continue
        wave = audio_dsp.load_wav(os.path.join(corpus, "wav", f"{utt.utt_id}.wav"))
        wave = audio_dsp.resample(wave, mel_cfg.sample_rate)
        mel = audio_dsp.mel_spectrogram(wave, mel_cfg)
        samples.extend(
            feature_builder.build_utterance_samples(utt, mel, vocab, 1, SegmentMode.TRITONE)
        )
    return samples


with tempfile.TemporaryDirectory() as tmp:
    corpus = os.path.join(tmp, "corpus")
    cfg = SynthConfig(n_utterances=n_utts, n_speakers=12, n_test_speakers=2, seed=42)
    meta = generate_corpus(cfg, corpus)
    vocab = alignment_io.load_vocab(os.path.join(corpus, "vocab.txt"))
    mel_cfg = audio_dsp.MelConfig()

    n_dev = max(2, len(meta["train_utts"]) // 10)
    t0 = time.time()
    train_samples = featurize(corpus, set(meta["train_utts"][:-n_dev]), vocab, mel_cfg)
    dev_samples = featurize(corpus, set(meta["train_utts"][-n_dev:]), vocab, mel_cfg)
    test_samples = featurize(corpus, set(meta["test_utts"]), vocab, mel_cfg)
    print(f"featurized {len(train_samples)}/{len(dev_samples)}/{len(test_samples)} "
          f"train/dev/test samples in {time.time()-t0:.0f}s")

    reports = {}
    for variant in ("baseline", "sf", "sf_ctx"):
        need = 1 if variant == "sf_ctx" else 0
        tr = [feature_builder.trim_context(s, need) for s in train_samples]
        dv = [feature_builder.trim_context(s, need) for s in dev_samples]
        model_cfg = nn_core.ModelConfig(
            variant=variant, vocab_size=len(vocab), context_size=need, **MODEL
        )
        train_cfg = trainer.TrainConfig(**TRAIN)
        model = nn_core.build_model(model_cfg, seed=train_cfg.seed)
        t0 = time.time()
        model, hist = trainer.train(model, tr, dv, train_cfg)
        reports[variant] = evaluator.evaluate(model, test_samples)
        print(f"{variant:>9}: {model.num_params()} params, "
              f"{len(hist.train_loss)} epochs in {time.time()-t0:.0f}s "
              f"({hist.stop_reason}), test accuracy "
              f"{reports[variant].overall_accuracy:.3f}")

    print("\n" + evaluator.render_markdown(reports))
