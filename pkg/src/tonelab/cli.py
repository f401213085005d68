"""The ``tonelab`` command line: synth | featurize | train | eval | gradcheck.

Every subcommand prints a single JSON summary as its final stdout line.
Exit codes: 0 success, 1 domain error (error class name on stderr),
2 usage error. Configuration comes from one JSON file with optional
sections ``mel``, ``model``, ``train``, ``synth`` plus top-level
``context_size``, ``segment_mode``, ``patterns``; flags win over the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import alignment_io, audio_dsp, evaluator, feature_builder, nn_core, synth_corpus, trainer
from .errors import InvalidConfig, ToneLabError
from .segmenter import SegmentMode

_CONFIG_KEYS = {"mel", "model", "train", "synth", "context_size", "segment_mode", "patterns"}


def load_run_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidConfig("config file must hold a JSON object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _mel_config(cfg: dict) -> audio_dsp.MelConfig:
    section = dict(cfg.get("mel", {}))
    known = {f.name for f in audio_dsp.MelConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(section) - known
    if unknown:
        raise InvalidConfig(f"unknown mel config keys: {sorted(unknown)}")
    return audio_dsp.MelConfig(**section)


def _print_summary(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def cmd_synth(args) -> dict:
    cfg_doc = load_run_config(args.config)
    synth_cfg = synth_corpus.SynthConfig.from_dict(dict(cfg_doc.get("synth", {})))
    if args.seed is not None:
        synth_cfg = synth_corpus.SynthConfig.from_dict(
            {**synth_cfg.to_dict(), "seed": args.seed}
        )
    meta = synth_corpus.generate_corpus(synth_cfg, args.out)
    return {
        "command": "synth",
        "out": args.out,
        "seed": synth_cfg.seed,
        "n_utterances": synth_cfg.n_utterances,
        "train_utts": len(meta["train_utts"]),
        "test_utts": len(meta["test_utts"]),
    }


def cmd_featurize(args) -> dict:
    cfg_doc = load_run_config(args.config)
    mel_cfg = _mel_config(cfg_doc)
    context_size = args.context_size
    if context_size is None:
        context_size = int(cfg_doc.get("context_size", 1))
    mode = SegmentMode(args.segment_mode or cfg_doc.get("segment_mode", "tritone"))

    vocab = alignment_io.load_vocab(args.vocab)
    utterances = alignment_io.parse_alignment(args.alignments, vocab)
    samples = []
    for utt in utterances:
        wave = audio_dsp.load_wav(os.path.join(args.audio_dir, f"{utt.utt_id}.wav"))
        if wave.sample_rate != mel_cfg.sample_rate:
            wave = audio_dsp.resample(wave, mel_cfg.sample_rate)
        mel = audio_dsp.mel_spectrogram(wave, mel_cfg)
        samples.extend(
            feature_builder.build_utterance_samples(utt, mel, vocab, context_size, mode)
        )
    feature_builder.write_archive(
        samples, args.out, mel_config=mel_cfg.to_dict(), segment_mode=mode.value
    )
    return {
        "command": "featurize",
        "out": args.out,
        "n_utterances": len(utterances),
        "n_samples": len(samples),
        "context_size": context_size,
        "segment_mode": mode.value,
        "vocab_size": len(vocab),
    }


def _model_config(cfg_doc: dict, variant: str, vocab_size: int, n_mel_bins: int) -> nn_core.ModelConfig:
    section = dict(cfg_doc.get("model", {}))
    section.setdefault("vocab_size", vocab_size)
    section.setdefault("n_mel_bins", n_mel_bins)
    section["variant"] = variant
    if variant == "sf_ctx":
        section.setdefault("context_size", int(cfg_doc.get("context_size", 1)))
    else:
        section["context_size"] = 0
    return nn_core.ModelConfig.from_dict(section)


def cmd_train(args) -> dict:
    cfg_doc = load_run_config(args.config)
    train_cfg = trainer.TrainConfig.from_dict(dict(cfg_doc.get("train", {})))
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)

    train_samples, manifest = feature_builder.read_archive(args.features)
    dev_samples, _ = feature_builder.read_archive(args.dev)
    vocab_size = manifest["vocab_size"]
    n_mel_bins = train_samples[0].center_slice.shape[1]
    model_cfg = _model_config(cfg_doc, args.variant, vocab_size, n_mel_bins)

    need = model_cfg.context_size if model_cfg.variant == "sf_ctx" else 0
    train_samples = [feature_builder.trim_context(s, need) for s in train_samples]
    dev_samples = [feature_builder.trim_context(s, need) for s in dev_samples]

    model = nn_core.build_model(model_cfg, seed=train_cfg.seed)
    model, history = trainer.train(model, train_samples, dev_samples, train_cfg)
    nn_core.save_model(model, args.out)
    history_path = os.path.join(os.path.dirname(os.path.abspath(args.out)) or ".", "history.json")
    with open(history_path, "w", encoding="utf-8") as fh:
        json.dump(history.to_dict(), fh, sort_keys=True)

    return {
        "command": "train",
        "variant": args.variant,
        "out": args.out,
        "history": history_path,
        "epochs": len(history.train_loss),
        "best_epoch": history.best_epoch,
        "best_dev_loss": min(history.dev_loss) if history.dev_loss else None,
        "stop_reason": history.stop_reason,
        "n_params": model.num_params(),
        "seed": train_cfg.seed,
    }


def cmd_eval(args) -> dict:
    cfg_doc = load_run_config(args.config)
    samples, _ = feature_builder.read_archive(args.features)
    model = nn_core.load_model(args.model)
    if args.patterns:
        patterns = tuple(p.strip() for p in args.patterns.split(",") if p.strip())
    else:
        patterns = tuple(cfg_doc.get("patterns", evaluator.DEFAULT_PATTERNS))
    report = evaluator.evaluate(model, samples, patterns=patterns)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True)
    if args.markdown:
        with open(args.markdown, "w", encoding="utf-8") as fh:
            fh.write(evaluator.render_markdown({model.config.variant: report}))
    return {
        "command": "eval",
        "out": args.out,
        "overall_accuracy": report.overall_accuracy,
        "n_samples": report.n_samples,
        "pattern_accuracy": report.pattern_accuracy,
    }


def cmd_gradcheck(args) -> dict:
    rng = np.random.default_rng(args.seed)
    cfg = nn_core.ModelConfig(
        variant="sf_ctx",
        vocab_size=5,
        context_size=1,
        conv_channels=(2, 3),
        blocks_per_stage=(1, 1),
        embedding_dim=6,
        sf_dense_dim=4,
        fusion_hidden_dim=8,
        n_mel_bins=8,
    )
    model = nn_core.build_model(cfg, seed=args.seed, dtype=np.float64)

    b, s, t, f = 3, 3, 7, cfg.n_mel_bins
    slices = rng.standard_normal((b, s, t, f))
    frame_mask = rng.integers(2, t + 1, size=(b, s))
    slot_mask = np.zeros((b, s), dtype=bool)
    slot_mask[0, 0] = True
    frame_mask[0, 0] = 0
    for i in range(b):
        for j in range(s):
            slices[i, j, frame_mask[i, j] :] = 0.0
    seg_feats = np.zeros((b, s, cfg.feat_len))
    for i in range(b):
        for j in range(s):
            if frame_mask[i, j]:
                seg_feats[i, j, 0] = rng.uniform(0.05, 0.3)
                seg_feats[i, j, 1 + int(rng.integers(cfg.vocab_size))] = 1.0
    labels = rng.integers(0, cfg.n_classes, size=b)
    batch = nn_core.Batch(slices, frame_mask, seg_feats, labels, slot_mask)

    err = nn_core.grad_check(model, batch, eps=args.eps, n_samples=args.samples, seed=args.seed)
    return {
        "command": "gradcheck",
        "max_rel_err": err,
        "seed": args.seed,
        "eps": args.eps,
        "n_sampled": min(args.samples, model.num_params()),
        "n_params": model.num_params(),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tonelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic tone corpus")
    p.add_argument("--config", help="JSON run config (synth section)")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, help="override the corpus seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="build a feature archive from audio + alignments")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--alignments", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="output archive directory")
    p.add_argument("--context-size", type=int, default=None)
    p.add_argument("--segment-mode", choices=[m.value for m in SegmentMode], default=None)
    p.add_argument("--config", help="JSON run config (mel section)")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train one classifier variant")
    p.add_argument("--features", required=True, help="training feature archive")
    p.add_argument("--dev", required=True, help="dev feature archive")
    p.add_argument("--config", help="JSON run config (model/train sections)")
    p.add_argument("--variant", required=True, choices=list(nn_core.VARIANTS))
    p.add_argument("--out", required=True, help="output checkpoint directory")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a feature archive with a checkpoint")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--patterns", help='comma list, e.g. "T4-T4,T4-T3-T4,T2-T2"')
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--markdown", help="optional markdown rendering path")
    p.add_argument("--config", help="JSON run config (patterns)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check of a tiny model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        summary = args.func(args)
    except ToneLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"IoError: {exc}", file=sys.stderr)
        return 1
    _print_summary(summary)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
