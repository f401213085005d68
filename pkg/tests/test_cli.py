import hashlib
import json
import os

import numpy as np
import pytest

from tonelab.cli import run


def last_json_line(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


def tree_digest(root, skip=()):
    h = hashlib.sha256()
    for dirpath, _, files in sorted(os.walk(root)):
        for name in sorted(files):
            if name in skip:
                continue
            h.update(name.encode())
            h.update(open(os.path.join(dirpath, name), "rb").read())
    return h.hexdigest()


SMALL_SYNTH = {
    "n_utterances": 8,
    "n_speakers": 4,
    "n_test_speakers": 1,
    "seed": 13,
    "syllables_range": [3, 5],
}


class TestGradcheckCommand:
    def test_exit_zero_and_summary(self, capsys):
        assert run(["gradcheck", "--seed", "7"]) == 0
        summary = last_json_line(capsys)
        assert summary["max_rel_err"] < 1e-5
        assert summary["seed"] == 7


class TestUsageErrors:
    def test_missing_required_flag(self, capsys):
        rc = run(["featurize", "--audio-dir", "x", "--alignments", "y", "--out", "z"])
        assert rc == 2

    def test_unknown_subcommand(self):
        assert run(["transcode"]) == 2


class TestDomainErrors:
    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {}, "mystery": 1}))
        rc = run(["synth", "--config", str(cfg), "--out", str(tmp_path / "c")])
        assert rc == 1
        assert "InvalidConfig" in capsys.readouterr().err

    def test_missing_vocab_file(self, tmp_path, capsys):
        rc = run(
            [
                "featurize",
                "--audio-dir", str(tmp_path),
                "--alignments", str(tmp_path / "none.tsv"),
                "--vocab", str(tmp_path / "none.txt"),
                "--out", str(tmp_path / "arc"),
            ]
        )
        assert rc == 1
        assert "IoError" in capsys.readouterr().err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli_e2e")
    cfg = {
        "synth": SMALL_SYNTH,
        "context_size": 1,
        "segment_mode": "tritone",
        "model": {
            "conv_channels": [2, 4],
            "blocks_per_stage": [1, 1],
            "embedding_dim": 8,
            "sf_dense_dim": 4,
            "fusion_hidden_dim": 8,
        },
        "train": {"max_epochs": 2, "batch_size": 16, "seed": 3},
    }
    cfg_path = tmp / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    return tmp, str(cfg_path)


class TestEndToEnd:
    def test_pipeline(self, workdir, capsys):
        tmp, cfg_path = workdir
        corpus = tmp / "corpus"
        assert run(["synth", "--config", cfg_path, "--out", str(corpus)]) == 0
        synth_summary = last_json_line(capsys)
        assert synth_summary["train_utts"] + synth_summary["test_utts"] == 8

        meta = json.loads((corpus / "corpus_meta.json").read_text())
        # split alignments by utterance for train vs test archives
        rows = (corpus / "jittered.tsv").read_text().splitlines()
        train_ids = set(meta["train_utts"][:-2])
        dev_ids = set(meta["train_utts"][-2:])
        test_ids = set(meta["test_utts"])
        for name, ids in [("train", train_ids), ("dev", dev_ids), ("test", test_ids)]:
            subset = [r for r in rows if r.split("\t")[0] in ids]
            (tmp / f"{name}.tsv").write_text("\n".join(subset) + "\n")

        for name in ("train", "dev", "test"):
            rc = run(
                [
                    "featurize",
                    "--audio-dir", str(corpus / "wav"),
                    "--alignments", str(tmp / f"{name}.tsv"),
                    "--vocab", str(corpus / "vocab.txt"),
                    "--out", str(tmp / f"{name}.arc"),
                    "--context-size", "1",
                    "--segment-mode", "tritone",
                ]
            )
            assert rc == 0
            summary = last_json_line(capsys)
            assert summary["n_samples"] > 0

        rc = run(
            [
                "train",
                "--features", str(tmp / "train.arc"),
                "--dev", str(tmp / "dev.arc"),
                "--config", cfg_path,
                "--variant", "sf_ctx",
                "--out", str(tmp / "model.ckpt"),
            ]
        )
        assert rc == 0
        train_summary = last_json_line(capsys)
        assert train_summary["epochs"] == 2
        assert os.path.exists(train_summary["history"])

        rc = run(
            [
                "eval",
                "--features", str(tmp / "test.arc"),
                "--model", str(tmp / "model.ckpt"),
                "--patterns", "T4-T4,T4-T3-T4,T2-T2",
                "--out", str(tmp / "report.json"),
                "--markdown", str(tmp / "report.md"),
            ]
        )
        assert rc == 0
        eval_summary = last_json_line(capsys)
        report = json.loads((tmp / "report.json").read_text())
        assert report["overall_accuracy"] == pytest.approx(
            eval_summary["overall_accuracy"]
        )
        assert set(report["pattern_accuracy"]) == {"T4-T4", "T4-T3-T4", "T2-T2"}
        assert "Overall Accuracy" in (tmp / "report.md").read_text()

    def test_synth_reproducible_hashes(self, workdir, capsys):
        tmp, cfg_path = workdir
        a, b = tmp / "resynth_a", tmp / "resynth_b"
        assert run(["synth", "--config", cfg_path, "--out", str(a)]) == 0
        assert run(["synth", "--config", cfg_path, "--out", str(b)]) == 0
        assert tree_digest(a) == tree_digest(b)

    def test_featurize_reproducible(self, workdir, capsys):
        tmp, cfg_path = workdir
        for out in ("rearc_a", "rearc_b"):
            assert run(
                [
                    "featurize",
                    "--audio-dir", str(tmp / "corpus" / "wav"),
                    "--alignments", str(tmp / "dev.tsv"),
                    "--vocab", str(tmp / "corpus" / "vocab.txt"),
                    "--out", str(tmp / out),
                    "--context-size", "1",
                ]
            ) == 0
        assert tree_digest(tmp / "rearc_a") == tree_digest(tmp / "rearc_b")
