import hashlib
import json
import os

import numpy as np
import pytest

from oracles import autocorr_f0, f0_track
from tonelab import alignment_io, audio_dsp, feature_builder
from tonelab.errors import InvalidConfig, NotVoiced
from tonelab.synth_corpus import (
    CONTROL_RATE_HZ,
    DEFAULT_TEMPLATES,
    SynthConfig,
    apply_sandhi,
    default_vocab,
    generate_corpus,
    sample_tone_seq,
    synth_utterance,
    tone_contour,
)

# precision-measurement configs: no noise, no declination
QUIET = dict(noise_snr_db=45.0, inband_noise_snr_db=45.0,
             declination_range=(0.0, 0.0))


class TestToneContour:
    def test_t1_flat(self):
        c = tone_contour("T1", 0.25)
        assert c.max() - c.min() == 0.0

    def test_t4_strictly_decreasing(self):
        c = tone_contour("T4", 0.2)
        assert np.all(np.diff(c) < 0)

    def test_t3_dip_position_and_endpoints(self):
        c = tone_contour("T3", 0.3)
        t = np.linspace(0, 0.3, len(c))
        assert abs(t[np.argmin(c)] - 0.12) < 1e-9
        assert abs(c[0] - 200.0) < 1.0 and abs(c[-1] - 220.0) < 1.0

    def test_t5_continues_previous(self):
        c = tone_contour("T5", 0.1, prev_end_f0=160.0)
        assert c[0] == pytest.approx(160.0)
        assert c[-1] == pytest.approx(160.0 * 0.75)
        d = tone_contour("T5", 0.1)
        assert d[0] == pytest.approx(200.0)

    def test_t0_not_voiced(self):
        with pytest.raises(NotVoiced):
            tone_contour("T0", 0.05)

    def test_scale_and_clamp(self):
        c = tone_contour("T4", 0.2, f0_scale=1.25)
        assert c.max() <= 340.0
        assert c[0] == pytest.approx(340.0)  # 300 * 1.25 clamped

    def test_control_rate(self):
        c = tone_contour("T1", 0.3)
        assert len(c) == round(0.3 * CONTROL_RATE_HZ) + 1


class TestSandhi:
    def test_pair(self):
        assert apply_sandhi(["T3", "T3"]) == ["T2", "T3"]

    def test_chain(self):
        assert apply_sandhi(["T3", "T3", "T3"]) == ["T2", "T2", "T3"]

    def test_untouched(self):
        assert apply_sandhi(["T3", "T2", "T3"]) == ["T3", "T2", "T3"]

    def test_rendered_acoustics_label_kept(self):
        vocab = default_vocab()
        cfg = SynthConfig(jitter_max_s=0.0, pause_prob=0.0, coart_tau_s=0.0, **QUIET)
        rng = np.random.default_rng(0)
        utt = synth_utterance([("a", "T3"), ("o", "T3")], vocab, cfg, rng, f0_scale=1.0)
        assert utt.truth.tones() == ["T3", "T3"]  # labels untouched
        first = utt.truth.syllables[0]
        x, fs = utt.waveform.samples, utt.waveform.sample_rate
        measured = f0_track(x, fs, first.start_s + 0.02, first.end_s - 0.02)
        measured = measured[~np.isnan(measured)]
        rel = np.linspace(0.2, 0.8, len(measured))

        def template_rmse(tone):
            pts = DEFAULT_TEMPLATES[tone]
            want = np.interp(rel, [p[0] for p in pts], [p[1] for p in pts])
            return float(np.sqrt(np.mean((measured - want) ** 2)))

        assert template_rmse("T2") < template_rmse("T3")


class TestSynthUtterance:
    def test_single_t1_measured_f0(self):
        vocab = default_vocab()
        cfg = SynthConfig(jitter_max_s=0.0, **QUIET)
        for scale in (0.85, 1.0, 1.2):
            utt = synth_utterance([("a", "T1")], vocab, cfg,
                                  np.random.default_rng(3), f0_scale=scale)
            syl = utt.truth.syllables[0]
            x, fs = utt.waveform.samples, utt.waveform.sample_rate
            seg = x[int((syl.start_s + 0.02) * fs) : int((syl.end_s - 0.02) * fs)]
            measured = autocorr_f0(seg, fs)
            assert abs(measured - 280.0 * scale) / (280.0 * scale) < 0.02

    def test_t4_t4_boundary_continuous(self):
        vocab = default_vocab()
        cfg = SynthConfig(jitter_max_s=0.0, pause_prob=0.0, **QUIET)
        utt = synth_utterance([("a", "T4"), ("o", "T4")], vocab, cfg,
                              np.random.default_rng(2), f0_scale=1.0)
        b = utt.truth.syllables[0].end_s
        ct = np.arange(len(utt.f0_control)) * utt.control_hop_s
        voiced = ~np.isnan(utt.f0_control)
        eps = 1.0 / cfg.sample_rate
        left = np.interp(b - eps, ct[voiced], utt.f0_control[voiced])
        right = np.interp(b + eps, ct[voiced], utt.f0_control[voiced])
        assert abs(left - right) < 5.0
        # templates end at 160 and restart at 300; the blend sits in between
        mid = np.interp(b, ct[voiced], utt.f0_control[voiced])
        assert 200.0 < mid < 260.0

    def test_f0_continuity_everywhere_in_runs(self):
        vocab = default_vocab()
        cfg = SynthConfig(jitter_max_s=0.0, pause_prob=0.0, initial_prob=0.0, **QUIET)
        rng = np.random.default_rng(9)
        seq = sample_tone_seq(cfg, rng)
        utt = synth_utterance(seq, vocab, cfg, rng, f0_scale=1.0)
        ct = np.arange(len(utt.f0_control)) * utt.control_hop_s
        voiced = ~np.isnan(utt.f0_control)
        start = utt.truth.syllables[0].start_s
        end = utt.truth.syllables[-1].end_s
        t_audio = np.arange(int(start * 44100) + 2, int(end * 44100) - 2) / 44100
        fa = np.interp(t_audio, ct[voiced], utt.f0_control[voiced])
        assert np.max(np.abs(np.diff(fa))) < 5.0

    def test_zero_jitter_equals_truth(self):
        vocab = default_vocab()
        cfg = SynthConfig(jitter_max_s=0.0, **QUIET)
        utt = synth_utterance([("h", "T0"), ("ao", "T3")], vocab, cfg,
                              np.random.default_rng(0), f0_scale=1.0)
        assert utt.jittered == utt.truth

    def test_jitter_bounded_and_columns_identical(self):
        vocab = default_vocab()
        cfg = SynthConfig(**QUIET)
        rng = np.random.default_rng(11)
        seq = sample_tone_seq(cfg, rng)
        utt = synth_utterance(seq, vocab, cfg, rng, f0_scale=1.0)
        assert len(utt.truth.syllables) == len(utt.jittered.syllables)
        for a, b in zip(utt.truth.syllables, utt.jittered.syllables):
            assert a.syllable_id == b.syllable_id and a.tone == b.tone
            assert abs(a.start_s - b.start_s) <= cfg.jitter_max_s + 1e-12
            assert abs(a.end_s - b.end_s) <= 2 * cfg.jitter_max_s + 1e-12
            assert b.dur_s > 0
        starts = [s.start_s for s in utt.jittered.syllables]
        assert starts == sorted(starts)

    def test_mixed_roles_rejected(self):
        vocab = default_vocab()
        cfg = SynthConfig(**QUIET)
        with pytest.raises(InvalidConfig):
            synth_utterance([("a", "T0")], vocab, cfg, np.random.default_rng(0))


class TestConfigValidation:
    def test_jitter_vs_min_duration(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(jitter_max_s=0.03)  # >= half of the 45 ms minimum

    def test_unknown_key(self):
        with pytest.raises(InvalidConfig):
            SynthConfig.from_dict({"volume": 3})


class TestGenerateCorpus:
    def small_cfg(self, **kw):
        base = dict(n_utterances=10, n_speakers=5, n_test_speakers=1, seed=21,
                    syllables_range=(5, 10))
        base.update(kw)
        return SynthConfig(**base)

    def test_counting_bound(self, tmp_path):
        meta = generate_corpus(self.small_cfg(), tmp_path / "c")
        finals = sum(n for t, n in meta["tone_counts"].items() if t != "T0")
        assert 50 <= finals <= 100
        assert meta["tone_counts"].get("T0", 0) >= 0

    def test_deterministic_bytes(self, tmp_path):
        def digest(root):
            h = hashlib.sha256()
            for dirpath, _, files in sorted(os.walk(root)):
                for name in sorted(files):
                    h.update(name.encode())
                    h.update(open(os.path.join(dirpath, name), "rb").read())
            return h.hexdigest()

        generate_corpus(self.small_cfg(), tmp_path / "a")
        generate_corpus(self.small_cfg(), tmp_path / "b")
        assert digest(tmp_path / "a") == digest(tmp_path / "b")

    def test_speaker_scales_disjoint(self, tmp_path):
        meta = generate_corpus(self.small_cfg(), tmp_path / "c")
        train_scales = {v["f0_scale"] for v in meta["speakers"].values() if v["split"] == "train"}
        test_scales = {v["f0_scale"] for v in meta["speakers"].values() if v["split"] == "test"}
        assert train_scales and test_scales
        assert not (train_scales & test_scales)

    def test_outputs_parse_and_featurize(self, tmp_path):
        out = tmp_path / "c"
        generate_corpus(self.small_cfg(), out)
        vocab = alignment_io.load_vocab(out / "vocab.txt")
        truth = alignment_io.parse_alignment(out / "truth.tsv", vocab)
        jittered = alignment_io.parse_alignment(out / "jittered.tsv", vocab)
        assert len(truth) == len(jittered) == 10
        mel_cfg = audio_dsp.MelConfig()
        utt = jittered[0]
        wave = audio_dsp.load_wav(out / "wav" / f"{utt.utt_id}.wav")
        wave = audio_dsp.resample(wave, mel_cfg.sample_rate)
        mel = audio_dsp.mel_spectrogram(wave, mel_cfg)
        samples = feature_builder.build_utterance_samples(utt, mel, vocab, 1)
        assert len(samples) == len(utt.syllables)

    def test_meta_lists_splits(self, tmp_path):
        meta = generate_corpus(self.small_cfg(), tmp_path / "c")
        assert len(meta["train_utts"]) + len(meta["test_utts"]) == 10
        assert set(meta["train_utts"]).isdisjoint(meta["test_utts"])


class TestLearnability:
    def test_contour_identifies_rendered_template(self):
        # With jitter and coarticulation off, an autocorrelation track must
        # recognise the rendered template of nearly every final.
        vocab = default_vocab()
        cfg = SynthConfig(jitter_max_s=0.0, coart_tau_s=1e-6, sandhi_enabled=True,
                          pause_prob=0.1, **QUIET)
        ok = total = 0
        for k in range(12):
            rng = np.random.default_rng(500 + k)
            seq = sample_tone_seq(cfg, rng)
            scale = rng.uniform(*cfg.speaker_scale_range)
            utt = synth_utterance(seq, vocab, cfg, rng, f0_scale=scale)
            x, fs = utt.waveform.samples, utt.waveform.sample_rate
            finals = [s for s in utt.truth.syllables if s.tone != "T0"]
            rendered = (apply_sandhi([s.tone for s in finals])
                        if cfg.sandhi_enabled else [s.tone for s in finals])
            prev_end = None
            for syl, rtone in zip(finals, rendered):
                measured = f0_track(x, fs, syl.start_s + 0.01, syl.end_s - 0.01)
                measured = measured[~np.isnan(measured)] / scale
                t5_start = prev_end if prev_end is not None else 200.0
                candidates = dict(DEFAULT_TEMPLATES)
                candidates["T5"] = ((0.0, t5_start), (1.0, t5_start * cfg.t5_decay))
                if len(measured) >= 2:
                    rel = np.linspace(0.15, 0.85, 16)
                    m = np.interp(rel, np.linspace(0, 1, len(measured)), measured)
                    scores = {}
                    for tone, pts in candidates.items():
                        want = np.interp(rel, [p[0] for p in pts], [p[1] for p in pts])
                        scores[tone] = float(np.mean((m - want) ** 2))
                    best = min(scores, key=scores.get)
                    total += 1
                    ok += best == rtone
                prev_end = float(candidates[rtone][-1][1])
        assert total > 50
        assert ok / total >= 0.95
