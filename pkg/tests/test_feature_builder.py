import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import context_window_oracle
from tonelab.alignment_io import AlignedSyllable, UtteranceAlignment, Vocabulary
from tonelab.errors import (
    AlignmentSliceMismatch,
    CorruptArchive,
    EmptyDataset,
    UnknownSyllable,
    VersionError,
)
from tonelab.feature_builder import (
    ContextSample,
    build_context,
    padding_feature,
    read_archive,
    segment_feature,
    trim_context,
    write_archive,
)


def make_utt(tones, utt_id="u1", dur=0.1):
    syls = []
    t = 0.0
    for k, tone in enumerate(tones):
        syls.append(AlignedSyllable(t, dur, (k % 3) + 1, tone))
        t += dur
    return UtteranceAlignment(utt_id, tuple(syls))


def make_slices(count, n_bins=8, seed=0):
    rng = np.random.default_rng(seed)
    return [
        rng.standard_normal((rng.integers(1, 6), n_bins)).astype(np.float32)
        for _ in range(count)
    ]


class TestSegmentFeature:
    def test_one_hot_layout(self, small_vocab):
        syl = AlignedSyllable(0.0, 0.12, 2, "T3")
        feat = segment_feature(syl, small_vocab)
        assert feat.tolist() == [pytest.approx(0.12), 0.0, 0.0, 1.0, 0.0]

    def test_sil_slot(self, small_vocab):
        feat = segment_feature(AlignedSyllable(0.0, 0.08, 0, "T0"), small_vocab)
        assert feat.tolist() == [pytest.approx(0.08), 1.0, 0.0, 0.0, 0.0]

    def test_padding_vector(self, small_vocab):
        assert padding_feature(len(small_vocab)).tolist() == [0.0] * 5

    def test_out_of_range_id(self, small_vocab):
        with pytest.raises(UnknownSyllable):
            segment_feature(AlignedSyllable(0.0, 0.1, 9, "T1"), small_vocab)

    def test_duration_precision(self, small_vocab):
        dur = 0.123456
        feat = segment_feature(AlignedSyllable(0.0, dur, 1, "T1"), small_vocab)
        assert abs(float(feat[0]) - dur) < 1e-6


class TestBuildContext:
    def test_degenerate_window(self, small_vocab):
        utt = make_utt(["T1", "T2", "T3"])
        slices = make_slices(3)
        sample = build_context(utt, slices, 1, 0, small_vocab)
        assert len(sample.slices) == 1
        assert np.array_equal(sample.slices[0], slices[1])
        assert sample.label == "T2"

    def test_edge_placeholder(self, small_vocab):
        utt = make_utt(["T1", "T2", "T3"])
        slices = make_slices(3)
        sample = build_context(utt, slices, 0, 1, small_vocab)
        assert sample.slices[0].shape == (0, 8)
        assert np.all(sample.seg_feats[0] == 0)
        assert np.array_equal(sample.slices[1], slices[0])
        assert np.array_equal(sample.slices[2], slices[1])

    def test_window_against_oracle(self, small_vocab):
        utt = make_utt(["T1", "T2", "T3", "T4", "T5"])
        slices = make_slices(5)
        sample = build_context(utt, slices, 2, 2, small_vocab)
        expected = context_window_oracle(slices, 2, 2, None)
        for got, want in zip(sample.slices, expected):
            assert np.array_equal(got, want)

    def test_mismatched_slices(self, small_vocab):
        utt = make_utt(["T1", "T2"])
        with pytest.raises(AlignmentSliceMismatch):
            build_context(utt, make_slices(3), 0, 1, small_vocab)

    @given(count=st.integers(1, 7), i_frac=st.floats(0, 1), n=st.integers(0, 3))
    @settings(max_examples=80, deadline=None)
    def test_one_hot_count_invariant(self, count, i_frac, n):
        vocab = Vocabulary(("sil", "a", "ai", "an"))
        i = min(count - 1, int(i_frac * count))
        utt = make_utt(["T1"] * count)
        sample = build_context(utt, make_slices(count), i, n, vocab)
        populated = sum(1 for j in range(i - n, i + n + 1) if 0 <= j < count)
        assert int(sample.seg_feats[:, 1:].sum()) == populated
        assert len(sample.slices) == 2 * n + 1

    def test_samples_per_utterance(self, small_vocab):
        utt = make_utt(["T1", "T0", "T2", "T4"])
        slices = make_slices(4)
        samples = [build_context(utt, slices, i, 1, small_vocab) for i in range(4)]
        assert [s.label for s in samples] == ["T1", "T0", "T2", "T4"]
        assert [s.pos for s in samples] == [0, 1, 2, 3]


class TestArchive:
    def build_samples(self, n=5, context=1, seed=1):
        vocab = Vocabulary(("sil", "a", "ai", "an"))
        rng = np.random.default_rng(seed)
        samples = []
        for k in range(n):
            tones = ["T0", "T1", "T2", "T3", "T4", "T5"]
            utt = make_utt([tones[rng.integers(6)] for _ in range(4)], utt_id=f"u{k}")
            slices = make_slices(4, seed=seed + k)
            samples.append(build_context(utt, slices, int(rng.integers(4)), context, vocab))
        return samples

    def test_round_trip_bit_exact(self, tmp_path):
        samples = self.build_samples()
        write_archive(samples, tmp_path / "arc", mel_config={"hop_ms": 10.0})
        back, manifest = read_archive(tmp_path / "arc")
        assert manifest["context_size"] == 1
        assert manifest["mel"] == {"hop_ms": 10.0}
        for a, b in zip(samples, back):
            assert a.label == b.label and a.utt_id == b.utt_id and a.pos == b.pos
            for x, y in zip(a.slices, b.slices):
                assert x.shape == y.shape and np.array_equal(x, y)
            assert np.array_equal(a.seg_feats, b.seg_feats)

    def test_truncated_blob_detected(self, tmp_path):
        write_archive(self.build_samples(), tmp_path / "arc")
        blob = tmp_path / "arc" / "data.bin"
        data = blob.read_bytes()
        blob.write_bytes(data[:-1])
        with pytest.raises(CorruptArchive):
            read_archive(tmp_path / "arc")

    def test_unknown_version(self, tmp_path):
        import json

        write_archive(self.build_samples(), tmp_path / "arc")
        mpath = tmp_path / "arc" / "manifest.json"
        manifest = json.loads(mpath.read_text())
        manifest["version"] = 99
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(VersionError):
            read_archive(tmp_path / "arc")

    def test_empty_write_rejected(self, tmp_path):
        with pytest.raises(EmptyDataset):
            write_archive([], tmp_path / "arc")

    def test_tone_recount(self, tmp_path):
        samples = self.build_samples(n=300, seed=7)
        write_archive(samples, tmp_path / "arc")
        back, manifest = read_archive(tmp_path / "arc")
        assert len(manifest["samples"]) == 300

        def hist(ss):
            out = {}
            for s in ss:
                out[s.label] = out.get(s.label, 0) + 1
            return out

        assert hist(back) == hist(samples)


class TestTrimContext:
    def test_trim_to_center(self, small_vocab):
        utt = make_utt(["T1", "T2", "T3"])
        slices = make_slices(3)
        sample = build_context(utt, slices, 1, 1, small_vocab)
        trimmed = trim_context(sample, 0)
        assert len(trimmed.slices) == 1
        assert np.array_equal(trimmed.slices[0], slices[1])
        assert trimmed.label == sample.label

    def test_widen_rejected(self, small_vocab):
        utt = make_utt(["T1"])
        sample = build_context(utt, make_slices(1), 0, 0, small_vocab)
        from tonelab.errors import InvalidConfig

        with pytest.raises(InvalidConfig):
            trim_context(sample, 1)
