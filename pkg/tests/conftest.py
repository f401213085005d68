import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tonelab.alignment_io import Vocabulary
from tonelab.nn_core import Batch, Model, ModelConfig


TINY_MODEL_KWARGS = dict(
    conv_channels=(2, 3),
    blocks_per_stage=(1, 1),
    embedding_dim=6,
    sf_dense_dim=4,
    fusion_hidden_dim=8,
    n_mel_bins=8,
)


@pytest.fixture
def small_vocab():
    return Vocabulary(("sil", "a", "ai", "an"))


def make_tiny_model(variant="sf_ctx", context_size=1, vocab_size=5, seed=0,
                    dtype=np.float64, **overrides):
    kwargs = dict(TINY_MODEL_KWARGS)
    kwargs.update(overrides)
    cfg = ModelConfig(
        variant=variant,
        vocab_size=vocab_size if variant != "baseline" else vocab_size,
        context_size=context_size if variant == "sf_ctx" else 0,
        **kwargs,
    )
    return Model.build(cfg, seed=seed, dtype=dtype)


def make_random_batch(cfg: ModelConfig, b=3, t=7, seed=0, dtype=np.float64,
                      with_placeholder=True):
    """A consistent random batch for a given model config."""
    rng = np.random.default_rng(seed)
    s = cfg.n_slots
    slices = rng.standard_normal((b, s, t, cfg.n_mel_bins)).astype(dtype)
    frame_mask = rng.integers(2, t + 1, size=(b, s))
    slot_mask = np.zeros((b, s), dtype=bool)
    if with_placeholder and s > 1:
        slot_mask[0, 0] = True
        frame_mask[0, 0] = 0
    for i in range(b):
        for j in range(s):
            slices[i, j, frame_mask[i, j]:] = 0.0
    seg_feats = np.zeros((b, s, cfg.feat_len), dtype=dtype)
    for i in range(b):
        for j in range(s):
            if frame_mask[i, j]:
                seg_feats[i, j, 0] = rng.uniform(0.05, 0.3)
                seg_feats[i, j, 1 + int(rng.integers(cfg.vocab_size))] = 1.0
    labels = rng.integers(0, cfg.n_classes, size=b)
    return Batch(slices, frame_mask, seg_feats, labels, slot_mask)
