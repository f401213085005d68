"""Verify the hand-written backward pass against finite differences.

Builds the tiny 64-bit context model, compares every sampled analytic
gradient to (L(theta+eps) - L(theta-eps)) / 2 eps, and demonstrates that a
deliberately corrupted gradient is caught.

Run:  python demos/04_gradient_check.py
"""

import numpy as np

from tonelab import nn_core
from tonelab.nn_core import Batch, autograd as ag, grad_check

cfg = nn_core.ModelConfig(
    variant="sf_ctx", vocab_size=5, context_size=1,
    conv_channels=(2, 3), blocks_per_stage=(1, 1),
    embedding_dim=6, sf_dense_dim=4, fusion_hidden_dim=8, n_mel_bins=8,
)
model = nn_core.build_model(cfg, seed=3, dtype=np.float64)
print(f"tiny sf_ctx model: {model.num_params()} parameters (float64)")

rng = np.random.default_rng(3)
b, s, t = 4, cfg.n_slots, 7
slices = rng.standard_normal((b, s, t, cfg.n_mel_bins))
frame_mask = rng.integers(2, t + 1, size=(b, s))
slot_mask = np.zeros((b, s), dtype=bool)
slot_mask[0, 0] = True
frame_mask[0, 0] = 0
for i in range(b):
    for j in range(s):
        slices[i, j, frame_mask[i, j]:] = 0.0
seg_feats = np.zeros((b, s, cfg.feat_len))
seg_feats[:, :, 0] = rng.uniform(0.05, 0.3, size=(b, s))
labels = rng.integers(0, 6, size=b)
batch = Batch(slices, frame_mask, seg_feats, labels, slot_mask)

err = grad_check(model, batch, eps=1e-5, n_samples=300, seed=1)
print(f"max relative gradient error over 300 sampled parameters: {err:.2e}")
assert err < 1e-5


def doubled(x):  # identity forward, doubled backward: a deliberate bug
    return ag.Tensor(x.data, parents=(x,), backward_fn=lambda g: (2.0 * g,))


class Corrupted:
    params = model.params

    def parameters(self):
        return model.params

    def zero_grad(self):
        model.zero_grad()

    def loss(self, b_):
        return doubled(model.loss(b_))


err_bad = grad_check(Corrupted(), batch, eps=1e-5, n_samples=60, seed=1)
print(f"same check with a gradient deliberately scaled by 2: {err_bad:.3f} (~0.5)")
