"""The residual tone-embedding network and its three classifier variants.

* ``baseline``: shared conv stack -> masked stats pooling -> 128-d embedding
  -> linear -> 6 tone logits.
* ``sf``: adds a dense layer over the centre syllable's segment feature; the
  embedding and the dense output are concatenated and passed through a
  fused hidden layer before the softmax logits.
* ``sf_ctx``: same, but all 2n+1 context slots run through the (shared)
  conv stack and all slots' segment features feed the dense layer.

Placeholder slots (empty context at utterance edges) bypass the conv stack
and contribute exact-zero embeddings and zero segment features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    EmptySegment,
    InvalidConfig,
    NumericError,
    ShapeError,
)
from . import autograd as ag

VARIANTS = ("baseline", "sf", "sf_ctx")

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    vocab_size: int = 0
    context_size: int = 0
    conv_channels: tuple[int, ...] = (8, 16, 32, 64)
    blocks_per_stage: tuple[int, ...] = (1, 1, 1, 1)
    embedding_dim: int = 128
    sf_dense_dim: int = 32
    fusion_hidden_dim: int = 128
    n_classes: int = 6
    n_mel_bins: int = 64
    stem_stride: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.embedding_dim <= 0:
            raise InvalidConfig("embedding_dim must be positive")
        if len(self.conv_channels) != len(self.blocks_per_stage):
            raise InvalidConfig("conv_channels and blocks_per_stage lengths differ")
        if not self.conv_channels:
            raise InvalidConfig("need at least one conv stage")
        if self.variant in ("sf", "sf_ctx") and self.vocab_size <= 0:
            raise InvalidConfig(f"variant {self.variant} requires vocab_size > 0")
        if self.variant != "sf_ctx" and self.context_size != 0:
            raise InvalidConfig("only sf_ctx uses a non-zero context size")
        if self.context_size < 0:
            raise InvalidConfig("context_size must be >= 0")
        if any(s not in (1, 2) for s in self.stem_stride):
            raise InvalidConfig("stem_stride entries must be 1 or 2")
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "blocks_per_stage", tuple(self.blocks_per_stage))
        object.__setattr__(self, "stem_stride", tuple(self.stem_stride))

    @property
    def n_slots(self) -> int:
        # sf_ctx with n = 0 degenerates to the sf wiring.
        return 2 * self.context_size + 1 if self.variant == "sf_ctx" else 1

    @property
    def feat_len(self) -> int:
        return 1 + self.vocab_size

    @property
    def pooled_dim(self) -> int:
        f = self.n_mel_bins
        if self.stem_stride[1] == 2:
            f = (f - 1) // 2 + 1
        for _ in self.conv_channels[1:]:
            f = (f - 1) // 2 + 1
        return 2 * self.conv_channels[-1] * f

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "vocab_size": self.vocab_size,
            "context_size": self.context_size,
            "conv_channels": list(self.conv_channels),
            "blocks_per_stage": list(self.blocks_per_stage),
            "embedding_dim": self.embedding_dim,
            "sf_dense_dim": self.sf_dense_dim,
            "fusion_hidden_dim": self.fusion_hidden_dim,
            "n_classes": self.n_classes,
            "n_mel_bins": self.n_mel_bins,
            "stem_stride": list(self.stem_stride),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("conv_channels", "blocks_per_stage", "stem_stride"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class Batch:
    """Zero-padded context windows ready for the network.

    ``slices`` is [B, S, T, F]; padded frames beyond ``frame_mask`` are zero.
    ``slot_mask`` is True where a slot is an out-of-utterance placeholder
    (such slots also have ``frame_mask`` 0).
    """

    slices: np.ndarray
    frame_mask: np.ndarray
    seg_feats: np.ndarray
    labels: np.ndarray
    slot_mask: np.ndarray

    def __len__(self) -> int:
        return self.slices.shape[0]

    @property
    def n_slots(self) -> int:
        return self.slices.shape[1]


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Model:
    """Parameter set plus wiring for one classifier variant."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: dict[str, ag.Tensor] = {}
        self.bn_running: dict[str, dict] = {}

    # -- construction -------------------------------------------------------
    def _add_param(self, name: str, value: np.ndarray) -> None:
        self.params[name] = ag.param(value.astype(self.dtype))

    def _add_bn(self, name: str, channels: int) -> None:
        self._add_param(f"{name}.gamma", np.ones(channels))
        self._add_param(f"{name}.beta", np.zeros(channels))
        self.bn_running[name] = {
            "mean": np.zeros(channels, dtype=np.float64),
            "var": np.ones(channels, dtype=np.float64),
        }

    @classmethod
    def build(cls, config: ModelConfig, seed: int, dtype=np.float32) -> "Model":
        """Deterministic construction: He-uniform conv/dense, BN at (1, 0)."""
        model = cls(config, dtype)
        rng = np.random.default_rng(seed)
        ch = config.conv_channels

        model._add_param("stem.w", _he_uniform(rng, (ch[0], 1, 3, 3), 9, dtype))
        model._add_bn("stem.bn", ch[0])

        in_c = ch[0]
        for s, (out_c, n_blocks) in enumerate(zip(ch, config.blocks_per_stage)):
            for b in range(n_blocks):
                stride = 2 if (s > 0 and b == 0) else 1
                prefix = f"s{s}.b{b}"
                model._add_param(
                    f"{prefix}.conv1.w", _he_uniform(rng, (out_c, in_c, 3, 3), in_c * 9, dtype)
                )
                model._add_bn(f"{prefix}.bn1", out_c)
                model._add_param(
                    f"{prefix}.conv2.w", _he_uniform(rng, (out_c, out_c, 3, 3), out_c * 9, dtype)
                )
                model._add_bn(f"{prefix}.bn2", out_c)
                if stride != 1 or in_c != out_c:
                    model._add_param(
                        f"{prefix}.short.w", _he_uniform(rng, (out_c, in_c, 1, 1), in_c, dtype)
                    )
                    model._add_bn(f"{prefix}.shortbn", out_c)
                in_c = out_c

        pooled = config.pooled_dim
        model._add_param("embed.w", _he_uniform(rng, (pooled, config.embedding_dim), pooled, dtype))
        model._add_param("embed.b", np.zeros(config.embedding_dim))

        if config.variant in ("sf", "sf_ctx"):
            sf_in = config.n_slots * config.feat_len
            model._add_param("sf.w", _he_uniform(rng, (sf_in, config.sf_dense_dim), sf_in, dtype))
            model._add_param("sf.b", np.zeros(config.sf_dense_dim))
            fuse_in = config.n_slots * config.embedding_dim + config.sf_dense_dim
            model._add_param(
                "fusion.w", _he_uniform(rng, (fuse_in, config.fusion_hidden_dim), fuse_in, dtype)
            )
            model._add_param("fusion.b", np.zeros(config.fusion_hidden_dim))
            out_in = config.fusion_hidden_dim
        else:
            out_in = config.n_slots * config.embedding_dim

        model._add_param("out.w", _he_uniform(rng, (out_in, config.n_classes), out_in, dtype))
        model._add_param("out.b", np.zeros(config.n_classes))
        return model

    # -- bookkeeping -------------------------------------------------------
    def parameters(self) -> dict[str, ag.Tensor]:
        return self.params

    def num_params(self) -> int:
        return sum(int(t.data.size) for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def snapshot(self) -> dict:
        return {
            "params": {k: t.data.copy() for k, t in self.params.items()},
            "bn": {k: {s: v.copy() for s, v in st.items()} for k, st in self.bn_running.items()},
        }

    def restore(self, state: dict) -> None:
        for k, v in state["params"].items():
            self.params[k].data = v.copy()
        for k, st in state["bn"].items():
            self.bn_running[k] = {s: v.copy() for s, v in st.items()}

    def astype(self, dtype) -> "Model":
        out = Model(self.config, dtype)
        for k, t in self.params.items():
            out.params[k] = ag.param(t.data.astype(dtype))
        out.bn_running = {
            k: {s: v.copy() for s, v in st.items()} for k, st in self.bn_running.items()
        }
        return out

    # -- forward -----------------------------------------------------------
    def _conv_block(self, x, mask, lengths, prefix: str, stride: int, train: bool):
        p = self.params
        s2 = (stride, stride)
        y = ag.conv2d(x, p[f"{prefix}.conv1.w"], stride=s2, padding=(1, 1))
        if stride == 2:
            lengths = (lengths - 1) // 2 + 1
            mask = self._length_mask(lengths, y.data.shape[2], y.data.dtype)
        y = ag.batchnorm2d_masked(
            y, p[f"{prefix}.bn1.gamma"], p[f"{prefix}.bn1.beta"], mask,
            self.bn_running[f"{prefix}.bn1"], train, BN_MOMENTUM, BN_EPS,
        )
        y = ag.relu(y)
        y = ag.conv2d(y, p[f"{prefix}.conv2.w"], stride=(1, 1), padding=(1, 1))
        y = ag.batchnorm2d_masked(
            y, p[f"{prefix}.bn2.gamma"], p[f"{prefix}.bn2.beta"], mask,
            self.bn_running[f"{prefix}.bn2"], train, BN_MOMENTUM, BN_EPS,
        )
        if f"{prefix}.short.w" in p:
            idn = ag.conv2d(x, p[f"{prefix}.short.w"], stride=s2, padding=(0, 0))
            idn = ag.batchnorm2d_masked(
                idn, p[f"{prefix}.shortbn.gamma"], p[f"{prefix}.shortbn.beta"], mask,
                self.bn_running[f"{prefix}.shortbn"], train, BN_MOMENTUM, BN_EPS,
            )
        else:
            idn = x
        return ag.relu(ag.add(y, idn)), mask, lengths

    @staticmethod
    def _length_mask(lengths: np.ndarray, t: int, dtype) -> np.ndarray:
        m = (np.arange(t)[None, :] < lengths[:, None]).astype(dtype)
        return m[:, None, :, None]

    def embed_slices(self, x: np.ndarray, lengths: np.ndarray, train: bool) -> ag.Tensor:
        """Run [K, 1, T, F] slices through the shared conv stack -> [K, E]."""
        p = self.params
        h = ag.constant(x)
        h = ag.conv2d(h, p["stem.w"], stride=self.config.stem_stride, padding=(1, 1))
        if self.config.stem_stride[0] == 2:
            lengths = (lengths - 1) // 2 + 1
        mask = self._length_mask(lengths, h.data.shape[2], x.dtype)
        h = ag.batchnorm2d_masked(
            h, p["stem.bn.gamma"], p["stem.bn.beta"], mask,
            self.bn_running["stem.bn"], train, BN_MOMENTUM, BN_EPS,
        )
        h = ag.relu(h)

        for s, n_blocks in enumerate(self.config.blocks_per_stage):
            for b in range(n_blocks):
                stride = 2 if (s > 0 and b == 0) else 1
                h, mask, lengths = self._conv_block(h, mask, lengths, f"s{s}.b{b}", stride, train)

        k, c, t, f = h.data.shape
        h = ag.transpose(h, (0, 2, 1, 3))
        h = ag.reshape(h, (k, t, c * f))
        pooled = ag.stats_pool_masked(h, lengths)
        return ag.add(ag.matmul(pooled, p["embed.w"]), p["embed.b"])

    def forward(self, batch: Batch, train_mode: bool) -> ag.Tensor:
        """Logits [B, n_classes]; the returned tensor carries the backward graph."""
        cfg = self.config
        if batch.slices.ndim != 4:
            raise ShapeError(f"batch slices must be 4-D, got {batch.slices.shape}")
        b, s, t, f = batch.slices.shape
        if s != cfg.n_slots:
            raise ShapeError(f"batch has {s} slots, model variant expects {cfg.n_slots}")
        if f != cfg.n_mel_bins:
            raise ShapeError(f"batch has {f} mel bins, model expects {cfg.n_mel_bins}")

        flat_lengths = batch.frame_mask.reshape(b * s).astype(np.int64)
        real = np.flatnonzero(flat_lengths > 0)
        if real.size == 0:
            raise EmptySegment("batch contains no real slices")
        x = batch.slices.reshape(b * s, t, f)[real][:, None, :, :].astype(self.dtype)
        emb = self.embed_slices(x, flat_lengths[real], train_mode)

        emb_all = ag.scatter_rows(emb, real, b * s)
        emb_flat = ag.reshape(emb_all, (b, s * cfg.embedding_dim))

        if cfg.variant == "baseline":
            logits = ag.add(ag.matmul(emb_flat, self.params["out.w"]), self.params["out.b"])
        else:
            if batch.seg_feats.shape[2] != cfg.feat_len:
                raise ShapeError(
                    f"segment features have width {batch.seg_feats.shape[2]}, "
                    f"model expects {cfg.feat_len}"
                )
            sf_in = ag.constant(batch.seg_feats.reshape(b, s * cfg.feat_len).astype(self.dtype))
            h_sf = ag.relu(ag.add(ag.matmul(sf_in, self.params["sf.w"]), self.params["sf.b"]))
            z = ag.concat([emb_flat, h_sf], axis=1)
            hidden = ag.relu(ag.add(ag.matmul(z, self.params["fusion.w"]), self.params["fusion.b"]))
            logits = ag.add(ag.matmul(hidden, self.params["out.w"]), self.params["out.b"])

        if not np.all(np.isfinite(logits.data)):
            raise NumericError("non-finite activation in forward pass")
        return logits

    def loss(self, batch: Batch, train_mode: bool = True) -> ag.Tensor:
        return ag.cross_entropy(self.forward(batch, train_mode), batch.labels)


def build_model(config: ModelConfig, seed: int, dtype=np.float32) -> Model:
    return Model.build(config, seed, dtype)


def forward(model: Model, batch: Batch, train_mode: bool) -> np.ndarray:
    return model.forward(batch, train_mode).data


def backward(model: Model, batch: Batch, labels: np.ndarray | None = None):
    """One training evaluation: mean cross-entropy and all parameter grads."""
    if labels is not None and not np.array_equal(labels, batch.labels):
        batch = Batch(batch.slices, batch.frame_mask, batch.seg_feats,
                      np.asarray(labels), batch.slot_mask)
    model.zero_grad()
    loss = model.loss(batch, train_mode=True)
    loss.backward()
    grads = {name: t.grad for name, t in model.params.items()}
    return float(loss.data), grads


def stats_pool(frames: np.ndarray, valid: int) -> np.ndarray:
    """Masked mean-and-std pooling of one [T, C] matrix -> [2C] vector."""
    frames = np.asarray(frames)
    if valid < 1:
        raise EmptySegment("statistics pooling needs at least one valid frame")
    if frames.ndim != 2 or frames.shape[0] < valid:
        raise ShapeError(f"need a [T >= valid, C] matrix, got {frames.shape}")
    pooled = ag.stats_pool_masked(
        ag.constant(frames[None, :, :]), np.asarray([valid], dtype=np.int64)
    )
    return pooled.data[0]


def grad_check(
    model: Model,
    batch: Batch,
    eps: float = 1e-5,
    n_samples: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples ``n_samples`` parameter entries (all entries when the model is
    smaller). The denominator is floored at 1e-4 so near-zero gradients do
    not blow up the ratio through finite-difference noise.
    """
    loss0 = model.loss(batch)
    model.zero_grad()
    loss0.backward()
    analytic = {name: t.grad.copy() for name, t in model.params.items()}

    entries = []
    for name, t in model.params.items():
        for flat_idx in range(t.data.size):
            entries.append((name, flat_idx))
    rng = np.random.default_rng(seed)
    if len(entries) > n_samples:
        chosen = [entries[i] for i in rng.choice(len(entries), size=n_samples, replace=False)]
    else:
        chosen = entries

    worst = 0.0
    for name, flat_idx in chosen:
        data = model.params[name].data
        original = data.flat[flat_idx]
        data.flat[flat_idx] = original + eps
        loss_plus = float(model.loss(batch).data)
        data.flat[flat_idx] = original - eps
        loss_minus = float(model.loss(batch).data)
        data.flat[flat_idx] = original

        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        a = float(analytic[name].flat[flat_idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-4)
        worst = max(worst, rel)
    return worst
