"""Class-balance downsampling, batch assembly, and the SGD training loop.

Initials (tone T0) dominate real alignments, so each epoch independently
drops T0 samples with probability ``1 - keep_prob``; ``keep_prob="auto"``
balances T0 down to the mean count of the other five classes. Batches are
zero-padded to the longest slice in the batch, with true lengths kept in
``frame_mask`` so padding never changes the logits.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .alignment_io import TONES, tone_index
from .errors import DivergenceError, EmptyDataset, InvalidConfig
from .feature_builder import ContextSample
from .nn_core import Batch, Model, backward

DEV_IMPROVEMENT_THRESHOLD = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 100
    early_stop_patience: int = 10
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    min_lr: float = 1e-5
    seed: int = 0
    t0_keep_prob: float | str = "auto"

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidConfig("lr must be positive")
        if not (0 <= self.momentum < 1):
            raise InvalidConfig("momentum must lie in [0, 1)")
        if not (0 < self.plateau_factor < 1):
            raise InvalidConfig("plateau_factor must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidConfig("batch_size and max_epochs must be >= 1")
        if self.t0_keep_prob != "auto" and not (0 <= float(self.t0_keep_prob) <= 1):
            raise InvalidConfig("t0_keep_prob must be in [0, 1] or 'auto'")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_loss: list[float] = field(default_factory=list)
    dev_accuracy: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "dev_loss": self.dev_loss,
            "dev_accuracy": self.dev_accuracy,
            "lr": self.lr,
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
        }


def auto_keep_prob(samples: list[ContextSample]) -> float:
    """mean(count of T1..T5) / count(T0), clamped to [0, 1]."""
    counts = Counter(s.label for s in samples)
    n_t0 = counts.get("T0", 0)
    if n_t0 == 0:
        return 1.0
    mean_others = sum(counts.get(t, 0) for t in TONES[1:]) / 5.0
    return min(1.0, mean_others / n_t0)


def keep_prob_from_counts(counts: dict[str, int]) -> float:
    n_t0 = counts.get("T0", 0)
    if n_t0 == 0:
        return 1.0
    mean_others = sum(counts.get(t, 0) for t in TONES[1:]) / 5.0
    return min(1.0, mean_others / n_t0)


def downsample_initials(
    samples: list[ContextSample], keep_prob, rng: np.random.Generator
) -> list[ContextSample]:
    """Independently keep each T0 sample with probability ``keep_prob``."""
    if keep_prob == "auto":
        keep_prob = auto_keep_prob(samples)
    keep_prob = float(keep_prob)
    if keep_prob >= 1.0:
        return list(samples)
    out = []
    for s in samples:
        if s.label == "T0" and rng.random() >= keep_prob:
            continue
        out.append(s)
    return out


def make_batch(samples: list[ContextSample]) -> Batch:
    """Assemble one zero-padded batch from samples of equal context size."""
    if not samples:
        raise EmptyDataset("cannot build a batch from zero samples")
    n_slots = len(samples[0].slices)
    feat_len = samples[0].seg_feats.shape[1]
    n_bins = samples[0].center_slice.shape[1]
    for s in samples:
        if len(s.slices) != n_slots or s.seg_feats.shape[1] != feat_len:
            raise InvalidConfig("samples disagree on context size or feature length")

    b = len(samples)
    t_max = max(max(sl.shape[0] for sl in s.slices) for s in samples)
    t_max = max(t_max, 1)
    slices = np.zeros((b, n_slots, t_max, n_bins), dtype=np.float32)
    frame_mask = np.zeros((b, n_slots), dtype=np.int64)
    seg_feats = np.zeros((b, n_slots, feat_len), dtype=np.float32)
    labels = np.zeros(b, dtype=np.int64)
    slot_mask = np.zeros((b, n_slots), dtype=bool)

    for i, s in enumerate(samples):
        seg_feats[i] = s.seg_feats
        labels[i] = tone_index(s.label)
        for j, sl in enumerate(s.slices):
            n_frames = sl.shape[0]
            frame_mask[i, j] = n_frames
            if n_frames:
                slices[i, j, :n_frames] = sl
            else:
                slot_mask[i, j] = True
    return Batch(slices, frame_mask, seg_feats, labels, slot_mask)


def make_batches(
    samples: list[ContextSample], batch_size: int, rng: np.random.Generator
) -> list[Batch]:
    """Seeded shuffle, then fixed-size zero-padded batches."""
    if not samples:
        raise EmptyDataset("no samples to batch")
    order = rng.permutation(len(samples))
    shuffled = [samples[i] for i in order]
    return [
        make_batch(shuffled[i : i + batch_size])
        for i in range(0, len(shuffled), batch_size)
    ]


def sgd_update(
    params: dict, grads: dict, velocity: dict, lr: float, momentum: float
) -> None:
    """v <- momentum * v - lr * g;  theta <- theta + v (in place)."""
    for name, tensor in params.items():
        g = grads[name]
        v = velocity[name]
        v *= momentum
        v -= lr * g
        tensor.data = tensor.data + v


class PlateauScheduler:
    """Reduce-on-plateau plus early stopping, driven by dev loss.

    An epoch improves when dev loss beats the tracked best by more than
    ``threshold``. After ``plateau_patience`` non-improving epochs the lr is
    multiplied by ``factor`` (never below ``min_lr``) and counting pauses
    for one cooldown epoch. ``early_stop_patience`` non-improving epochs in
    a row end training.
    """

    def __init__(self, lr, factor, plateau_patience, early_stop_patience, min_lr,
                 threshold=DEV_IMPROVEMENT_THRESHOLD):
        self.lr = lr
        self.factor = factor
        self.plateau_patience = plateau_patience
        self.early_stop_patience = early_stop_patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = np.inf
        self.bad_epochs = 0
        self.stale_epochs = 0
        self.cooldown = 0

    def step(self, dev_loss: float) -> bool:
        """Record one epoch's dev loss; returns True when training should stop."""
        if dev_loss < self.best - self.threshold:
            self.best = dev_loss
            self.bad_epochs = 0
            self.stale_epochs = 0
            return False
        self.stale_epochs += 1
        if self.cooldown > 0:
            self.cooldown -= 1
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.plateau_patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
                self.cooldown = 1
        return self.stale_epochs >= self.early_stop_patience


def evaluate_loss(model: Model, batches: list[Batch]) -> tuple[float, float]:
    """Mean per-sample cross-entropy and accuracy in eval mode."""
    total_loss = 0.0
    total_correct = 0
    total = 0
    for batch in batches:
        logits = model.forward(batch, train_mode=False).data
        z = logits.astype(np.float64)
        z = z - z.max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = len(batch)
        total_loss += -log_probs[np.arange(n), batch.labels].sum()
        total_correct += int((logits.argmax(axis=1) == batch.labels).sum())
        total += n
    return total_loss / total, total_correct / total


def train(
    model: Model,
    train_samples: list[ContextSample],
    dev_samples: list[ContextSample],
    cfg: TrainConfig,
) -> tuple[Model, TrainHistory]:
    """SGD with momentum, per-epoch T0 downsampling, plateau lr, early stop.

    Returns the model restored to its best-dev-loss parameters plus the full
    epoch history.
    """
    if not train_samples:
        raise EmptyDataset("empty training set")
    if not dev_samples:
        raise EmptyDataset("empty dev set")
    train_utts = {s.utt_id for s in train_samples}
    dev_utts = {s.utt_id for s in dev_samples}
    if train_utts & dev_utts:
        raise InvalidConfig(
            f"train and dev sets share utterances, e.g. {sorted(train_utts & dev_utts)[:3]}"
        )

    rng = np.random.default_rng(cfg.seed)
    velocity = {name: np.zeros_like(t.data) for name, t in model.params.items()}
    scheduler = PlateauScheduler(
        cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.early_stop_patience, cfg.min_lr
    )
    history = TrainHistory()
    dev_batches = [
        make_batch(dev_samples[i : i + cfg.batch_size])
        for i in range(0, len(dev_samples), cfg.batch_size)
    ]

    best_state = model.snapshot()
    best_dev = np.inf
    history.stop_reason = "max_epochs"

    for epoch in range(cfg.max_epochs):
        lr = scheduler.lr
        kept = downsample_initials(train_samples, cfg.t0_keep_prob, rng)
        batches = make_batches(kept, cfg.batch_size, rng)

        epoch_loss = 0.0
        for batch in batches:
            loss, grads = backward(model, batch)
            if not np.isfinite(loss):
                history.stop_reason = "diverged"
                raise DivergenceError(f"non-finite loss at epoch {epoch}", history)
            sgd_update(model.params, grads, velocity, lr, cfg.momentum)
            epoch_loss += loss * len(batch)
        epoch_loss /= len(kept)

        dev_loss, dev_acc = evaluate_loss(model, dev_batches)
        history.train_loss.append(epoch_loss)
        history.dev_loss.append(dev_loss)
        history.dev_accuracy.append(dev_acc)
        history.lr.append(lr)

        if dev_loss < best_dev:
            best_dev = dev_loss
            best_state = model.snapshot()
            history.best_epoch = epoch

        if scheduler.step(dev_loss):
            history.stop_reason = "early_stop"
            break

    model.restore(best_state)
    return model, history
