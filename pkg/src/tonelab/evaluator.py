"""Accuracy, per-tone precision/recall/F1, confusion, tone-pattern accuracy.

Tone patterns (e.g. T4-T4) are matched against the reference tone sequence
of each utterance after removing initials (T0 positions carry no lexical
tone), so a pattern means consecutive *finals*. Overlapping occurrences all
count; a pattern with no occurrence reports ``None`` rather than 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment_io import TONES, tone_index
from .errors import BadPattern, ConfigMismatch
from .feature_builder import ContextSample, trim_context
from .nn_core import Model
from .trainer import make_batch

DEFAULT_PATTERNS = ("T4-T4", "T4-T3-T4", "T2-T2")

N_TONES = len(TONES)


@dataclass
class EvalReport:
    overall_accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray
    pattern_accuracy: dict[str, float | None]
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "per_tone": {
                tone: {
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                }
                for i, tone in enumerate(TONES)
            },
            "confusion": self.confusion.tolist(),
            "pattern_accuracy": self.pattern_accuracy,
            "n_samples": self.n_samples,
        }


def parse_pattern(pattern: str | list[str]) -> tuple[str, ...]:
    if isinstance(pattern, str):
        parts = tuple(p for p in pattern.split("-") if p)
    else:
        parts = tuple(pattern)
    if not parts:
        raise BadPattern("empty tone pattern")
    for p in parts:
        if p not in TONES:
            raise BadPattern(f"unknown tone {p!r} in pattern")
    return parts


def confusion_matrix(ref: np.ndarray, pred: np.ndarray) -> np.ndarray:
    conf = np.zeros((N_TONES, N_TONES), dtype=np.int64)
    np.add.at(conf, (ref, pred), 1)
    return conf


def f1_from_confusion(confusion: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall, F1; 0/0 counts as 0."""
    confusion = np.asarray(confusion, dtype=np.float64)
    diag = np.diag(confusion)
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(col > 0, diag / np.where(col > 0, col, 1), 0.0)
        recall = np.where(row > 0, diag / np.where(row > 0, row, 1), 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1), 0.0)
    return precision, recall, f1


def pattern_accuracy(
    ref_tones: list[list[str]],
    pred_tones: list[list[str]],
    pattern: str | list[str],
) -> float | None:
    """Share of correctly predicted slots inside pattern occurrences.

    T0 positions (by reference) are dropped from both sequences first; all
    occurrences in the stripped reference count, including overlapping ones.
    Returns None when the pattern never occurs.
    """
    parts = parse_pattern(pattern)
    if len(ref_tones) != len(pred_tones):
        raise ConfigMismatch("reference and prediction utterance counts differ")

    correct = 0
    total = 0
    for ref_seq, pred_seq in zip(ref_tones, pred_tones):
        if len(ref_seq) != len(pred_seq):
            raise ConfigMismatch("reference and prediction lengths differ in an utterance")
        keep = [i for i, t in enumerate(ref_seq) if t != "T0"]
        ref_f = [ref_seq[i] for i in keep]
        pred_f = [pred_seq[i] for i in keep]
        for start in range(len(ref_f) - len(parts) + 1):
            if tuple(ref_f[start : start + len(parts)]) == parts:
                total += len(parts)
                correct += sum(
                    1
                    for k in range(len(parts))
                    if pred_f[start + k] == ref_f[start + k]
                )
    if total == 0:
        return None
    return correct / total


def predict(model: Model, samples: list[ContextSample], batch_size: int = 64) -> np.ndarray:
    """Eval-mode argmax tone indices, in sample order."""
    need = model.config.context_size if model.config.variant == "sf_ctx" else 0
    prepared = []
    for s in samples:
        if s.context_size < need:
            raise ConfigMismatch(
                f"model needs context {need}, sample has {s.context_size}"
            )
        prepared.append(trim_context(s, need))

    preds = np.empty(len(prepared), dtype=np.int64)
    for i in range(0, len(prepared), batch_size):
        batch = make_batch(prepared[i : i + batch_size])
        logits = model.forward(batch, train_mode=False).data
        preds[i : i + len(batch)] = logits.argmax(axis=1)
    return preds


def evaluate(
    model: Model,
    samples: list[ContextSample],
    patterns: tuple = DEFAULT_PATTERNS,
    batch_size: int = 64,
) -> EvalReport:
    """Score a sample set: argmax predictions -> all Table-style metrics."""
    preds = predict(model, samples, batch_size)
    refs = np.asarray([tone_index(s.label) for s in samples])
    conf = confusion_matrix(refs, preds)
    precision, recall, f1 = f1_from_confusion(conf)

    by_utt: dict[str, list[tuple[int, str, str]]] = {}
    for s, p in zip(samples, preds):
        by_utt.setdefault(s.utt_id, []).append((s.pos, s.label, TONES[p]))
    ref_seqs, pred_seqs = [], []
    for utt_id in sorted(by_utt):
        entries = sorted(by_utt[utt_id])
        ref_seqs.append([e[1] for e in entries])
        pred_seqs.append([e[2] for e in entries])

    pattern_acc = {
        str(pat): pattern_accuracy(ref_seqs, pred_seqs, pat) for pat in patterns
    }
    return EvalReport(
        overall_accuracy=float(np.trace(conf) / conf.sum()),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=conf,
        pattern_accuracy=pattern_acc,
        n_samples=len(samples),
    )


def render_markdown(reports: dict[str, EvalReport | dict]) -> str:
    """Side-by-side markdown table: overall accuracy, per-tone F1, patterns."""
    names = list(reports)

    def as_dict(r):
        return r.to_dict() if isinstance(r, EvalReport) else r

    dicts = {name: as_dict(r) for name, r in reports.items()}
    patterns: list[str] = []
    for d in dicts.values():
        for pat in d.get("pattern_accuracy", {}):
            if pat not in patterns:
                patterns.append(pat)

    def fmt(x) -> str:
        return "n/a" if x is None else f"{x:.3f}"

    lines = ["| | " + " | ".join(f"**{n}**" for n in names) + " |"]
    lines.append("|---" * (len(names) + 1) + "|")
    lines.append(
        "| Overall Accuracy | "
        + " | ".join(fmt(dicts[n]["overall_accuracy"]) for n in names)
        + " |"
    )
    for i, tone in enumerate(TONES):
        lines.append(
            f"| {tone} | "
            + " | ".join(fmt(dicts[n]["per_tone"][tone]["f1"]) for n in names)
            + " |"
        )
    for pat in patterns:
        lines.append(
            f"| {pat} | "
            + " | ".join(fmt(dicts[n]["pattern_accuracy"].get(pat)) for n in names)
            + " |"
        )
    return "\n".join(lines) + "\n"
