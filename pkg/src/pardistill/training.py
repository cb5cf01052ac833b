"""Training pipeline: teachers on clean data, frozen soft-label extraction,
students on corrupted data, and the hard-label / multi-condition baselines.

All trainers share one minibatch SGD loop over (features, target-distribution)
pairs, so hard-label training is literally soft-label training against one-hot
rows.  That shared path is what makes the reduction exact: distilling from
one-hot soft labels reproduces hard-label training bit for bit given the same
seed, shuffle order and batching.

Frames (not utterances) are shuffled each epoch with the config RNG and
batched in shuffle order; the last short batch is kept.  The minibatch
objective is the frame-mean soft cross-entropy, so the learning rate keeps
its meaning across batch sizes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ParallelCorpus, splice
from .errors import FormatError, UsageError, ValidationError
from .losses import grad_logits, mean_soft_ce, one_hot
from .network import (
    Architecture,
    ModelParams,
    backward,
    forward,
    init_params,
    params_hash,
    sgd_step,
)
from .numerics import RngStream, softmax

SOFT_FORMAT_VERSION = 1

IMPROVEMENT_EPS = 1e-6

BASELINE_MODES = ("far-hard", "multi-cond")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 40
    patience: int = 3
    seed: int = 0
    shuffle: bool = True
    context: int = 11

    def __post_init__(self):
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise UsageError(f"lr: must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise UsageError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise UsageError(f"max_epochs: must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise UsageError(f"patience: must be >= 1, got {self.patience}")
        if self.context < 1 or self.context % 2 == 0:
            raise UsageError(f"context: must be odd and >= 1, got {self.context}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < (1 << 64):
            raise UsageError(f"seed: must be an integer in [0, 2^64), got {self.seed!r}")


@dataclass(frozen=True)
class TeacherTier:
    """One rung of the teacher-quality ladder: capacity plus epoch budget."""

    name: str
    hidden: tuple[int, ...]
    max_epochs: int

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if not self.name:
            raise UsageError("tier name must be non-empty")
        if self.max_epochs < 1:
            raise UsageError(f"tier {self.name}: max_epochs must be >= 1")


DEFAULT_TIERS = (
    TeacherTier("t1", (32,), 4),
    TeacherTier("t2", (64, 64), 16),
    TeacherTier("t3", (128, 128), 40),
)

DEFAULT_STUDENT_HIDDEN = (64, 64)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_loss: list[float] = field(default_factory=list)
    dev_fer: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    wall_time: float = 0.0

    def to_csv(self, path) -> None:
        lines = ["epoch,train_loss,dev_loss,dev_fer"]
        for i in range(len(self.train_loss)):
            lines.append(f"{i + 1},{self.train_loss[i]!r},{self.dev_loss[i]!r},{self.dev_fer[i]!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class SoftLabelSet:
    """Per-frame teacher posteriors keyed by utterance id (train + dev)."""

    labels: dict[str, np.ndarray]
    teacher_hash: str
    temperature: float
    num_classes: int

    def quantized(self) -> "SoftLabelSet":
        """Rows rounded through float32, matching the on-disk representation."""
        rounded = {uid: rows.astype("<f4").astype(np.float64) for uid, rows in self.labels.items()}
        return SoftLabelSet(rounded, self.teacher_hash, self.temperature, self.num_classes)


def early_stop(dev_losses, patience: int) -> tuple[bool, int]:
    """Patience rule on the dev loss: stop after ``patience`` consecutive
    epochs without improving the best loss by more than IMPROVEMENT_EPS.

    Returns (should_stop, best_epoch), epochs 1-based, earliest on ties.
    """
    if len(dev_losses) < 1:
        raise UsageError("early_stop: need at least one completed epoch")
    if patience < 1:
        raise UsageError(f"patience: must be >= 1, got {patience}")
    best = np.inf
    bad = 0
    for value in dev_losses:
        if value < best - IMPROVEMENT_EPS:
            bad = 0
        else:
            bad += 1
        if value < best:
            best = value
    best_epoch = int(np.argmin(dev_losses)) + 1
    return bad >= patience, best_epoch


def _stack_split(corpus: ParallelCorpus, split: str, use_far: bool, context: int):
    """Spliced frames and labels of a split, concatenated in utterance order."""
    feats, labels = [], []
    for utt in corpus.split(split):
        frames = utt.far.frames if use_far else utt.clean.frames
        feats.append(splice(frames, context))
        labels.append(utt.labels)
    return np.concatenate(feats, axis=0), np.concatenate(labels)


def _infer_context(input_dim: int, feature_dim: int) -> int:
    context, rem = divmod(input_dim, feature_dim)
    if rem != 0 or context < 1 or context % 2 == 0:
        raise UsageError(
            f"model input_dim {input_dim} is not an odd multiple of feature_dim {feature_dim}"
        )
    return context


def _run_training(train_x, train_p, dev_x, dev_p, dev_labels, arch: Architecture,
                  cfg: TrainConfig, max_epochs: int, epoch_callback=None):
    """Shared SGD loop. Returns (best-dev checkpoint, history)."""
    start = time.perf_counter()
    init_rng = RngStream(cfg.seed).derive("init")
    shuffle_rng = RngStream(cfg.seed).derive("shuffle")
    params = init_params(arch, init_rng)

    n = train_x.shape[0]
    history = TrainHistory()
    best_val = np.inf
    best_params = params.copy()
    for epoch in range(1, max_epochs + 1):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            trace = forward(params, train_x[idx])
            loss_sum += mean_soft_ce(train_p[idx], trace.posteriors) * idx.size
            grad = grad_logits(train_p[idx], trace.posteriors) / idx.size
            params = sgd_step(params, backward(params, trace, grad), cfg.lr)

        dev_post = forward(params, dev_x).posteriors
        history.train_loss.append(loss_sum / n)
        history.dev_loss.append(mean_soft_ce(dev_p, dev_post))
        history.dev_fer.append(float(np.mean(np.argmax(dev_post, axis=1) != dev_labels)))
        if history.dev_loss[-1] < best_val:
            best_val = history.dev_loss[-1]
            best_params = params.copy()
        if epoch_callback is not None:
            epoch_callback(epoch, params)
        stop, best_epoch = early_stop(history.dev_loss, cfg.patience)
        history.best_epoch = best_epoch
        history.stopped_epoch = epoch
        if stop:
            break
    history.wall_time = time.perf_counter() - start
    return best_params, history


def train_teacher(corpus: ParallelCorpus, tier: TeacherTier, cfg: TrainConfig,
                  epoch_callback=None) -> tuple[ModelParams, TrainHistory]:
    """Hard-label training on spliced clean frames; tier sets width and budget."""
    arch = Architecture(corpus.feature_dim * cfg.context, tier.hidden, corpus.num_classes)
    train_x, train_labels = _stack_split(corpus, "train", use_far=False, context=cfg.context)
    dev_x, dev_labels = _stack_split(corpus, "dev", use_far=False, context=cfg.context)
    return _run_training(
        train_x, one_hot(train_labels, corpus.num_classes),
        dev_x, one_hot(dev_labels, corpus.num_classes), dev_labels,
        arch, cfg, tier.max_epochs, epoch_callback,
    )


def compute_soft_labels(teacher: ModelParams, corpus: ParallelCorpus,
                        temperature: float = 1.0) -> SoftLabelSet:
    """Frozen-teacher posteriors on clean frames for every train/dev utterance.

    The teacher is read-only here; posteriors are computed frame-level with
    the logits divided by ``temperature`` before the softmax (1 = as trained).
    """
    if not (np.isfinite(temperature) and temperature > 0):
        raise UsageError(f"temperature must be > 0, got {temperature}")
    if teacher.arch.output_dim != corpus.num_classes:
        raise UsageError(
            f"teacher output_dim {teacher.arch.output_dim} != corpus classes {corpus.num_classes}"
        )
    context = _infer_context(teacher.arch.input_dim, corpus.feature_dim)
    labels: dict[str, np.ndarray] = {}
    for split in ("train", "dev"):
        for utt in corpus.split(split):
            trace = forward(teacher, splice(utt.clean.frames, context))
            if temperature == 1.0:
                labels[utt.id] = trace.posteriors
            else:
                labels[utt.id] = softmax(trace.logits / temperature, axis=1)
    return SoftLabelSet(labels, params_hash(teacher), temperature, corpus.num_classes)


def _gather_soft_targets(corpus: ParallelCorpus, soft: SoftLabelSet, split: str) -> np.ndarray:
    rows = []
    for utt in corpus.split(split):
        if utt.id not in soft.labels:
            raise ValidationError(f"soft labels missing utterance {utt.id!r}")
        target = soft.labels[utt.id]
        if target.shape != (utt.num_frames, corpus.num_classes):
            raise ValidationError(
                f"soft labels for {utt.id!r} have shape {target.shape}, "
                f"expected ({utt.num_frames}, {corpus.num_classes})"
            )
        rows.append(target)
    return np.concatenate(rows, axis=0)


def distill_student(corpus: ParallelCorpus, soft: SoftLabelSet, arch: Architecture,
                    cfg: TrainConfig, epoch_callback=None) -> tuple[ModelParams, TrainHistory]:
    """Train a student on spliced far frames against aligned clean-side soft labels.

    Minimizes the frame-mean soft cross-entropy (equivalently the KL divergence
    up to the teacher-entropy constant); early stopping watches the same
    objective on the dev split.  The teacher is never touched.
    """
    if soft.num_classes != corpus.num_classes or arch.output_dim != corpus.num_classes:
        raise UsageError("class count mismatch between corpus, soft labels and architecture")
    context = _infer_context(arch.input_dim, corpus.feature_dim)
    if context != cfg.context:
        raise UsageError(f"architecture context {context} != config context {cfg.context}")
    train_x, _ = _stack_split(corpus, "train", use_far=True, context=context)
    dev_x, dev_labels = _stack_split(corpus, "dev", use_far=True, context=context)
    train_p = _gather_soft_targets(corpus, soft, "train")
    dev_p = _gather_soft_targets(corpus, soft, "dev")
    return _run_training(train_x, train_p, dev_x, dev_p, dev_labels,
                         arch, cfg, cfg.max_epochs, epoch_callback)


def train_baseline(corpus: ParallelCorpus, mode: str, arch: Architecture, cfg: TrainConfig,
                   epoch_callback=None) -> tuple[ModelParams, TrainHistory]:
    """Hard-label baselines: ``far-hard`` (far frames only) or ``multi-cond``
    (clean and far frames pooled).  Both early-stop on the far dev split."""
    if mode not in BASELINE_MODES:
        raise UsageError(f"unknown baseline mode {mode!r}, expected one of {BASELINE_MODES}")
    if arch.output_dim != corpus.num_classes:
        raise UsageError(f"arch output_dim {arch.output_dim} != corpus classes {corpus.num_classes}")
    context = _infer_context(arch.input_dim, corpus.feature_dim)
    if context != cfg.context:
        raise UsageError(f"architecture context {context} != config context {cfg.context}")
    far_x, far_labels = _stack_split(corpus, "train", use_far=True, context=context)
    if mode == "far-hard":
        train_x, train_labels = far_x, far_labels
    else:
        clean_x, clean_labels = _stack_split(corpus, "train", use_far=False, context=context)
        train_x = np.concatenate([clean_x, far_x], axis=0)
        train_labels = np.concatenate([clean_labels, far_labels])
    dev_x, dev_labels = _stack_split(corpus, "dev", use_far=True, context=context)
    return _run_training(
        train_x, one_hot(train_labels, corpus.num_classes),
        dev_x, one_hot(dev_labels, corpus.num_classes), dev_labels,
        arch, cfg, cfg.max_epochs, epoch_callback,
    )


def save_soft_labels(soft: SoftLabelSet, directory) -> dict:
    """Write ``softlabels.json`` plus one ``<id>.soft.f32`` per utterance."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": SOFT_FORMAT_VERSION,
        "teacher_hash": soft.teacher_hash,
        "temperature": soft.temperature,
        "num_classes": soft.num_classes,
        "utterances": [
            {"id": uid, "frames": int(rows.shape[0])} for uid, rows in soft.labels.items()
        ],
    }
    for uid, rows in soft.labels.items():
        (directory / f"{uid}.soft.f32").write_bytes(
            np.ascontiguousarray(rows, dtype="<f4").tobytes()
        )
    with open(directory / "softlabels.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_soft_labels(directory) -> SoftLabelSet:
    directory = Path(directory)
    with open(directory / "softlabels.json", "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{directory}: malformed softlabels.json: {exc}") from exc
    if manifest.get("version") != SOFT_FORMAT_VERSION:
        raise FormatError(f"{directory}: unsupported soft-label version {manifest.get('version')!r}")
    try:
        s = int(manifest["num_classes"])
        temperature = float(manifest["temperature"])
        teacher_hash = str(manifest["teacher_hash"])
        entries = list(manifest["utterances"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{directory}: manifest missing or malformed field: {exc}") from exc
    # float32 quantization loosens the row-sum invariant in proportion to S
    tol = 1e-5 + 2e-7 * s
    labels: dict[str, np.ndarray] = {}
    for entry in entries:
        uid, t = str(entry["id"]), int(entry["frames"])
        raw = (directory / f"{uid}.soft.f32").read_bytes()
        if len(raw) != t * s * 4:
            raise FormatError(f"{uid}: soft.f32 is {len(raw)} bytes, expected {t * s * 4}")
        rows = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(t, s)
        if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > tol):
            raise FormatError(f"{uid}: soft label rows are not valid distributions")
        labels[uid] = rows
    return SoftLabelSet(labels, teacher_hash, temperature, s)
