"""Synthetic parallel corpora: clean/corrupted feature streams with shared labels.

A corpus is a desk-scale stand-in for time-synchronized dual-microphone
recordings.  Clean frames are per-class Gaussians around class means; labels
come from a segment process (class transitions plus a dwell length per
segment); the "far" stream is the clean stream pushed through a corruption
channel (temporal smearing kernel, gain, bias, additive Gaussian noise).

On-disk layout (all multi-byte values little-endian):

    <dir>/manifest.json            version, class/feature counts, splits, channel, seed
    <dir>/<id>.clean.f32           T x D float32, row-major
    <dir>/<id>.far.f32             T x D float32, row-major
    <dir>/<id>.labels.u16          T uint16 class indices
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, UsageError
from .numerics import RngStream

SPLITS = ("train", "dev", "eval")

CORPUS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ChannelSpec:
    """Corruption channel: y_t = gain * sum_k h_k x_{t-k} + bias + N(0, sigma^2 I)."""

    kernel: tuple[float, ...] = (0.6, 0.3, 0.1)
    noise_sigma: float = 0.5
    gain: float = 1.0
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(float(h) for h in self.kernel))
        if len(self.kernel) < 1:
            raise UsageError("channel.kernel: must have at least one tap")
        if not all(np.isfinite(self.kernel)):
            raise UsageError("channel.kernel: taps must be finite")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise UsageError(f"channel.noise_sigma: must be >= 0, got {self.noise_sigma}")
        if not (np.isfinite(self.gain) and np.isfinite(self.bias)):
            raise UsageError("channel.gain/bias: must be finite")

    def to_dict(self) -> dict:
        return {
            "kernel": list(self.kernel),
            "noise_sigma": self.noise_sigma,
            "gain": self.gain,
            "bias": self.bias,
        }


@dataclass(frozen=True)
class CorpusSpec:
    """Generator settings for a parallel corpus.

    Defaults give the desk-scale corpus used throughout: 20 classes, 12-dim
    features, 600/100/100 utterances of 40-120 frames, segments of 5-20
    frames, uniform class transitions, moderately corrupting channel.
    """

    num_classes: int = 20
    feature_dim: int = 12
    train_utterances: int = 600
    dev_utterances: int = 100
    eval_utterances: int = 100
    min_utterance_frames: int = 40
    max_utterance_frames: int = 120
    min_segment_frames: int = 5
    max_segment_frames: int = 20
    transitions: object = "uniform"  # "uniform" or an S x S row-stochastic matrix
    class_mean_spread: float = 2.0
    class_scale: float = 1.0
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.num_classes <= 65536:
            raise UsageError(f"num_classes: must be in [2, 65536], got {self.num_classes}")
        if self.feature_dim < 1:
            raise UsageError(f"feature_dim: must be >= 1, got {self.feature_dim}")
        for name in ("train_utterances", "dev_utterances", "eval_utterances"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name}: must be >= 1, got {getattr(self, name)}")
        if not 1 <= self.min_utterance_frames <= self.max_utterance_frames:
            raise UsageError("min/max_utterance_frames: need 1 <= min <= max")
        if not 1 <= self.min_segment_frames <= self.max_segment_frames:
            raise UsageError("min/max_segment_frames: need 1 <= min <= max")
        if not (np.isfinite(self.class_mean_spread) and self.class_mean_spread >= 0):
            raise UsageError(f"class_mean_spread: must be >= 0, got {self.class_mean_spread}")
        if not (np.isfinite(self.class_scale) and self.class_scale >= 0):
            raise UsageError(f"class_scale: must be >= 0, got {self.class_scale}")
        object.__setattr__(self, "transitions", self._check_transitions())
        if not isinstance(self.seed, int) or not 0 <= self.seed < (1 << 64):
            raise UsageError(f"seed: must be an integer in [0, 2^64), got {self.seed!r}")

    def _check_transitions(self):
        if isinstance(self.transitions, str):
            if self.transitions != "uniform":
                raise UsageError(f'transitions: expected "uniform" or a matrix, got {self.transitions!r}')
            return "uniform"
        mat = np.asarray(self.transitions, dtype=np.float64)
        s = self.num_classes
        if mat.shape != (s, s):
            raise UsageError(f"transitions: expected shape ({s}, {s}), got {mat.shape}")
        if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-12):
            raise UsageError("transitions: rows must be non-negative and sum to 1 within 1e-12")
        return tuple(tuple(row) for row in mat)

    def transition_matrix(self) -> np.ndarray:
        if self.transitions == "uniform":
            s = self.num_classes
            return np.full((s, s), 1.0 / s)
        return np.asarray(self.transitions, dtype=np.float64)

    def counts(self) -> dict[str, int]:
        return {
            "train": self.train_utterances,
            "dev": self.dev_utterances,
            "eval": self.eval_utterances,
        }


@dataclass
class Utterance:
    id: str
    frames: np.ndarray  # T x D float64
    labels: np.ndarray  # T int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise UsageError(f"{self.id}: frames must be a T x D matrix with T >= 1")
        if self.labels.shape != (self.frames.shape[0],):
            raise UsageError(f"{self.id}: labels length != frame count")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class ParallelUtterance:
    clean: Utterance
    far: Utterance

    def __post_init__(self):
        if self.clean.id != self.far.id:
            raise UsageError(f"parallel pair ids differ: {self.clean.id} vs {self.far.id}")
        if self.clean.frames.shape != self.far.frames.shape:
            raise UsageError(f"{self.clean.id}: clean/far frame shapes differ")
        if not np.array_equal(self.clean.labels, self.far.labels):
            raise UsageError(f"{self.clean.id}: clean/far label sequences differ")

    @property
    def id(self) -> str:
        return self.clean.id

    @property
    def labels(self) -> np.ndarray:
        return self.clean.labels

    @property
    def num_frames(self) -> int:
        return self.clean.num_frames


@dataclass
class ParallelCorpus:
    train: list[ParallelUtterance]
    dev: list[ParallelUtterance]
    eval: list[ParallelUtterance]
    num_classes: int
    feature_dim: int
    channel: ChannelSpec | None = None
    seed: int | None = None

    def split(self, name: str) -> list[ParallelUtterance]:
        if name not in SPLITS:
            raise UsageError(f"unknown split {name!r}, expected one of {SPLITS}")
        return getattr(self, name)

    def validate(self) -> "ParallelCorpus":
        seen: set[str] = set()
        for split in SPLITS:
            for utt in self.split(split):
                if utt.id in seen:
                    raise UsageError(f"duplicate utterance id {utt.id!r} across splits")
                seen.add(utt.id)
                if utt.clean.frames.shape[1] != self.feature_dim:
                    raise UsageError(f"{utt.id}: feature dim != corpus feature_dim")
                if utt.labels.min() < 0 or utt.labels.max() >= self.num_classes:
                    raise UsageError(f"{utt.id}: label out of range [0, {self.num_classes})")
        return self


def corrupt(clean: np.ndarray, channel: ChannelSpec, rng: RngStream) -> np.ndarray:
    """Apply the corruption channel to a T x D frame matrix.

    Reads before the first frame replicate it, so constant inputs stay
    constant through any normalized kernel.  Noise draws are skipped entirely
    when sigma is 0 so the identity channel is bit-exact.
    """
    x = np.asarray(clean, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise UsageError(f"corrupt: expected T x D frames with T >= 1, got shape {x.shape}")
    t = x.shape[0]
    h = channel.kernel
    acc = h[0] * x
    for k in range(1, len(h)):
        shifted = np.concatenate([np.repeat(x[:1], min(k, t), axis=0), x[: max(t - k, 0)]], axis=0)
        acc += h[k] * shifted
    if channel.gain != 1.0:
        acc *= channel.gain
    if channel.bias != 0.0:
        acc += channel.bias
    if channel.noise_sigma > 0.0:
        acc += channel.noise_sigma * rng.gaussians(x.size).reshape(x.shape)
    return acc


def splice(frames: np.ndarray, context: int = 11) -> np.ndarray:
    """Stack a sliding window of ``context`` frames onto each frame.

    Row t of the result concatenates frames t-c .. t+c (c = context // 2),
    replicating the first/last frame past the edges, giving T x (D * context).
    """
    if context < 1 or context % 2 == 0:
        raise UsageError(f"context must be odd and >= 1, got {context}")
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise UsageError(f"splice: expected T x D frames with T >= 1, got shape {x.shape}")
    t, d = x.shape
    half = context // 2
    idx = np.clip(np.arange(t)[:, None] + np.arange(-half, half + 1)[None, :], 0, t - 1)
    return x[idx].reshape(t, context * d)


def gen_corpus(spec: CorpusSpec) -> ParallelCorpus:
    """Deterministically synthesize a parallel corpus from its spec.

    Separate derived streams drive class means, the label process, clean
    features, and channel noise, so each is reproducible in isolation.
    """
    root = RngStream(spec.seed)
    means_rng = root.derive("class-means")
    labels_rng = root.derive("labels")
    feat_rng = root.derive("features")
    noise_rng = root.derive("channel-noise")

    s, d = spec.num_classes, spec.feature_dim
    class_means = means_rng.gaussians(s * d).reshape(s, d) * spec.class_mean_spread
    trans = spec.transition_matrix()

    splits: dict[str, list[ParallelUtterance]] = {}
    for split in SPLITS:
        utts = []
        for u in range(spec.counts()[split]):
            uid = f"{split}-{u:04d}"
            t = labels_rng.next_int(spec.min_utterance_frames, spec.max_utterance_frames)
            labels = _sample_labels(t, s, trans, spec, labels_rng)
            clean = class_means[labels] + spec.class_scale * feat_rng.gaussians(t * d).reshape(t, d)
            far = corrupt(clean, spec.channel, noise_rng)
            utts.append(
                ParallelUtterance(Utterance(uid, clean, labels), Utterance(uid, far, labels))
            )
        splits[split] = utts
    return ParallelCorpus(
        splits["train"], splits["dev"], splits["eval"],
        num_classes=s, feature_dim=d, channel=spec.channel, seed=spec.seed,
    ).validate()


def _sample_labels(t, s, trans, spec: CorpusSpec, rng: RngStream) -> np.ndarray:
    labels = np.empty(t, dtype=np.int64)
    pos = 0
    cls = rng.next_int(0, s - 1)
    while pos < t:
        dwell = rng.next_int(spec.min_segment_frames, spec.max_segment_frames)
        end = min(pos + dwell, t)
        labels[pos:end] = cls
        pos = end
        if pos < t:
            cls = rng.next_index(trans[cls])
    return labels


def save_corpus(corpus: ParallelCorpus, directory) -> dict:
    """Write the corpus directory; returns the manifest that was written."""
    corpus.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": CORPUS_FORMAT_VERSION,
        "num_classes": corpus.num_classes,
        "feature_dim": corpus.feature_dim,
        "splits": {
            split: [{"id": utt.id, "frames": utt.num_frames} for utt in corpus.split(split)]
            for split in SPLITS
        },
        "channel": corpus.channel.to_dict() if corpus.channel is not None else None,
        "seed": corpus.seed,
    }
    for split in SPLITS:
        for utt in corpus.split(split):
            (directory / f"{utt.id}.clean.f32").write_bytes(
                np.ascontiguousarray(utt.clean.frames, dtype="<f4").tobytes()
            )
            (directory / f"{utt.id}.far.f32").write_bytes(
                np.ascontiguousarray(utt.far.frames, dtype="<f4").tobytes()
            )
            (directory / f"{utt.id}.labels.u16").write_bytes(
                np.ascontiguousarray(utt.labels, dtype="<u2").tobytes()
            )
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _read_frames(path: Path, uid: str, t: int, d: int) -> np.ndarray:
    data = path.read_bytes()
    if len(data) != t * d * 4:
        raise FormatError(
            f"{uid}: {path.name} is {len(data)} bytes, expected {t * d * 4} ({t} x {d} float32)"
        )
    return np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(t, d)


def load_corpus(directory) -> ParallelCorpus:
    """Reconstruct a corpus written by :func:`save_corpus`, validating invariants."""
    directory = Path(directory)
    with open(directory / "manifest.json", "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{directory}: malformed manifest.json: {exc}") from exc
    if manifest.get("version") != CORPUS_FORMAT_VERSION:
        raise FormatError(f"{directory}: unsupported corpus version {manifest.get('version')!r}")
    try:
        s = int(manifest["num_classes"])
        d = int(manifest["feature_dim"])
        split_entries = {split: manifest["splits"][split] for split in SPLITS}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{directory}: manifest missing or malformed field: {exc}") from exc
    try:
        channel = ChannelSpec(**manifest["channel"]) if manifest.get("channel") else None
    except TypeError as exc:
        raise FormatError(f"{directory}: malformed channel block in manifest: {exc}") from exc

    splits: dict[str, list[ParallelUtterance]] = {}
    for split in SPLITS:
        utts = []
        for entry in split_entries[split]:
            uid, t = str(entry["id"]), int(entry["frames"])
            clean = _read_frames(directory / f"{uid}.clean.f32", uid, t, d)
            far = _read_frames(directory / f"{uid}.far.f32", uid, t, d)
            raw = (directory / f"{uid}.labels.u16").read_bytes()
            if len(raw) != t * 2:
                raise FormatError(f"{uid}: labels.u16 is {len(raw)} bytes, expected {t * 2}")
            labels = np.frombuffer(raw, dtype="<u2").astype(np.int64)
            if labels.size and labels.max() >= s:
                raise FormatError(f"{uid}: label {labels.max()} out of range [0, {s})")
            utts.append(
                ParallelUtterance(Utterance(uid, clean, labels), Utterance(uid, far, labels))
            )
        splits[split] = utts
    return ParallelCorpus(
        splits["train"], splits["dev"], splits["eval"],
        num_classes=s, feature_dim=d, channel=channel, seed=manifest.get("seed"),
    ).validate()
