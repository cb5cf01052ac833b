"""JSON run configuration: strict parsing, defaults, and the effective echo.

Unknown keys are rejected with their dotted path — silent typos in
hyperparameters are the top reproducibility hazard.  ``to_effective_dict``
materializes every default so the manifest written by a run parses back to
the identical configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ChannelSpec, CorpusSpec
from .errors import UsageError, ValidationError
from .training import DEFAULT_STUDENT_HIDDEN, DEFAULT_TIERS, TeacherTier, TrainConfig

DEFAULT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class CliConfig:
    corpus: CorpusSpec
    train: TrainConfig
    student_hidden: tuple[int, ...]
    tiers: tuple[TeacherTier, ...]
    temperature: float
    out_dir: str
    seeds: tuple[int, ...]


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(f"{path}: expected an object, got {type(value).__name__}")
    return value


def _check_keys(data: dict, allowed, path: str) -> None:
    for key in data:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ValidationError(f"{where}: unknown key")


def _int(data: dict, key: str, default, path: str):
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{path}.{key}: expected an integer")
    return value


def _number(data: dict, key: str, default, path: str) -> float:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{path}.{key}: expected a number")
    return float(value)


def _bool(data: dict, key: str, default, path: str) -> bool:
    value = data.get(key, default)
    if not isinstance(value, bool):
        raise ValidationError(f"{path}.{key}: expected a boolean")
    return value


def _int_list(value, path: str) -> list[int]:
    if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
        raise ValidationError(f"{path}: expected a list of integers")
    return list(value)


def _int_pair(data: dict, key: str, default, path: str) -> tuple[int, int]:
    value = data.get(key, list(default))
    pair = _int_list(value, f"{path}.{key}")
    if len(pair) != 2:
        raise ValidationError(f"{path}.{key}: expected [min, max]")
    return pair[0], pair[1]


def _build_channel(data, path: str) -> ChannelSpec:
    data = _require_mapping(data, path)
    _check_keys(data, {"kernel", "noise_sigma", "gain", "bias"}, path)
    kernel = data.get("kernel", [0.6, 0.3, 0.1])
    if not isinstance(kernel, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in kernel
    ):
        raise ValidationError(f"{path}.kernel: expected a list of numbers")
    try:
        return ChannelSpec(
            kernel=tuple(float(v) for v in kernel),
            noise_sigma=_number(data, "noise_sigma", 0.5, path),
            gain=_number(data, "gain", 1.0, path),
            bias=_number(data, "bias", 0.0, path),
        )
    except UsageError as exc:
        raise ValidationError(f"{path.rsplit('.', 1)[0]}.{exc}") from exc


def _build_corpus(data, path: str = "corpus") -> CorpusSpec:
    data = _require_mapping(data, path)
    allowed = {
        "num_classes", "feature_dim", "utterances", "utterance_frames", "segment_frames",
        "transitions", "class_mean_spread", "class_scale", "channel", "seed",
    }
    _check_keys(data, allowed, path)
    utts = _require_mapping(data.get("utterances", {}), f"{path}.utterances")
    _check_keys(utts, {"train", "dev", "eval"}, f"{path}.utterances")
    utt_frames = _int_pair(data, "utterance_frames", (40, 120), path)
    seg_frames = _int_pair(data, "segment_frames", (5, 20), path)
    transitions = data.get("transitions", "uniform")
    if not isinstance(transitions, (str, list)):
        raise ValidationError(f"{path}.transitions: expected \"uniform\" or a matrix")
    channel = _build_channel(data.get("channel", {}), f"{path}.channel")
    try:
        return CorpusSpec(
            num_classes=_int(data, "num_classes", 20, path),
            feature_dim=_int(data, "feature_dim", 12, path),
            train_utterances=_int(utts, "train", 600, f"{path}.utterances"),
            dev_utterances=_int(utts, "dev", 100, f"{path}.utterances"),
            eval_utterances=_int(utts, "eval", 100, f"{path}.utterances"),
            min_utterance_frames=utt_frames[0],
            max_utterance_frames=utt_frames[1],
            min_segment_frames=seg_frames[0],
            max_segment_frames=seg_frames[1],
            transitions=transitions if isinstance(transitions, str) else tuple(map(tuple, transitions)),
            class_mean_spread=_number(data, "class_mean_spread", 2.0, path),
            class_scale=_number(data, "class_scale", 1.0, path),
            channel=channel,
            seed=_int(data, "seed", 0, path),
        )
    except UsageError as exc:
        raise ValidationError(f"{path}.{exc}") from exc


def _build_train(data, path: str = "train") -> TrainConfig:
    data = _require_mapping(data, path)
    allowed = {"lr", "batch_size", "max_epochs", "patience", "seed", "shuffle", "context"}
    _check_keys(data, allowed, path)
    try:
        return TrainConfig(
            lr=_number(data, "lr", 1e-3, path),
            batch_size=_int(data, "batch_size", 256, path),
            max_epochs=_int(data, "max_epochs", 40, path),
            patience=_int(data, "patience", 3, path),
            seed=_int(data, "seed", 0, path),
            shuffle=_bool(data, "shuffle", True, path),
            context=_int(data, "context", 11, path),
        )
    except UsageError as exc:
        raise ValidationError(f"{path}.{exc}") from exc


def _build_tiers(data, path: str = "tiers") -> tuple[TeacherTier, ...]:
    if data is None:
        return DEFAULT_TIERS
    if not isinstance(data, list) or not data:
        raise ValidationError(f"{path}: expected a non-empty list of tier objects")
    tiers = []
    for i, entry in enumerate(data):
        tier_path = f"{path}[{i}]"
        entry = _require_mapping(entry, tier_path)
        _check_keys(entry, {"name", "hidden", "max_epochs"}, tier_path)
        name = entry.get("name", f"t{i + 1}")
        if not isinstance(name, str) or not name:
            raise ValidationError(f"{tier_path}.name: expected a non-empty string")
        hidden = _int_list(entry.get("hidden", [64]), f"{tier_path}.hidden")
        try:
            tiers.append(TeacherTier(name, tuple(hidden), _int(entry, "max_epochs", 20, tier_path)))
        except UsageError as exc:
            raise ValidationError(f"{tier_path}: {exc}") from exc
    if len({t.name for t in tiers}) != len(tiers):
        raise ValidationError(f"{path}: tier names must be unique")
    return tuple(tiers)


def build_config(data: dict) -> CliConfig:
    data = _require_mapping(data, "")
    allowed = {"corpus", "train", "student_hidden", "tiers", "temperature", "out_dir", "seeds"}
    _check_keys(data, allowed, "")
    student_hidden = _int_list(
        data.get("student_hidden", list(DEFAULT_STUDENT_HIDDEN)), "student_hidden"
    )
    if any(w < 1 for w in student_hidden):
        raise ValidationError("student_hidden: widths must all be >= 1")
    temperature = _number(data, "temperature", 1.0, "")
    if not (np.isfinite(temperature) and temperature > 0):
        raise ValidationError(f"temperature: must be > 0, got {temperature}")
    out_dir = data.get("out_dir", "runs")
    if not isinstance(out_dir, str) or not out_dir:
        raise ValidationError("out_dir: expected a non-empty string")
    seeds = _int_list(data.get("seeds", list(DEFAULT_SEEDS)), "seeds")
    if not seeds or any(s < 0 for s in seeds):
        raise ValidationError("seeds: expected a non-empty list of non-negative integers")
    return CliConfig(
        corpus=_build_corpus(data.get("corpus", {})),
        train=_build_train(data.get("train", {})),
        student_hidden=tuple(student_hidden),
        tiers=_build_tiers(data.get("tiers")),
        temperature=temperature,
        out_dir=out_dir,
        seeds=tuple(seeds),
    )


def load_config(path) -> CliConfig:
    """Parse a JSON config file; absent optional fields take their defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    return build_config(data)


def to_effective_dict(cfg: CliConfig) -> dict:
    """Full configuration with every default applied, in config-file schema."""
    corpus = cfg.corpus
    transitions = corpus.transitions
    if not isinstance(transitions, str):
        transitions = [list(row) for row in transitions]
    return {
        "corpus": {
            "num_classes": corpus.num_classes,
            "feature_dim": corpus.feature_dim,
            "utterances": {
                "train": corpus.train_utterances,
                "dev": corpus.dev_utterances,
                "eval": corpus.eval_utterances,
            },
            "utterance_frames": [corpus.min_utterance_frames, corpus.max_utterance_frames],
            "segment_frames": [corpus.min_segment_frames, corpus.max_segment_frames],
            "transitions": transitions,
            "class_mean_spread": corpus.class_mean_spread,
            "class_scale": corpus.class_scale,
            "channel": corpus.channel.to_dict(),
            "seed": corpus.seed,
        },
        "train": {
            "lr": cfg.train.lr,
            "batch_size": cfg.train.batch_size,
            "max_epochs": cfg.train.max_epochs,
            "patience": cfg.train.patience,
            "seed": cfg.train.seed,
            "shuffle": cfg.train.shuffle,
            "context": cfg.train.context,
        },
        "student_hidden": list(cfg.student_hidden),
        "tiers": [
            {"name": t.name, "hidden": list(t.hidden), "max_epochs": t.max_epochs}
            for t in cfg.tiers
        ],
        "temperature": cfg.temperature,
        "out_dir": cfg.out_dir,
        "seeds": list(cfg.seeds),
    }
