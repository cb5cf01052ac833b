"""Metrics and the experiment harness.

Frame error rate is the per-frame argmax error; segment error rate collapses
consecutive identical labels into segments and measures edit distance against
the collapsed reference, normalized by reference segment count — the
desk-scale stand-in for a word error rate.  ``run_experiment`` trains the
baselines, the teacher ladder and the distilled students across seeds and
summarizes the teacher-quality/student-quality trend.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import ParallelCorpus, ParallelUtterance, load_corpus, splice
from .errors import UsageError
from .losses import PROB_FLOOR, mean_hard_ce
from .network import Architecture, ModelParams, forward, save_model
from .training import (
    TeacherTier,
    TrainConfig,
    compute_soft_labels,
    distill_student,
    load_soft_labels,
    save_soft_labels,
    train_baseline,
    train_teacher,
)

REPORT_VERSION = 1

CSV_HEADER = "seed,model,tier,split,fer,ser,loss"


@dataclass
class MetricsReport:
    model: str
    split: str
    frame_error_rate: float
    segment_error_rate: float
    mean_loss: float
    num_frames: int
    num_segments: int

    @property
    def accuracy(self) -> float:
        return 1.0 - self.frame_error_rate

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "split": self.split,
            "fer": self.frame_error_rate,
            "ser": self.segment_error_rate,
            "loss": self.mean_loss,
            "num_frames": self.num_frames,
            "num_segments": self.num_segments,
        }


def _model_context(model: ModelParams, feature_dim: int) -> int:
    context, rem = divmod(model.arch.input_dim, feature_dim)
    if rem != 0 or context % 2 == 0:
        raise UsageError(
            f"model input_dim {model.arch.input_dim} incompatible with feature_dim {feature_dim}"
        )
    return context


def _utterance_posteriors(model: ModelParams, utt: ParallelUtterance, use_far: bool,
                          context: int) -> np.ndarray:
    frames = utt.far.frames if use_far else utt.clean.frames
    return forward(model, splice(frames, context)).posteriors


def frame_error_rate(model: ModelParams, utterances, use_far: bool) -> float:
    """Fraction of frames whose argmax posterior differs from the label.

    Ties break toward the lowest class index (argmax convention).
    """
    report = evaluate_model(model, utterances, use_far)
    return report.frame_error_rate


def edit_distance(ref, hyp) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    ref = [int(v) for v in ref]
    hyp = [int(v) for v in hyp]
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def collapse_runs(labels) -> list[int]:
    """Run-length collapse: [0,0,1,1,0] -> [0,1,0]."""
    out: list[int] = []
    for v in labels:
        v = int(v)
        if not out or out[-1] != v:
            out.append(v)
    return out


def segment_error_rate(model: ModelParams, utterances, use_far: bool) -> float:
    report = evaluate_model(model, utterances, use_far)
    return report.segment_error_rate


def evaluate_model(model: ModelParams, utterances, use_far: bool,
                   model_name: str = "model", split_name: str = "") -> MetricsReport:
    """One pass over a list of utterances computing FER, SER and mean hard-CE."""
    utterances = list(utterances)
    if not utterances:
        raise UsageError("evaluate_model: no utterances given")
    context = _model_context(model, utterances[0].clean.frames.shape[1])
    frame_errors = 0
    num_frames = 0
    edits = 0
    ref_segments = 0
    loss_sum = 0.0
    for utt in utterances:
        post = _utterance_posteriors(model, utt, use_far, context)
        pred = np.argmax(post, axis=1)
        frame_errors += int(np.sum(pred != utt.labels))
        num_frames += utt.num_frames
        ref = collapse_runs(utt.labels)
        edits += edit_distance(ref, collapse_runs(pred))
        ref_segments += len(ref)
        loss_sum += mean_hard_ce(post, utt.labels) * utt.num_frames
    return MetricsReport(
        model=model_name,
        split=split_name,
        frame_error_rate=frame_errors / num_frames,
        segment_error_rate=edits / ref_segments,
        mean_loss=loss_sum / num_frames,
        num_frames=num_frames,
        num_segments=ref_segments,
    )


def estimate_priors(corpus: ParallelCorpus, smoothing: float = 1.0) -> np.ndarray:
    """Class priors from training-set label frequencies with additive smoothing."""
    if smoothing < 0:
        raise UsageError(f"smoothing must be >= 0, got {smoothing}")
    counts = np.zeros(corpus.num_classes)
    for utt in corpus.train:
        counts += np.bincount(utt.labels, minlength=corpus.num_classes)
    total = counts.sum()
    if total == 0:
        raise UsageError("estimate_priors: corpus has no training frames")
    priors = (counts + smoothing) / (total + corpus.num_classes * smoothing)
    if np.any(priors <= 0):
        raise UsageError("priors contain zeros; use smoothing > 0 when classes are missing")
    return priors


def posterior_to_loglik(q: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """Scaled log-likelihood ln q_i - ln prior_i; only relative values matter."""
    q = np.asarray(q, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64)
    if np.any(priors <= 0):
        raise UsageError("priors must be strictly positive")
    return np.log(np.maximum(q, PROB_FLOOR)) - np.log(priors)


def _rank(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise UsageError("spearman: need two equal-length vectors of size >= 2")
    rx, ry = _rank(x), _rank(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def run_experiment(corpus_dir, tiers, cfg: TrainConfig, seeds,
                   student_hidden=(64, 64), temperature: float = 1.0,
                   out_dir=None, verbose: bool = False) -> dict:
    """Train baselines, teacher ladder and students for every seed; report metrics.

    Per seed: a far-hard baseline, a multi-condition baseline, then one teacher
    and one distilled student per tier.  Students and baselines share one
    architecture.  Everything is evaluated on the far eval split; teachers are
    additionally evaluated on the clean eval split.  Soft labels pass through
    their float32 on-disk representation so a chained run of the individual
    stages reproduces these results exactly.
    """
    tiers = list(tiers)
    seeds = [int(s) for s in seeds]
    if not tiers:
        raise UsageError("run_experiment: need at least one teacher tier")
    if len({t.name for t in tiers}) != len(tiers):
        raise UsageError("run_experiment: tier names must be unique")
    if not seeds:
        raise UsageError("run_experiment: need at least one seed")
    corpus = load_corpus(corpus_dir)
    student_arch = Architecture(
        corpus.feature_dim * cfg.context, tuple(student_hidden), corpus.num_classes
    )
    out_dir = Path(out_dir) if out_dir is not None else None

    def log(msg):
        if verbose:
            print(msg, file=sys.stderr)

    model_entries = []
    # tier -> list over seeds
    teacher_fer_clean: dict[str, list[float]] = {t.name: [] for t in tiers}
    student_fer: dict[str, list[float]] = {t.name: [] for t in tiers}
    student_ser: dict[str, list[float]] = {t.name: [] for t in tiers}
    baseline_fer, baseline_ser = [], []
    multicond_fer, multicond_ser = [], []

    for seed in seeds:
        seed_cfg = replace(cfg, seed=seed)
        seed_dir = out_dir / f"seed-{seed}" if out_dir is not None else None
        if seed_dir is not None:
            seed_dir.mkdir(parents=True, exist_ok=True)

        def train_and_eval(name, tier_name, params, history):
            if seed_dir is not None:
                save_model(params, seed_dir / f"{name}.kdam")
                history.to_csv(seed_dir / f"{name}.history.csv")
            metrics = {
                "eval_far": evaluate_model(params, corpus.eval, True, name, "eval-far").to_dict()
            }
            entry = {
                "seed": seed,
                "model": name.split("-", 1)[0] if name.startswith(("teacher", "student")) else name,
                "tier": tier_name,
                "metrics": metrics,
                "epochs": history.stopped_epoch,
                "best_epoch": history.best_epoch,
            }
            model_entries.append(entry)
            log(f"  seed {seed}: {name} done "
                f"(epochs {history.stopped_epoch}, eval fer {metrics['eval_far']['fer']:.4f})")
            return entry

        log(f"seed {seed}: training far-hard baseline")
        params, history = train_baseline(corpus, "far-hard", student_arch, seed_cfg)
        entry = train_and_eval("far-hard", None, params, history)
        baseline_fer.append(entry["metrics"]["eval_far"]["fer"])
        baseline_ser.append(entry["metrics"]["eval_far"]["ser"])

        log(f"seed {seed}: training multi-cond baseline")
        params, history = train_baseline(corpus, "multi-cond", student_arch, seed_cfg)
        entry = train_and_eval("multi-cond", None, params, history)
        multicond_fer.append(entry["metrics"]["eval_far"]["fer"])
        multicond_ser.append(entry["metrics"]["eval_far"]["ser"])

        for tier in tiers:
            log(f"seed {seed}: training teacher tier {tier.name}")
            teacher, history = train_teacher(corpus, tier, seed_cfg)
            entry = train_and_eval(f"teacher-{tier.name}", tier.name, teacher, history)
            clean_metrics = evaluate_model(
                teacher, corpus.eval, False, f"teacher-{tier.name}", "eval-clean"
            )
            entry["metrics"]["eval_clean"] = clean_metrics.to_dict()
            teacher_fer_clean[tier.name].append(clean_metrics.frame_error_rate)

            soft = compute_soft_labels(teacher, corpus, temperature)
            if seed_dir is not None:
                soft_dir = seed_dir / f"soft-{tier.name}"
                save_soft_labels(soft, soft_dir)
                soft = load_soft_labels(soft_dir)
            else:
                soft = soft.quantized()

            log(f"seed {seed}: distilling student from tier {tier.name}")
            student, history = distill_student(corpus, soft, student_arch, seed_cfg)
            entry = train_and_eval(f"student-{tier.name}", tier.name, student, history)
            student_fer[tier.name].append(entry["metrics"]["eval_far"]["fer"])
            student_ser[tier.name].append(entry["metrics"]["eval_far"]["ser"])

    tier_names = [t.name for t in tiers]
    teacher_means = [float(np.mean(teacher_fer_clean[t])) for t in tier_names]
    student_means = [float(np.mean(student_fer[t])) for t in tier_names]
    best_tier = tier_names[-1]
    n_seeds = len(seeds)
    best_student_fer = student_fer[best_tier]
    best_student_ser = student_ser[best_tier]

    trend = {
        "tiers": tier_names,
        "teacher_mean_fer_clean": teacher_means,
        "student_mean_fer": student_means,
        "student_mean_ser": [float(np.mean(student_ser[t])) for t in tier_names],
        "teacher_student_pairs": [[t, s] for t, s in zip(teacher_means, student_means)],
        "spearman_teacher_student": (
            spearman(teacher_means, student_means) if len(tiers) >= 2 else None
        ),
        "baseline_mean_fer": float(np.mean(baseline_fer)),
        "baseline_mean_ser": float(np.mean(baseline_ser)),
        "multi_cond_mean_fer": float(np.mean(multicond_fer)),
        "multi_cond_mean_ser": float(np.mean(multicond_ser)),
        "best_tier": best_tier,
        "best_student_mean_fer": float(np.mean(best_student_fer)),
        "best_student_mean_ser": float(np.mean(best_student_ser)),
        "student_fer_wins": sum(
            1 for s, b in zip(best_student_fer, baseline_fer) if s < b
        ),
        "student_ser_wins": sum(
            1 for s, b in zip(best_student_ser, baseline_ser) if s < b
        ),
        "multi_cond_between": sum(
            1 for s, m, b in zip(best_student_fer, multicond_fer, baseline_fer)
            if s < m < b
        ),
        "num_seeds": n_seeds,
    }
    return {
        "version": REPORT_VERSION,
        "seeds": seeds,
        "tiers": [
            {"name": t.name, "hidden": list(t.hidden), "max_epochs": t.max_epochs} for t in tiers
        ],
        "student_hidden": list(student_hidden),
        "temperature": temperature,
        "models": model_entries,
        "trend": trend,
    }


def report_to_csv(report: dict) -> str:
    """Flatten a report to ``seed,model,tier,split,fer,ser,loss`` lines."""
    lines = [CSV_HEADER]
    for entry in report["models"]:
        tier = entry["tier"] if entry["tier"] is not None else ""
        for split_key in ("eval_far", "eval_clean"):
            metrics = entry["metrics"].get(split_key)
            if metrics is None:
                continue
            lines.append(
                f"{entry['seed']},{entry['model']},{tier},{metrics['split']},"
                f"{metrics['fer']!r},{metrics['ser']!r},{metrics['loss']!r}"
            )
    return "\n".join(lines) + "\n"
