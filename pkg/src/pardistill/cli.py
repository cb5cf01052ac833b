"""Command-line surface: gen-corpus, train-teacher, soft-labels, distill,
train-baseline, eval, experiment.

Every command takes ``--config <path>`` (defaults apply when omitted) plus
targeted overrides, writes its artifacts under ``--out`` and drops a
``run.json`` manifest there (effective config, overrides, artifact hashes).
Exit codes: 0 success, 1 usage error, 2 validation/data error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import CliConfig, build_config, load_config, to_effective_dict
from .corpus import gen_corpus, load_corpus, save_corpus
from .errors import UsageError, ValidationError
from .evaluation import evaluate_model, report_to_csv, run_experiment
from .network import Architecture, load_model, save_model
from .training import (
    compute_soft_labels,
    distill_student,
    load_soft_labels,
    save_soft_labels,
    train_baseline,
    train_teacher,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_run_manifest(out_dir: Path, command: str, cfg: CliConfig, overrides: dict,
                        artifacts) -> None:
    entries = {}
    for path in sorted(set(Path(p) for p in artifacts)):
        if path.is_dir():
            for sub in sorted(path.rglob("*")):
                if sub.is_file():
                    entries[str(sub.relative_to(out_dir))] = _sha256(sub)
        elif path.is_file():
            entries[str(path.relative_to(out_dir))] = _sha256(path)
    manifest = {
        "version": 1,
        "command": command,
        "effective_config": to_effective_dict(cfg),
        "overrides": overrides,
        "artifacts": entries,
    }
    with open(out_dir / "run.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cfg(args) -> CliConfig:
    cfg = load_config(args.config) if args.config else build_config({})
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    if getattr(args, "temperature", None) is not None:
        if args.temperature <= 0:
            raise UsageError(f"--temperature must be > 0, got {args.temperature}")
        cfg = replace(cfg, temperature=args.temperature)
    return cfg


def _out_dir(args, cfg: CliConfig) -> Path:
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _overrides(args, *names) -> dict:
    present = {}
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            present[name] = value
    return present


def _corpus_dir(args, out: Path) -> Path:
    directory = Path(args.corpus) if getattr(args, "corpus", None) else out / "corpus"
    if not (directory / "manifest.json").exists():
        raise FileNotFoundError(f"no corpus found at {directory} (run gen-corpus first)")
    return directory


def _pick_tier(cfg: CliConfig, name):
    if name is None:
        return cfg.tiers[-1]
    for tier in cfg.tiers:
        if tier.name == name:
            return tier
    raise UsageError(f"unknown tier {name!r}; config defines {[t.name for t in cfg.tiers]}")


def _student_arch(cfg: CliConfig, corpus) -> Architecture:
    return Architecture(
        corpus.feature_dim * cfg.train.context, cfg.student_hidden, corpus.num_classes
    )


def _cmd_gen_corpus(args) -> int:
    cfg = _load_cfg(args)
    spec = cfg.corpus
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = _out_dir(args, cfg)
    corpus_dir = out / "corpus"
    _log(f"generating corpus into {corpus_dir}")
    save_corpus(gen_corpus(spec), corpus_dir)
    _write_run_manifest(out, "gen-corpus", cfg, _overrides(args, "seed"), [corpus_dir])
    return 0


def _cmd_train_teacher(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    corpus = load_corpus(_corpus_dir(args, out))
    tier = _pick_tier(cfg, args.tier)
    _log(f"training teacher tier {tier.name} (hidden {list(tier.hidden)}, "
         f"budget {tier.max_epochs} epochs, seed {cfg.train.seed})")
    params, history = train_teacher(corpus, tier, cfg.train)
    model_path = out / f"teacher-{tier.name}.kdam"
    history_path = out / f"teacher-{tier.name}.history.csv"
    save_model(params, model_path)
    history.to_csv(history_path)
    _log(f"stopped at epoch {history.stopped_epoch}, best epoch {history.best_epoch}, "
         f"dev fer {history.dev_fer[history.best_epoch - 1]:.4f}")
    _write_run_manifest(out, "train-teacher", cfg, _overrides(args, "seed", "tier"),
                        [model_path, history_path])
    return 0


def _cmd_soft_labels(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    corpus = load_corpus(_corpus_dir(args, out))
    teacher = load_model(args.model)
    _log(f"computing soft labels at temperature {cfg.temperature}")
    soft = compute_soft_labels(teacher, corpus, cfg.temperature)
    save_soft_labels(soft, out)
    _write_run_manifest(out, "soft-labels", cfg,
                        _overrides(args, "temperature", "model"), [out])
    return 0


def _cmd_distill(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    corpus = load_corpus(_corpus_dir(args, out))
    soft = load_soft_labels(args.soft)
    arch = _student_arch(cfg, corpus)
    _log(f"distilling student (hidden {list(cfg.student_hidden)}, seed {cfg.train.seed})")
    params, history = distill_student(corpus, soft, arch, cfg.train)
    model_path = out / "student.kdam"
    history_path = out / "student.history.csv"
    save_model(params, model_path)
    history.to_csv(history_path)
    _log(f"stopped at epoch {history.stopped_epoch}, best epoch {history.best_epoch}, "
         f"dev fer {history.dev_fer[history.best_epoch - 1]:.4f}")
    _write_run_manifest(out, "distill", cfg, _overrides(args, "seed", "soft"),
                        [model_path, history_path])
    return 0


def _cmd_train_baseline(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    corpus = load_corpus(_corpus_dir(args, out))
    arch = _student_arch(cfg, corpus)
    _log(f"training {args.mode} baseline (seed {cfg.train.seed})")
    params, history = train_baseline(corpus, args.mode, arch, cfg.train)
    model_path = out / f"{args.mode}.kdam"
    history_path = out / f"{args.mode}.history.csv"
    save_model(params, model_path)
    history.to_csv(history_path)
    _write_run_manifest(out, "train-baseline", cfg, _overrides(args, "seed", "mode"),
                        [model_path, history_path])
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    corpus = load_corpus(_corpus_dir(args, out))
    model = load_model(args.model)
    use_far = args.features == "far"
    utterances = corpus.split(args.split)
    name = Path(args.model).stem
    report = evaluate_model(model, utterances, use_far, name, f"{args.split}-{args.features}")
    metrics_path = out / "metrics.json"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{name} {report.split}: fer={report.frame_error_rate:.4f} "
          f"ser={report.segment_error_rate:.4f} loss={report.mean_loss:.4f}")
    _write_run_manifest(out, "eval", cfg,
                        _overrides(args, "model", "split", "features"), [metrics_path])
    return 0


def _cmd_experiment(args) -> int:
    from .plots import render_report_figures

    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    corpus_dir = Path(args.corpus) if args.corpus else out / "corpus"
    if not (corpus_dir / "manifest.json").exists():
        _log(f"no corpus at {corpus_dir}; generating from config")
        save_corpus(gen_corpus(cfg.corpus), corpus_dir)
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    report = run_experiment(
        corpus_dir, cfg.tiers, cfg.train, seeds,
        student_hidden=cfg.student_hidden, temperature=cfg.temperature,
        out_dir=out, verbose=True,
    )
    report_path = out / "report.json"
    csv_path = out / "report.csv"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path.write_text(report_to_csv(report), encoding="utf-8")
    figures = render_report_figures(report, out)
    trend = report["trend"]
    _log(f"report written to {report_path} and {csv_path}")
    _log(f"baseline mean fer {trend['baseline_mean_fer']:.4f}, "
         f"best student mean fer {trend['best_student_mean_fer']:.4f}")
    artifacts = [report_path, csv_path, *figures]
    artifacts += [out / f"seed-{seed}" for seed in seeds]
    _write_run_manifest(out, "experiment", cfg, _overrides(args, "seed"), artifacts)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="pardistill",
                     description="Teacher-student distillation over parallel corpora")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text, **flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (default: out_dir from config)")
        p.add_argument("--seed", type=int, help="override the training seed")
        if flags.get("corpus", True):
            p.add_argument("--corpus", help="corpus directory (default: <out>/corpus)")
        for extra in flags.get("extra", []):
            p.add_argument(*extra[0], **extra[1])
        p.set_defaults(func=func)
        return p

    add("gen-corpus", _cmd_gen_corpus, "synthesize a parallel corpus", corpus=False)
    add("train-teacher", _cmd_train_teacher, "train a teacher tier on clean data",
        extra=[(("--tier",), {"help": "tier name from the config ladder (default: top tier)"})])
    add("soft-labels", _cmd_soft_labels, "extract frozen-teacher soft labels",
        extra=[(("--model",), {"required": True, "help": "teacher model file"}),
               (("--temperature",), {"type": float, "help": "softmax temperature (default 1)"})])
    add("distill", _cmd_distill, "train a student against soft labels",
        extra=[(("--soft",), {"required": True, "help": "soft-label directory"})])
    add("train-baseline", _cmd_train_baseline, "train a hard-label baseline",
        extra=[(("--mode",), {"choices": ["far-hard", "multi-cond"], "default": "far-hard"})])
    add("eval", _cmd_eval, "evaluate a saved model on a corpus split",
        extra=[(("--model",), {"required": True, "help": "model file to evaluate"}),
               (("--split",), {"choices": ["train", "dev", "eval"], "default": "eval"}),
               (("--features",), {"choices": ["far", "clean"], "default": "far"})])
    add("experiment", _cmd_experiment, "run the full baseline/teacher/student ladder")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
