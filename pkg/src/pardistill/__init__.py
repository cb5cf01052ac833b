"""Parallel-data knowledge distillation for robust frame classification.

A teacher trained on clean features produces per-frame soft labels that
supervise a student trained on time-aligned corrupted features by minimizing
soft-label cross-entropy (equivalently KL divergence).
"""

from .corpus import (
    ChannelSpec,
    CorpusSpec,
    ParallelCorpus,
    ParallelUtterance,
    Utterance,
    corrupt,
    gen_corpus,
    load_corpus,
    save_corpus,
    splice,
)
from .errors import FormatError, UsageError, ValidationError
from .evaluation import (
    MetricsReport,
    edit_distance,
    estimate_priors,
    evaluate_model,
    frame_error_rate,
    posterior_to_loglik,
    run_experiment,
    segment_error_rate,
)
from .losses import entropy, grad_logits, hard_ce, kl, soft_ce
from .network import (
    Architecture,
    ForwardTrace,
    ModelParams,
    backward,
    forward,
    init_params,
    load_model,
    params_hash,
    save_model,
    sgd_step,
)
from .numerics import RngStream, sigmoid, softmax
from .training import (
    DEFAULT_TIERS,
    SoftLabelSet,
    TeacherTier,
    TrainConfig,
    TrainHistory,
    compute_soft_labels,
    distill_student,
    early_stop,
    load_soft_labels,
    save_soft_labels,
    train_baseline,
    train_teacher,
)

__version__ = "0.1.0"
