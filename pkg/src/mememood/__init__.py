"""Meme mood analysis: cooperative-teaching sentiment and cascaded
emotion-intensity classification over pluggable multi-modal embeddings."""

from .cache import EmbeddingCache
from .cec import (
    CecLossBreakdown,
    CecModel,
    CecTrainConfig,
    ScaleLogits,
    cascade_forward,
    cec_batch_loss,
    fuse,
    infer_cec,
    loss_emotion_bce,
    loss_scale_ce,
    scale_heads_forward,
    train_cec,
)
from .ctm import (
    CtmState,
    CtmTrainConfig,
    GaussianPrior,
    LossBreakdown,
    PerturbationConfig,
    ProbabilityHistogram,
    ctm_batch_loss,
    empirical_histogram,
    infer_sentiment,
    loss_confidence,
    loss_distribution_reg,
    loss_student_mse,
    loss_teacher_bce,
    perturb_embedding,
    record_thresholds,
    student_forward,
    teacher_forward,
    train_ctm,
)
from .data import (
    BUNDLED_DISTRIBUTIONS,
    DatasetSplit,
    LabelDistributionSpec,
    MemeRecord,
    generate_synthetic,
    load_manifest,
    save_manifest,
    split_dataset,
)
from .embeddings import (
    BackendDescriptor,
    LabelProfile,
    MultiModalEmbedding,
    SyntheticBackend,
    encode_meme,
    register_backend,
    synthetic_encode,
)
from .labels import (
    EmotionPresenceVector,
    EmotionScaleVector,
    PreLabelPair,
    SentimentLabel,
    make_pre_label,
    presence_from_scales,
)
from .metrics import ConfusionMatrix, task_b_f1, task_c_f1, weighted_f1
from .runs import RunConfig, RunReport, ablate, load_run_checkpoint, run, save_run_checkpoint

__version__ = "0.1.0"
