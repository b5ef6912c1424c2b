"""Forward-corrected classifier training and aggregation baselines."""
from src.domain.crowdtrain.aggregation import (
    DS_SMOOTHING,
    AggregatedLabels,
    AnnotationTable,
    DsModel,
    DsResult,
    aggregate_majority,
    complete_log_likelihood,
    dawid_skene_em,
    ds_e_step,
    ds_log_likelihood,
    ds_m_step,
    majority_vote,
)
from src.domain.crowdtrain.classifier import (
    ClassifierFit,
    ClassifierNetwork,
    CorrectionPairs,
    corrected_loss,
    evaluate,
    noisy_agreement,
    source_transition_error,
    train_classifier,
    train_plain,
    transition_error,
    evaluation_pairs,
)
from src.domain.crowdtrain.loss import batch_forward_corrected_loss, forward_corrected_loss

__all__ = [
    "DS_SMOOTHING",
    "AggregatedLabels",
    "AnnotationTable",
    "ClassifierFit",
    "ClassifierNetwork",
    "CorrectionPairs",
    "DsModel",
    "DsResult",
    "aggregate_majority",
    "batch_forward_corrected_loss",
    "complete_log_likelihood",
    "corrected_loss",
    "dawid_skene_em",
    "ds_e_step",
    "ds_log_likelihood",
    "ds_m_step",
    "evaluate",
    "forward_corrected_loss",
    "majority_vote",
    "noisy_agreement",
    "source_transition_error",
    "train_classifier",
    "train_plain",
    "transition_error",
    "evaluation_pairs",
]
