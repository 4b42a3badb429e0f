"""Adversarial image detection via spectral perturbation.

Thin package wrapper around the compiled core: PCA basis fitting, white-box
attacks (FGSM/BIM/PGD/CW-L2), the fixed-budget and sequential detectors, and
SPSA-based threshold training.
"""

from ._core import (
    ApertConfig,
    AttackResult,
    DetectionOutcome,
    MlpModel,
    SpectralBasis,
    apert_test,
    bim,
    cw_l2,
    evaluate_pert,
    explained_variance,
    fgsm,
    fit_pca,
    forward,
    load_basis,
    load_model,
    loss_gradient,
    pert_detect,
    perturb_least_significant,
    pgd,
    predict,
    project,
    q_statistic,
    reconstruct,
    save_basis,
    save_model,
    srt,
    synth_dataset,
    train_apert,
    train_mlp,
    validate_schedule,
)

__all__ = [
    "ApertConfig",
    "AttackResult",
    "DetectionOutcome",
    "MlpModel",
    "SpectralBasis",
    "apert_test",
    "bim",
    "cw_l2",
    "evaluate_pert",
    "explained_variance",
    "fgsm",
    "fit_pca",
    "forward",
    "load_basis",
    "load_model",
    "loss_gradient",
    "pert_detect",
    "perturb_least_significant",
    "pgd",
    "predict",
    "project",
    "q_statistic",
    "reconstruct",
    "save_basis",
    "save_model",
    "srt",
    "synth_dataset",
    "train_apert",
    "train_mlp",
    "validate_schedule",
]
