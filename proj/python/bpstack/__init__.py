"""Stacked-ensemble blood pressure prediction with quantile intervals."""

from ._core import (
    ConfigError,
    DataError,
    Ensemble,
    GbmModel,
    InvariantError,
    aami_check,
    bhs_grade,
    core_metrics,
    coverage_probability,
    equity_ratio,
    fit_ensemble,
    fit_gbm,
    fit_quantile,
    generalizability,
    generate_synthetic,
    kl_divergence,
    leakage_matches,
    pinball_loss,
    plan_group_kfold,
    predict_file,
    set_max_threads,
    train,
)

__version__ = "0.1.0"
