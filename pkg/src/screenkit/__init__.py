"""Simulator, SMM estimator, and counterfactual toolkit for screening
markets with noisy signals."""

__version__ = "0.1.0"

from .model import (
    Applicant,
    GroupModel,
    Population,
    RiskParams,
    ScoreMap,
    SignalSpec,
    default_prob,
    posterior,
    sample_population,
    score_of_signal,
    signal_of_score,
)
from .metrics import (
    ConfusionMatrix,
    DecompositionCell,
    RocCurve,
    auc,
    auc_decomposition,
    confusion,
    forward_regression,
    log_odds_r2,
    reject_inference_tpr,
    reverse_regression,
    roc_curve,
)
from .screening import (
    CfReport,
    CfSpec,
    Decision,
    ProfitParams,
    approve,
    break_even_threshold,
    calibrate_zero_profit,
    error_rates,
    expected_profit,
    run_counterfactual,
)
from .smm import (
    EstimationConfig,
    EstimationResult,
    MomentVector,
    TruncationSpec,
    compute_moments,
    cvm_statistic,
    estimate,
    fit_benchmark,
    marginal_default_rate,
    objective,
    select_truncation,
)
from .panel import (
    FeEstimate,
    PanelCell,
    PanelConfig,
    first_stage_fe,
    ols_fe,
    synth_panel,
    tsls_fe,
    within_transform,
)
from .biaslab import (
    FeatureDataset,
    LogisticModel,
    bayes_auc,
    make_scenario,
    run_bias_experiment,
    train_logistic,
)
