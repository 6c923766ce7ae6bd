"""Exact variance analysis and optimal baselines for multi-agent policy
gradients on finite Markov games.

The package computes, in closed form, the per-timestep variance of four
gradient-estimator families (centralized signal, per-agent marginal signal,
counterfactual-baseline signal, and the variance-optimal-baseline signal),
verifies the decomposition identities and bounds behind them by brute-force
enumeration, and trains tabular actors with any of the baselines swapped
into the advantage slot. Everything is deterministic given a seed.
"""

from .baselines import (
    BaselineKind,
    BaselineTag,
    baseline_value,
    coma_baseline,
    ob_exact,
    ob_surrogate_discrete,
    ob_surrogate_gaussian,
    x_value,
)
from .estimators import (
    EstimatorKind,
    EstimatorTag,
    GradientContribution,
    default_horizon,
    exact_policy_gradient,
    expected_per_step_gradient,
    marginal_q_rows,
    param_dim,
    per_step_gradient,
    signal_table,
    trajectory_gradient,
)
from .games import (
    DEFAULT_ENUMERATION_CAP,
    EnumerationCapExceeded,
    MarkovGame,
    OneStepGame,
    ValidationReport,
    enumerate_joint_actions,
    load_game,
    parse_game,
    random_game,
    save_game,
    serialize_game,
    validate_game,
)
from .policies import (
    DegeneratePolicy,
    GaussianPolicy,
    JointPolicy,
    SoftmaxPolicy,
    gaussian_log_prob,
    gaussian_log_prob_grad,
    grad_log_norm_sq,
    grad_log_softmax,
    joint_action_prob_table,
    joint_action_probs,
    load_policy,
    policy_from_dict,
    policy_to_dict,
    random_softmax_policy,
    sample_action,
    save_policy,
    softmax_probs,
    uniform_policy,
    x_measure_softmax,
)
from .toy import ToyReport, run_toy, toy_game, toy_policy
from .training import (
    ContinuousOneStepTask,
    CriticConfig,
    CriticState,
    DivergenceError,
    PPOConfig,
    TrainConfig,
    TrainHistory,
    TrainResult,
    compare_baselines,
    config_from_dict,
    config_to_dict,
    init_critic,
    load_checkpoint,
    save_checkpoint,
    td_learn_q,
    train,
    train_gaussian,
)
from .values import (
    SingularSystem,
    ValueTables,
    advantage_decomposition,
    agent_subset,
    discounted_state_occupancy,
    marginal_q,
    marginal_q_tensor,
    multi_agent_advantage,
    policy_transition,
    solve_values,
    state_distributions,
)
from .variance import (
    BoundConstants,
    BoundReport,
    ExcessVarianceBounds,
    StepMoments,
    VarianceReport,
    advantage_variance_bound,
    advantage_variance_identity,
    bound_constants,
    build_variance_report,
    centralized_gap_bound,
    coma_gap_bound,
    excess_surrogate_variance,
    excess_variance_bounds,
    expected_score_norm_sq,
    local_variance,
    mc_variance,
    per_timestep_variances,
    step_moments,
    variance_decomposition,
)

__version__ = "0.1.0"
