"""Exact and Monte-Carlo variance analysis of the gradient estimators.

The per-timestep variance of an estimator (total variance = sum over vector
components) splits across three sources:

  state   variance of the per-state mean contribution across the state
          distribution at time t,
  others  variance induced by the other agents' action draws,
  own     variance over the acting agent's own action — the only term a
          baseline can change.

Per-state moments are precomputed once per estimator so per-timestep figures
cost O(|S|) each; discounted aggregates sum gamma^{2t} Var_t with a
documented geometric tail bound. The identity and bound checks return both
sides and let callers assert, so a verification driver can count violations
without exceptions steering control flow.

Two distinct aggregate notions are reported and never conflated: the
discounted per-step sum above, and the raw variance of full trajectory-draw
gradients (mc_variance), which includes cross-timestep covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import coma_baseline, ob_surrogate_discrete
from .estimators import (
    EstimatorKind,
    EstimatorTag,
    agent_axis_view,
    agent_prob_table,
    default_horizon,
    others_prob_table,
    param_dim,
    signal_table,
)
from .games import MarkovGame
from .policies import JointPolicy
from .values import ValueTables, solve_values, state_distributions

SCHEMA_VERSION = 1
IDENTITY_TOL = 1e-9


# ---------------------------------------------------------------------------
# per-state moments and per-timestep variances


@dataclass(frozen=True)
class StepMoments:
    """Per-state ingredients of the exact per-timestep variance.

    m2[s]      = E_a[ signal^2 ||score||^2 | s ]
    mean_sq[s] = || E_a[ signal * score | s ] ||^2
    own[s]     = E_{a_others}[ Var_{a_i} | s ]
    others[s]  = Var_{a_others}[ E_{a_i} | s ]

    For a state distribution d the total variance at that step is
    d . m2 - d^2 . mean_sq (contribution blocks of distinct states are
    disjoint, so the squared norm of the mean splits per state).
    """

    m2: np.ndarray
    mean_sq: np.ndarray
    own: np.ndarray
    others: np.ndarray


def step_moments(
    kind: EstimatorKind,
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
) -> StepMoments:
    i = kind.agent
    sig_rows = agent_axis_view(game, signal_table(kind, game, policy, tables), i)
    p_others = others_prob_table(game, policy, i)  # (S, M)
    pi_i = agent_prob_table(game, policy, i)  # (S, k)
    pi_norm_sq = np.einsum("sk,sk->s", pi_i, pi_i)
    score_norm_sq = 1.0 + pi_norm_sq[:, None] - 2.0 * pi_i  # (S, k)

    m2_rows = np.einsum("sk,smk,sk->sm", pi_i, sig_rows**2, score_norm_sq)
    m2 = np.einsum("sm,sm->s", p_others, m2_rows)

    # nu(s, m) = E_{a_i}[signal * score]; with w = pi_i * signal it equals
    # w - (sum w) pi, whose squared norm expands without forming vectors.
    w = pi_i[:, None, :] * sig_rows  # (S, M, k)
    c = w.sum(axis=2)  # (S, M)
    w_norm_sq = np.einsum("smk,smk->sm", w, w)
    w_dot_pi = np.einsum("smk,sk->sm", w, pi_i)
    nu_sq = w_norm_sq - 2.0 * c * w_dot_pi + c**2 * pi_norm_sq[:, None]

    own = np.einsum("sm,sm->s", p_others, m2_rows - nu_sq)

    big_w = np.einsum("sm,smk->sk", p_others, w)  # (S, k)
    big_c = np.einsum("sm,sm->s", p_others, c)
    mean_sq = (
        np.einsum("sk,sk->s", big_w, big_w)
        - 2.0 * big_c * np.einsum("sk,sk->s", big_w, pi_i)
        + big_c**2 * pi_norm_sq
    )
    others = np.einsum("sm,sm->s", p_others, nu_sq) - mean_sq
    return StepMoments(m2=m2, mean_sq=mean_sq, own=own, others=others)


def per_timestep_variances(moments: StepMoments, dists: np.ndarray) -> np.ndarray:
    """Exact total variance at each timestep for state distributions (T, S)."""
    return dists @ moments.m2 - (dists**2) @ moments.mean_sq


def variance_decomposition(
    game: MarkovGame,
    policy: JointPolicy,
    kind: EstimatorKind,
    t: int,
    tables: ValueTables | None = None,
) -> tuple[float, float, float]:
    """(state, others, own) variance terms at timestep t; they sum to the total."""
    if tables is None:
        tables = solve_values(game, policy)
    moments = step_moments(kind, game, policy, tables)
    d = state_distributions(game, policy, t)[t]
    state_term = float(d @ moments.mean_sq - (d**2) @ moments.mean_sq)
    others_term = float(d @ moments.others)
    own_term = float(d @ moments.own)
    return state_term, others_term, own_term


def local_variance(pi_i, signal_row, grad_vectors) -> float:
    """Total variance over one agent's action of signal(a) * score-vector(a)."""
    pi_i = np.asarray(pi_i, dtype=float)
    signal_row = np.asarray(signal_row, dtype=float)
    grads = np.asarray(grad_vectors, dtype=float)
    if pi_i.shape != signal_row.shape or grads.shape[0] != pi_i.shape[0]:
        raise ValueError("pi_i, signal_row, grad_vectors must agree on length")
    v = signal_row[:, None] * grads  # (k, dim)
    first = pi_i @ v
    second = pi_i @ v**2
    return float(second.sum() - first @ first)


# ---------------------------------------------------------------------------
# advantage-variance identity and bound (with optional fixed prefix)


def _rest_tensor(
    game: MarkovGame,
    tables: ValueTables,
    s: int,
    order: tuple[int, ...],
    prefix: tuple,
) -> np.ndarray:
    """q(s, .) with prefix agents' actions fixed, axes permuted to ``order``."""
    t = tables.q[s].reshape(game.action_counts)
    idx = [slice(None)] * game.n_agents
    for agent, action in prefix:
        idx[agent] = int(action)
    t = t[tuple(idx)]
    remaining = sorted(set(range(game.n_agents)) - {a for a, _ in prefix})
    perm = [remaining.index(a) for a in order]
    return np.transpose(t, perm) if perm else t


def _split_prefix_order(game: MarkovGame, prefix, order):
    prefix = tuple((int(a), int(x)) for a, x in prefix)
    fixed = [a for a, _ in prefix]
    if len(set(fixed)) != len(fixed):
        raise ValueError("prefix agents must be distinct")
    rest = set(range(game.n_agents)) - set(fixed)
    if order is None:
        order = tuple(sorted(rest))
    else:
        order = tuple(int(a) for a in order)
    if set(order) != rest or len(order) != len(rest):
        raise ValueError("order must enumerate exactly the non-prefix agents")
    return prefix, order


def advantage_variance_identity(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    s: int,
    order=None,
    prefix=(),
) -> tuple[float, float]:
    """Joint-advantage variance vs. its chained per-agent form; returns (lhs, rhs).

    lhs is the variance (over the non-prefix agents' joint draw) of the
    coalition advantage at state s given the prefix actions. rhs peels agents
    off in ``order``: each term is the expected own-action variance of that
    agent's advantage conditioned on the earlier agents' draws. The two are
    equal for every ordering; fixing a nonempty prefix gives the conditional
    version of the same identity.
    """
    prefix, order = _split_prefix_order(game, prefix, order)
    t = _rest_tensor(game, tables, s, order, prefix)
    probs = [policy.probs(a, s) for a in order]

    w = np.ones(())
    for p in probs:
        w = np.multiply.outer(w, p)
    mean = float((w * t).sum())
    lhs = float((w * t**2).sum()) - mean**2

    rhs = 0.0
    for j in range(len(order)):
        partial = t
        for r in range(len(order) - 1, j, -1):
            partial = np.tensordot(partial, probs[r], axes=(r, 0))
        # partial has axes for order[0..j]; weighted variance along axis j,
        # then expectation over the earlier axes.
        e1 = np.tensordot(partial, probs[j], axes=(j, 0))
        e2 = np.tensordot(partial**2, probs[j], axes=(j, 0))
        var_j = e2 - e1**2
        w_before = np.ones(())
        for r in range(j):
            w_before = np.multiply.outer(w_before, probs[r])
        rhs += float((w_before * var_j).sum())
    return lhs, rhs


def advantage_variance_bound(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    s: int,
    order=None,
    prefix=(),
) -> tuple[float, float]:
    """Joint-advantage variance vs. the independent-row sum; returns (lhs, rhs).

    rhs sums, per non-prefix agent, the variance (over the full non-prefix
    joint draw) of that agent's advantage given everyone else's sampled
    actions. lhs <= rhs always; the caller asserts the slack.
    """
    prefix, order = _split_prefix_order(game, prefix, order)
    t = _rest_tensor(game, tables, s, order, prefix)
    probs = [policy.probs(a, s) for a in order]

    w = np.ones(())
    for p in probs:
        w = np.multiply.outer(w, p)
    mean = float((w * t).sum())
    lhs = float((w * t**2).sum()) - mean**2

    rhs = 0.0
    for j in range(len(order)):
        cond_mean = np.tensordot(t, probs[j], axes=(j, 0))
        adv = t - np.expand_dims(cond_mean, axis=j)
        m1 = float((w * adv).sum())
        rhs += float((w * adv**2).sum()) - m1**2
    return lhs, rhs


# ---------------------------------------------------------------------------
# bound constants and the estimator-gap bounds


@dataclass(frozen=True)
class BoundConstants:
    """Exact suprema over the finite spaces.

    score_norm_max[i]   max over (s, a^i) of ||score of agent i||
    adv_abs_max[i]      max over (s, a_others, a^i) of |local advantage|
    adv_abs_max_overall max_i adv_abs_max[i]
    """

    score_norm_max: np.ndarray
    adv_abs_max: np.ndarray
    adv_abs_max_overall: float


def bound_constants(
    game: MarkovGame, policy: JointPolicy, tables: ValueTables
) -> BoundConstants:
    score = np.empty(game.n_agents)
    adv = np.empty(game.n_agents)
    for i in range(game.n_agents):
        pi_i = agent_prob_table(game, policy, i)
        norm_sq = 1.0 + np.einsum("sk,sk->s", pi_i, pi_i)[:, None] - 2.0 * pi_i
        score[i] = math.sqrt(float(norm_sq.max()))
        rows = agent_axis_view(game, tables.q, i)
        cond_mean = np.einsum("smk,sk->sm", rows, pi_i)
        adv[i] = float(np.abs(rows - cond_mean[:, :, None]).max())
    return BoundConstants(
        score_norm_max=score,
        adv_abs_max=adv,
        adv_abs_max_overall=float(adv.max()),
    )


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    bounds: tuple[float, ...]
    constants: BoundConstants
    horizon: int
    truncation_error: float
    holds: bool


def _gap_horizon(gamma: float, tail_scale: float, tol: float) -> int:
    if gamma == 0.0 or tail_scale <= 0.0:
        return 1
    h = math.ceil(
        math.log(tol * (1.0 - gamma**2) / tail_scale) / (2.0 * math.log(gamma))
    )
    return max(1, h)


def _discounted_gap(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    kind_a: EstimatorKind,
    kind_b: EstimatorKind,
    tail_scale: float,
    tol: float,
) -> tuple[float, int, float]:
    horizon = _gap_horizon(game.gamma, tail_scale, tol)
    dists = state_distributions(game, policy, horizon - 1)
    var_a = per_timestep_variances(step_moments(kind_a, game, policy, tables), dists)
    var_b = per_timestep_variances(step_moments(kind_b, game, policy, tables), dists)
    weights = game.gamma ** (2.0 * np.arange(horizon))
    lhs = float(weights @ (var_a - var_b))
    tail = (
        0.0
        if game.gamma == 0.0
        else game.gamma ** (2 * horizon) * tail_scale / (1.0 - game.gamma**2)
    )
    return lhs, horizon, tail


def centralized_gap_bound(
    game: MarkovGame,
    policy: JointPolicy,
    agent: int,
    tables: ValueTables | None = None,
    tol: float = IDENTITY_TOL,
) -> BoundReport:
    """Discounted excess variance of the centralized estimator over the
    decentralized one, against its two closed-form bounds.

    lhs = sum_t gamma^{2t} (Var_t[centralized] - Var_t[decentralized])
    bound 1: B_i^2 / (1 - gamma^2) * sum_{j != i} eps_j^2
    bound 2: (n-1) (eps B_i)^2 / (1 - gamma^2)

    where B_i is the agent's max score norm and eps_j the max absolute local
    advantage. The per-step gap is non-negative and at most the bound-1
    numerator, which gives the documented truncation tail.
    """
    if tables is None:
        tables = solve_values(game, policy)
    consts = bound_constants(game, policy, tables)
    inv = 1.0 if game.gamma == 0.0 else 1.0 / (1.0 - game.gamma**2)
    others_sq = float(
        np.sum(np.delete(consts.adv_abs_max, agent) ** 2)
    )
    b_i = float(consts.score_norm_max[agent])
    rhs1 = b_i**2 * inv * others_sq
    rhs2 = (game.n_agents - 1) * (consts.adv_abs_max_overall * b_i) ** 2 * inv
    lhs, horizon, tail = _discounted_gap(
        game,
        policy,
        tables,
        EstimatorKind(EstimatorTag.CENTRALIZED_VANILLA, agent),
        EstimatorKind(EstimatorTag.DECENTRALIZED, agent),
        tail_scale=b_i**2 * others_sq,
        tol=tol,
    )
    holds = lhs <= rhs1 + tol and rhs1 <= rhs2 + tol
    return BoundReport(
        lhs=lhs,
        bounds=(rhs1, rhs2),
        constants=consts,
        horizon=horizon,
        truncation_error=tail,
        holds=holds,
    )


def coma_gap_bound(
    game: MarkovGame,
    policy: JointPolicy,
    agent: int,
    tables: ValueTables | None = None,
    tol: float = IDENTITY_TOL,
) -> BoundReport:
    """Discounted excess variance of the counterfactual-baseline estimator
    over the decentralized one: lhs <= (eps_i B_i)^2 / (1 - gamma^2).

    The per-step gap may be negative, so the truncation tail uses
    B_i^2 max(eps_i, beta/(1-gamma))^2, which dominates either per-step
    variance.
    """
    if tables is None:
        tables = solve_values(game, policy)
    consts = bound_constants(game, policy, tables)
    inv = 1.0 if game.gamma == 0.0 else 1.0 / (1.0 - game.gamma**2)
    b_i = float(consts.score_norm_max[agent])
    eps_i = float(consts.adv_abs_max[agent])
    rhs = (eps_i * b_i) ** 2 * inv
    q_scale = game.beta if game.gamma == 0.0 else game.beta / (1.0 - game.gamma)
    lhs, horizon, tail = _discounted_gap(
        game,
        policy,
        tables,
        EstimatorKind(EstimatorTag.COMA, agent),
        EstimatorKind(EstimatorTag.DECENTRALIZED, agent),
        tail_scale=b_i**2 * max(eps_i, q_scale) ** 2,
        tol=tol,
    )
    holds = lhs <= rhs + tol
    return BoundReport(
        lhs=lhs,
        bounds=(rhs,),
        constants=consts,
        horizon=horizon,
        truncation_error=tail,
        holds=holds,
    )


# ---------------------------------------------------------------------------
# excess variance of a suboptimal baseline


def expected_score_norm_sq(pi_i) -> float:
    """E_{a~pi}[||score(a)||^2], which equals 1 - ||pi||^2 for softmax."""
    pi_i = np.asarray(pi_i, dtype=float)
    norm_sq = 1.0 + pi_i @ pi_i - 2.0 * pi_i
    return float(pi_i @ norm_sq)


def excess_surrogate_variance(b: float, q_row, pi_i, tol: float = 1e-10) -> float:
    """Variance penalty of baseline b over the optimum on one Q-row.

    Closed form (b - b*)^2 * E_pi[||score||^2]; equals the direct difference
    local_variance(q - b) - local_variance(q - b*) exactly.
    """
    b_star = ob_surrogate_discrete(q_row, pi_i, tol=tol)
    return (float(b) - b_star) ** 2 * expected_score_norm_sq(pi_i)


@dataclass(frozen=True)
class ExcessVarianceBounds:
    delta_vanilla: float
    delta_coma: float
    bound_vanilla: float
    bound_coma: float
    bound_coma_const: float
    score_norm_max: float
    holds: bool


def excess_variance_bounds(q_row, pi_i, tol: float = 1e-10) -> ExcessVarianceBounds:
    """Closed-form penalties of the zero and counterfactual baselines with
    their upper bounds on one Q-row.

    delta_vanilla <= D^2 (Var[A] + Qbar^2) and
    delta_coma    <= D^2 Var[A] <= (eps D)^2,
    with D the max score norm on the row, A = Q - Qbar the local advantage,
    Qbar its policy mean, and eps = max |A|.
    """
    q_row = np.asarray(q_row, dtype=float)
    pi_i = np.asarray(pi_i, dtype=float)
    q_bar = coma_baseline(q_row, pi_i)
    delta_vanilla = excess_surrogate_variance(0.0, q_row, pi_i, tol=tol)
    delta_coma = excess_surrogate_variance(q_bar, q_row, pi_i, tol=tol)
    norm_sq = 1.0 + pi_i @ pi_i - 2.0 * pi_i
    d_max = math.sqrt(float(norm_sq.max()))
    adv = q_row - q_bar
    var_adv = float(pi_i @ adv**2)
    eps = float(np.abs(adv).max())
    bound_vanilla = d_max**2 * (var_adv + q_bar**2)
    bound_coma = d_max**2 * var_adv
    bound_coma_const = (eps * d_max) ** 2
    holds = (
        delta_vanilla <= bound_vanilla + IDENTITY_TOL
        and delta_coma <= bound_coma + IDENTITY_TOL
        and bound_coma <= bound_coma_const + IDENTITY_TOL
    )
    return ExcessVarianceBounds(
        delta_vanilla=delta_vanilla,
        delta_coma=delta_coma,
        bound_vanilla=bound_vanilla,
        bound_coma=bound_coma,
        bound_coma_const=bound_coma_const,
        score_norm_max=d_max,
        holds=holds,
    )


# ---------------------------------------------------------------------------
# Monte-Carlo estimator variance over trajectory draws


def mc_variance(
    kind: EstimatorKind,
    game: MarkovGame,
    policy: JointPolicy,
    n_trajectories: int,
    horizon: int,
    rng: np.random.Generator,
    tables: ValueTables | None = None,
    chunk_size: int = 1 << 16,
) -> tuple[float, float]:
    """Sample variance of trajectory-gradient draws, with its standard error.

    Unlike the discounted per-step sum, this is the raw variance of full
    trajectory draws and includes cross-timestep covariance. Rollouts are
    vectorized in chunks; moment accumulators make the estimate independent
    of chunking, and the SE comes from the sample variance of the squared
    deviations (delta method).
    """
    if n_trajectories < 2:
        raise ValueError("need at least 2 trajectories")
    if tables is None:
        tables = solve_values(game, policy)
    i = kind.agent
    k = game.action_counts[i]
    dim = param_dim(game, i)
    sig = signal_table(kind, game, policy, tables)
    pi_tables = [agent_prob_table(game, policy, j) for j in range(game.n_agents)]
    cdfs = [np.cumsum(p, axis=1) for p in pi_tables]
    init_cdf = np.cumsum(game.initial_dist)
    trans_cdf = np.cumsum(game.transition, axis=2)
    counts = game.action_counts

    s1 = np.zeros(dim)
    q1 = 0.0
    q2 = 0.0
    c_vec = np.zeros(dim)
    p_mat = np.zeros((dim, dim))

    remaining = n_trajectories
    while remaining > 0:
        m = min(chunk_size, remaining)
        remaining -= m
        rows = np.arange(m)
        s = np.searchsorted(init_cdf, rng.random(m), side="right").clip(
            0, game.n_states - 1
        )
        grads = np.zeros((m, game.n_states, k))
        scale = 1.0
        for _ in range(horizon):
            a_idx = np.zeros(m, dtype=np.int64)
            a_own = None
            for j in range(game.n_agents):
                u = rng.random(m)
                a_j = (u[:, None] > cdfs[j][s]).sum(axis=1).clip(0, counts[j] - 1)
                a_idx = a_idx * counts[j] + a_j
                if j == i:
                    a_own = a_j
            val = scale * sig[s, a_idx]
            grads[rows, s] -= pi_tables[i][s] * val[:, None]
            grads[rows, s, a_own] += val
            u = rng.random(m)
            s = (u[:, None] > trans_cdf[s, a_idx]).sum(axis=1).clip(
                0, game.n_states - 1
            )
            scale *= game.gamma
        flat = grads.reshape(m, dim)
        norm_sq = np.einsum("md,md->m", flat, flat)
        s1 += flat.sum(axis=0)
        q1 += float(norm_sq.sum())
        q2 += float(norm_sq @ norm_sq)
        c_vec += flat.T @ norm_sq
        p_mat += flat.T @ flat

    n = n_trajectories
    mean = s1 / n
    mean_sq = float(mean @ mean)
    sum_w = q1 - n * mean_sq  # sum of ||g - mean||^2
    estimate = sum_w / (n - 1)
    sum_w2 = (
        q2
        + 4.0 * float(mean @ p_mat @ mean)
        - 4.0 * float(c_vec @ mean)
        + 2.0 * mean_sq * q1
        - 3.0 * n * mean_sq**2
    )
    var_w = max(sum_w2 / n - (sum_w / n) ** 2, 0.0)
    se = math.sqrt(var_w / n)
    return float(estimate), float(se)


# ---------------------------------------------------------------------------
# report assembly


@dataclass
class VarianceReport:
    """All exact figures for one (game, policy, agent) plus optional MC rows."""

    agent: int
    t_max: int
    per_t: dict  # tag -> {"variance": arr, "state": arr, "others": arr, "own": arr}
    discounted_per_step_sum: dict  # tag -> float
    aggregate_horizon: int
    aggregate_tail_bound: float
    constants: BoundConstants
    centralized_gap: BoundReport
    coma_gap: BoundReport
    mc: dict = field(default_factory=dict)  # tag -> {"n", "horizon", "estimate", "se"}
    schema_version: int = SCHEMA_VERSION

    def to_csv_rows(self) -> list[tuple]:
        rows = [("schema_version", -1, "value", float(self.schema_version))]
        for tag, terms in sorted(self.per_t.items()):
            for term in ("variance", "state", "others", "own"):
                for t, value in enumerate(terms[term]):
                    rows.append((tag, t, term, float(value)))
        for tag, value in sorted(self.discounted_per_step_sum.items()):
            rows.append((tag, -1, "discounted_per_step_sum", float(value)))
        for tag, entry in sorted(self.mc.items()):
            rows.append((tag, -1, "trajectory_draw_variance", float(entry["estimate"])))
            rows.append((tag, -1, "trajectory_draw_se", float(entry["se"])))
        return rows

    def to_json_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "agent": self.agent,
            "t_max": self.t_max,
            "per_timestep": {
                tag: {term: list(map(float, arr)) for term, arr in terms.items()}
                for tag, terms in sorted(self.per_t.items())
            },
            "discounted_per_step_sum": {
                tag: float(v)
                for tag, v in sorted(self.discounted_per_step_sum.items())
            },
            "aggregate_horizon": self.aggregate_horizon,
            "aggregate_tail_bound": self.aggregate_tail_bound,
            "bound_constants": {
                "score_norm_max": list(map(float, self.constants.score_norm_max)),
                "adv_abs_max": list(map(float, self.constants.adv_abs_max)),
                "adv_abs_max_overall": self.constants.adv_abs_max_overall,
            },
            "centralized_gap": _bound_report_dict(self.centralized_gap),
            "coma_gap": _bound_report_dict(self.coma_gap),
            "monte_carlo": {
                tag: {
                    "n": entry["n"],
                    "horizon": entry["horizon"],
                    "trajectory_draw_variance": float(entry["estimate"]),
                    "standard_error": float(entry["se"]),
                }
                for tag, entry in sorted(self.mc.items())
            },
        }


def _bound_report_dict(report: BoundReport) -> dict:
    return {
        "lhs": report.lhs,
        "bounds": list(report.bounds),
        "horizon": report.horizon,
        "truncation_error": report.truncation_error,
        "holds": report.holds,
    }


ALL_TAGS = (
    EstimatorTag.CENTRALIZED_VANILLA,
    EstimatorTag.DECENTRALIZED,
    EstimatorTag.COMA,
    EstimatorTag.OB_X,
)


def build_variance_report(
    game: MarkovGame,
    policy: JointPolicy,
    agent: int,
    t_max: int = 20,
    mc_trajectories: int = 0,
    mc_horizon: int | None = None,
    rng: np.random.Generator | None = None,
    tol: float = IDENTITY_TOL,
) -> VarianceReport:
    tables = solve_values(game, policy)
    moments = {
        tag: step_moments(EstimatorKind(tag, agent), game, policy, tables)
        for tag in ALL_TAGS
    }
    tail_scale = max(float(m.m2.max()) for m in moments.values())
    agg_horizon = _gap_horizon(game.gamma, tail_scale, tol)
    dists = state_distributions(game, policy, max(t_max, agg_horizon - 1))
    weights = game.gamma ** (2.0 * np.arange(agg_horizon))
    per_t = {}
    aggregates = {}
    for tag, m in moments.items():
        var_all = per_timestep_variances(m, dists)
        d = dists[: t_max + 1]
        state_terms = d @ m.mean_sq - (d**2) @ m.mean_sq
        per_t[tag.value] = {
            "variance": var_all[: t_max + 1],
            "state": state_terms,
            "others": d @ m.others,
            "own": d @ m.own,
        }
        aggregates[tag.value] = float(weights @ var_all[:agg_horizon])
    tail = (
        0.0
        if game.gamma == 0.0
        else game.gamma ** (2 * agg_horizon) * tail_scale / (1.0 - game.gamma**2)
    )
    report = VarianceReport(
        agent=agent,
        t_max=t_max,
        per_t=per_t,
        discounted_per_step_sum=aggregates,
        aggregate_horizon=agg_horizon,
        aggregate_tail_bound=tail,
        constants=bound_constants(game, policy, tables),
        centralized_gap=centralized_gap_bound(game, policy, agent, tables, tol),
        coma_gap=coma_gap_bound(game, policy, agent, tables, tol),
    )
    if mc_trajectories > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        horizon = (
            mc_horizon
            if mc_horizon is not None
            else min(default_horizon(game.gamma, game.beta), 200)
        )
        for tag in ALL_TAGS:
            estimate, se = mc_variance(
                EstimatorKind(tag, agent),
                game,
                policy,
                mc_trajectories,
                horizon,
                rng,
                tables=tables,
            )
            report.mc[tag.value] = {
                "n": mc_trajectories,
                "horizon": horizon,
                "estimate": estimate,
                "se": se,
            }
    return report
