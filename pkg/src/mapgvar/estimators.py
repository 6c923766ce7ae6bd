"""Per-step policy-gradient contributions and their exact expectation.

Every estimator multiplies a scalar signal by the acting agent's own score
vector at the visited state:

  centralized_vanilla   signal = Q(s, joint action)
  decentralized         signal = Q^i(s, own action) — the marginal critic,
                        other agents integrated out
  coma                  signal = local advantage A^i = Q - E_{a^i}[Q]
  ob_x                  signal = X^i = Q - b*, the optimal-baseline shift

All four share the same expectation; they differ only in variance. A tabular
softmax actor for agent i has one parameter per (state, action), so each
contribution vector has length n_states * |A^i| and is supported on the
visited state's block only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .games import DEFAULT_ENUMERATION_CAP, MarkovGame
from .policies import JointPolicy, joint_action_prob_table
from .values import ValueTables, state_distributions


class EstimatorTag(str, Enum):
    DECENTRALIZED = "decentralized"
    CENTRALIZED_VANILLA = "centralized_vanilla"
    COMA = "coma"
    OB_X = "ob_x"


@dataclass(frozen=True)
class EstimatorKind:
    tag: EstimatorTag
    agent: int

    def __post_init__(self):
        object.__setattr__(self, "tag", EstimatorTag(self.tag))
        if self.agent < 0:
            raise ValueError("agent index must be non-negative")


@dataclass(frozen=True)
class GradientContribution:
    vector: np.ndarray
    t: int
    kind: EstimatorKind
    state: int
    joint_action: tuple


def param_dim(game: MarkovGame, agent: int) -> int:
    return game.n_states * game.action_counts[agent]


def default_horizon(gamma: float, beta: float, tol: float = 1e-9) -> int:
    """Steps needed for the discounted tail to fall below tol * beta-scale."""
    if gamma == 0.0:
        return 1
    return max(1, math.ceil(math.log(tol * (1.0 - gamma) / beta) / math.log(gamma)))


def _check_agent(game: MarkovGame, agent: int) -> None:
    if not 0 <= agent < game.n_agents:
        raise ValueError(f"agent index {agent} out of range [0, {game.n_agents})")


def agent_axis_view(game: MarkovGame, table: np.ndarray, agent: int) -> np.ndarray:
    """Reshape an (S, A) table to (S, A_others, k_agent): agent's axis last.

    The other agents keep ascending order, so the middle axis is their
    C-order joint rank.
    """
    t = table.reshape((game.n_states, *game.action_counts))
    t = np.moveaxis(t, 1 + agent, -1)
    k = game.action_counts[agent]
    return t.reshape(game.n_states, -1, k)


def unview_agent_axis(game: MarkovGame, rows: np.ndarray, agent: int) -> np.ndarray:
    """Inverse of agent_axis_view, back to the flat (S, A) layout."""
    counts = game.action_counts
    others = tuple(c for j, c in enumerate(counts) if j != agent)
    t = rows.reshape((game.n_states, *others, counts[agent]))
    t = np.moveaxis(t, -1, 1 + agent)
    return t.reshape(game.n_states, -1)


def others_prob_table(game: MarkovGame, policy: JointPolicy, agent: int) -> np.ndarray:
    """(S, A_others) product distribution of the agents other than ``agent``."""
    out = np.ones((game.n_states, 1))
    for j in range(game.n_agents):
        if j == agent:
            continue
        pj = np.stack([policy.probs(j, s) for s in range(game.n_states)])
        out = (out[:, :, None] * pj[:, None, :]).reshape(game.n_states, -1)
    return out


def agent_prob_table(game: MarkovGame, policy: JointPolicy, agent: int) -> np.ndarray:
    return np.stack([policy.probs(agent, s) for s in range(game.n_states)])


def marginal_q_rows(
    game: MarkovGame, policy: JointPolicy, tables: ValueTables, agent: int
) -> np.ndarray:
    """Q^i(s, a^i) table of shape (S, k_i): others integrated out."""
    rows = agent_axis_view(game, tables.q, agent)
    p_others = others_prob_table(game, policy, agent)
    return np.einsum("smk,sm->sk", rows, p_others)


def signal_table(
    kind: EstimatorKind,
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
) -> np.ndarray:
    """Exact per-(state, joint action) scalar signal for the estimator kind."""
    _check_agent(game, kind.agent)
    i = kind.agent
    if kind.tag is EstimatorTag.CENTRALIZED_VANILLA:
        return tables.q.copy()
    if kind.tag is EstimatorTag.DECENTRALIZED:
        qi = marginal_q_rows(game, policy, tables, i)  # (S, k_i)
        rows = np.broadcast_to(
            qi[:, None, :],
            (game.n_states, game.n_joint_actions // game.action_counts[i],
             game.action_counts[i]),
        )
        return unview_agent_axis(game, np.ascontiguousarray(rows), i)
    rows = agent_axis_view(game, tables.q, i)  # (S, M, k)
    pi_i = agent_prob_table(game, policy, i)  # (S, k)
    if kind.tag is EstimatorTag.COMA:
        b = np.einsum("smk,sk->sm", rows, pi_i)
    else:  # OB_X
        from .policies import x_measure_softmax

        x = np.stack([x_measure_softmax(pi_i[s]) for s in range(game.n_states)])
        b = np.einsum("smk,sk->sm", rows, x)
    return unview_agent_axis(game, rows - b[:, :, None], i)


def per_step_gradient(
    kind: EstimatorKind,
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    s: int,
    joint_action,
    t: int = 0,
) -> GradientContribution:
    """Signal times the agent's score at (s, joint action); zero elsewhere."""
    if tables.policy_fingerprint != policy.fingerprint():
        raise ValueError("value tables were solved for a different policy")
    joint_action = tuple(int(a) for a in joint_action)
    i = kind.agent
    _check_agent(game, i)
    a_idx = game.joint_action_index(joint_action)
    sig = signal_table(kind, game, policy, tables)[s, a_idx]
    k = game.action_counts[i]
    probs = policy.probs(i, s)
    block = -probs * sig
    block[joint_action[i]] += sig
    vec = np.zeros(param_dim(game, i))
    vec[s * k : (s + 1) * k] = block
    return GradientContribution(
        vector=vec, t=t, kind=kind, state=s, joint_action=joint_action
    )


def trajectory_gradient(
    kind: EstimatorKind,
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    trajectory,
    horizon: int | None = None,
) -> np.ndarray:
    """Discounted sum of per-step contributions along one trajectory.

    ``trajectory`` is a sequence of (state, joint action) pairs; entries past
    ``horizon`` are ignored. The truncation error of stopping at H is at most
    gamma^H * beta/(1-gamma) * max-score-norm.
    """
    i = kind.agent
    _check_agent(game, i)
    vec = np.zeros(param_dim(game, i))
    if horizon is None:
        horizon = len(trajectory)
    sig = signal_table(kind, game, policy, tables)
    k = game.action_counts[i]
    scale = 1.0
    for t, (s, joint) in enumerate(trajectory):
        if t >= horizon:
            break
        joint = tuple(int(a) for a in joint)
        a_idx = game.joint_action_index(joint)
        value = scale * sig[s, a_idx]
        probs = policy.probs(i, s)
        vec[s * k : (s + 1) * k] -= probs * value
        vec[s * k + joint[i]] += value
        scale *= game.gamma
    return vec


def mean_step_gradient_by_state(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    agent: int,
) -> np.ndarray:
    """E_{a~pi}[Q * score | s] as (S, k_i); identical for all estimator kinds."""
    qi = marginal_q_rows(game, policy, tables, agent)
    pi_i = agent_prob_table(game, policy, agent)
    w = pi_i * qi  # (S, k)
    return w - w.sum(axis=1, keepdims=True) * pi_i


def exact_policy_gradient(
    game: MarkovGame,
    policy: JointPolicy,
    agent: int,
    horizon: int | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    """Exact discounted gradient of the expected return for one agent.

    Sum over t < H of gamma^t E_{s~d^t, a~pi}[ Q(s,a) * score ], with d^t
    propagated exactly through the kernel. The default horizon puts the
    documented truncation error below 1e-9.
    """
    from .values import solve_values

    _check_agent(game, agent)
    if horizon is None:
        horizon = default_horizon(game.gamma, game.beta)
    tables = solve_values(game, policy, cap=cap)
    mean_by_state = mean_step_gradient_by_state(game, policy, tables, agent)
    dists = state_distributions(game, policy, horizon - 1)
    k = game.action_counts[agent]
    grad = np.zeros((game.n_states, k))
    scale = 1.0
    for t in range(horizon):
        grad += scale * dists[t][:, None] * mean_by_state
        scale *= game.gamma
    return grad.reshape(-1)


def expected_per_step_gradient(
    kind: EstimatorKind,
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    s: int,
) -> np.ndarray:
    """Exhaustive E_{a~pi}[contribution | s] over the joint action space."""
    probs = joint_action_prob_table(game, policy)[s]
    sig = signal_table(kind, game, policy, tables)[s]
    i = kind.agent
    k = game.action_counts[i]
    pi_i = policy.probs(i, s)
    vec = np.zeros(k)
    for a_idx, p in enumerate(probs):
        a_i = game.joint_action(a_idx)[i]
        contrib = -pi_i * sig[a_idx]
        contrib[a_i] += sig[a_idx]
        vec += p * contrib
    out = np.zeros(param_dim(game, i))
    out[s * k : (s + 1) * k] = vec
    return out
