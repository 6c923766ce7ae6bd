"""Exact value functions for finite Markov games under a joint policy.

V solves the |S|-dimensional linear system (I - gamma P_pi) V = r_pi directly;
Q follows from one Bellman backup. Marginal Q-values over a coalition of
agents are exact expectations over the excluded agents' product policy, and
coalition advantages are differences of two marginals:

    A^{of}(s, a_given, a_of) = Q^{given+of}(s, ...) - Q^{given}(s, ...)

The telescoping identity behind `advantage_decomposition` is the reason the
per-agent advantages chain into the joint one in any order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .games import DEFAULT_ENUMERATION_CAP, EnumerationCapExceeded, MarkovGame
from .policies import JointPolicy, joint_action_prob_table

BELLMAN_TOL = 1e-9
VI_TOL = 1e-12
VI_MAX_SWEEPS = 2_000_000


class SingularSystem(RuntimeError):
    """The value linear system could not be solved to tolerance."""


@dataclass(frozen=True, eq=False)
class ValueTables:
    """q: (n_states, n_joint_actions); v: (n_states,). Immutable after solve."""

    q: np.ndarray
    v: np.ndarray
    gamma: float
    policy_fingerprint: str

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).copy()
        v = np.asarray(self.v, dtype=float).copy()
        q.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)


def policy_transition(game: MarkovGame, policy: JointPolicy) -> np.ndarray:
    """State-to-state kernel P_pi(s'|s) under the joint policy."""
    probs = joint_action_prob_table(game, policy)
    return np.einsum("sa,sat->st", probs, game.transition)


def solve_values(
    game: MarkovGame,
    policy: JointPolicy,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ValueTables:
    """Exact Q and V. Direct dense solve; value-iteration fallback at 1e-12.

    Raises SingularSystem if the linear system is outright singular (possible
    only for malformed kernels; with stochastic rows and gamma < 1 the system
    matrix is always invertible).
    """
    if game.n_states * game.n_joint_actions > cap:
        raise EnumerationCapExceeded(
            f"{game.n_states * game.n_joint_actions} q-table entries exceeds {cap}"
        )
    probs = joint_action_prob_table(game, policy)
    p_pi = np.einsum("sa,sat->st", probs, game.transition)
    r_pi = np.einsum("sa,sa->s", probs, game.reward)
    m = np.eye(game.n_states) - game.gamma * p_pi
    try:
        v = np.linalg.solve(m, r_pi)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"value system is singular: {exc}") from exc
    scale = max(1.0, float(np.max(np.abs(r_pi))))
    ill_conditioned = (
        not np.all(np.isfinite(v))
        or float(np.max(np.abs(m @ v - r_pi))) > 1e-10 * scale
    )
    if ill_conditioned:
        v = np.zeros(game.n_states) if not np.all(np.isfinite(v)) else v
        for _ in range(VI_MAX_SWEEPS):
            v_next = r_pi + game.gamma * p_pi @ v
            done = float(np.max(np.abs(v_next - v))) < VI_TOL
            v = v_next
            if done:
                break
        else:
            raise SingularSystem("value iteration failed to reach tolerance")
    q = game.reward + game.gamma * game.transition @ v
    bellman = float(np.max(np.abs(v - np.einsum("sa,sa->s", probs, q))))
    if bellman > BELLMAN_TOL:
        raise SingularSystem(
            f"Bellman residual {bellman!r} exceeds {BELLMAN_TOL!r}"
        )
    return ValueTables(
        q=q, v=v, gamma=game.gamma, policy_fingerprint=policy.fingerprint()
    )


def agent_subset(indices, n_agents: int) -> tuple[int, ...]:
    """Validated coalition: distinct agent indices in [0, n). Order preserved."""
    subset = tuple(int(i) for i in indices)
    if len(set(subset)) != len(subset):
        raise ValueError(f"coalition indices must be distinct: {subset}")
    for i in subset:
        if not 0 <= i < n_agents:
            raise ValueError(f"agent index {i} out of range [0, {n_agents})")
    return subset


def marginal_q_tensor(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    subset,
    s: int,
) -> np.ndarray:
    """Q^{subset}(s, .) as a tensor over the subset agents' actions.

    Axes follow ascending agent index regardless of the order in ``subset``.
    The excluded agents are integrated out against their policies at s.
    Empty subset yields a 0-d tensor equal to V(s); the full set yields the
    raw q-row reshaped.
    """
    subset = agent_subset(subset, game.n_agents)
    keep = set(subset)
    t = tables.q[s].reshape(game.action_counts)
    for j in range(game.n_agents - 1, -1, -1):
        if j not in keep:
            t = np.tensordot(t, policy.probs(j, s), axes=(j, 0))
    return t


def marginal_q(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    subset,
    actions,
    s: int,
) -> float:
    """Expected Q at s with the coalition's actions fixed, others integrated out."""
    subset = agent_subset(subset, game.n_agents)
    actions = tuple(int(a) for a in actions)
    if len(actions) != len(subset):
        raise ValueError(
            f"{len(subset)} coalition agents but {len(actions)} actions given"
        )
    t = marginal_q_tensor(game, policy, tables, subset, s)
    # tensor axes are in ascending agent order; reorder the given actions to match
    order = np.argsort(subset)
    idx = tuple(actions[int(j)] for j in order)
    return float(t[idx])


def multi_agent_advantage(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    s: int,
    given,
    given_actions,
    of,
    of_actions,
) -> float:
    """Advantage of coalition ``of`` acting at s, conditioned on ``given``.

    Q^{given+of}(s, both blocks) - Q^{given}(s, given block). The two
    coalitions must be disjoint.
    """
    given = agent_subset(given, game.n_agents)
    of = agent_subset(of, game.n_agents)
    if set(given) & set(of):
        raise ValueError(f"coalitions overlap: {sorted(set(given) & set(of))}")
    both = given + of
    both_actions = tuple(given_actions) + tuple(of_actions)
    return marginal_q(game, policy, tables, both, both_actions, s) - marginal_q(
        game, policy, tables, given, given_actions, s
    )


def advantage_decomposition(
    game: MarkovGame,
    policy: JointPolicy,
    tables: ValueTables,
    s: int,
    order,
    actions,
    prefix_len: int = 0,
) -> tuple[float, float]:
    """Coalition advantage vs. its telescoped per-agent chain; returns (lhs, rhs).

    ``order`` is any sequence of distinct agents; ``actions`` their actions in
    the same order. The first ``prefix_len`` agents are held fixed as the
    conditioning coalition on both sides. lhs is the advantage of the
    remaining agents acting jointly; rhs peels them off one at a time:

        A^{rest}(s, prefix, a_rest) = sum_j A^{order[j]}(s, order[:j], a_j)

    Exact for every ordering, which is why the identity is permutation-free.
    """
    order = agent_subset(order, game.n_agents)
    actions = tuple(int(a) for a in actions)
    if len(actions) != len(order):
        raise ValueError("one action per agent in `order` required")
    if not 0 <= prefix_len <= len(order):
        raise ValueError("prefix_len out of range")
    lhs = multi_agent_advantage(
        game,
        policy,
        tables,
        s,
        order[:prefix_len],
        actions[:prefix_len],
        order[prefix_len:],
        actions[prefix_len:],
    )
    rhs = 0.0
    for j in range(prefix_len, len(order)):
        rhs += multi_agent_advantage(
            game,
            policy,
            tables,
            s,
            order[:j],
            actions[:j],
            (order[j],),
            (actions[j],),
        )
    return lhs, rhs


def state_distributions(
    game: MarkovGame, policy: JointPolicy, t_max: int
) -> np.ndarray:
    """d^t for t = 0..t_max as a (t_max+1, n_states) array."""
    p_pi = policy_transition(game, policy)
    out = np.empty((t_max + 1, game.n_states))
    out[0] = game.initial_dist
    for t in range(t_max):
        out[t + 1] = out[t] @ p_pi
    return out


def discounted_state_occupancy(game: MarkovGame, policy: JointPolicy) -> np.ndarray:
    """eta = sum_t gamma^t d^t, solved exactly from eta = d0 + gamma P_pi^T eta."""
    p_pi = policy_transition(game, policy)
    m = np.eye(game.n_states) - game.gamma * p_pi.T
    return np.linalg.solve(m, game.initial_dist)
