"""Independent brute-force routes used to cross-check the vectorized code.

Everything here trades speed for obviousness: explicit itertools loops,
value iteration instead of a linear solve, full path enumeration instead of
moment algebra. Keep these dumb.
"""
import itertools

import numpy as np

from mapgvar import per_step_gradient, trajectory_gradient
from mapgvar.estimators import param_dim


def joint_probs_oracle(game, policy):
    """(S, A) joint action probabilities by explicit product over agents."""
    out = np.empty((game.n_states, game.n_joint_actions))
    ranges = [range(k) for k in game.action_counts]
    for s in range(game.n_states):
        per = [policy.probs(i, s) for i in range(game.n_agents)]
        for idx, combo in enumerate(itertools.product(*ranges)):
            p = 1.0
            for i, a in enumerate(combo):
                p *= float(per[i][a])
            out[s, idx] = p
    return out


def vi_q_oracle(game, policy, tol=1e-13, max_sweeps=200_000):
    """Q by plain value iteration; independent of the dense linear solve."""
    joint = joint_probs_oracle(game, policy)
    q = np.zeros((game.n_states, game.n_joint_actions))
    for _ in range(max_sweeps):
        v = (joint * q).sum(axis=1)
        nxt = game.reward + game.gamma * game.transition @ v
        if np.abs(nxt - q).max() <= tol * max(1.0 - game.gamma, 1e-3):
            return nxt
        q = nxt
    raise AssertionError("value iteration did not converge")


def marginal_q_oracle(game, policy, tables, subset, actions, s):
    """E[Q | coalition actions fixed] by summing over every joint action."""
    fixed = dict(zip(subset, actions))
    ranges = [range(k) for k in game.action_counts]
    per = [policy.probs(i, s) for i in range(game.n_agents)]
    total = 0.0
    for combo in itertools.product(*ranges):
        if any(combo[i] != a for i, a in fixed.items()):
            continue
        p = 1.0
        for i, a in enumerate(combo):
            if i not in fixed:
                p *= float(per[i][a])
        total += p * float(tables.q[s, game.joint_action_index(combo)])
    return total


def per_t_variance_oracle(kind, game, policy, tables, dist_t):
    """Total Var of the one-step contribution at state weights dist_t.

    Enumerates every (state, joint action) and uses the full parameter-space
    vectors, so the block-disjointness shortcut in the fast route is itself
    under test.
    """
    joint = joint_probs_oracle(game, policy)
    mean = np.zeros(param_dim(game, kind.agent))
    second = 0.0
    for s in range(game.n_states):
        ws = float(dist_t[s])
        if ws == 0.0:
            continue
        for a_idx in range(game.n_joint_actions):
            p = ws * joint[s, a_idx]
            if p == 0.0:
                continue
            g = per_step_gradient(
                kind, game, policy, tables, s, game.joint_action(a_idx)
            ).vector
            mean += p * g
            second += p * float(g @ g)
    return second - float(mean @ mean)


def expected_contribution_oracle(kind, game, policy, tables, s):
    """E[contribution | s] over the joint action space, via per_step_gradient."""
    joint = joint_probs_oracle(game, policy)
    out = np.zeros(param_dim(game, kind.agent))
    for a_idx in range(game.n_joint_actions):
        p = joint[s, a_idx]
        if p == 0.0:
            continue
        g = per_step_gradient(
            kind, game, policy, tables, s, game.joint_action(a_idx)
        ).vector
        out += p * g
    return out


def trajectory_variance_oracle(kind, game, policy, tables, horizon):
    """Exact (mean, variance) of the length-``horizon`` trajectory gradient.

    Recurses over every path (s0, a0, s1, a1, ...); only feasible for tiny
    games, which is the point — it includes the cross-timestep covariance
    that the per-step decomposition deliberately drops.
    """
    joint = joint_probs_oracle(game, policy)
    dim = param_dim(game, kind.agent)
    mean = np.zeros(dim)
    second = 0.0

    def rec(t, s, prob, prefix):
        nonlocal mean, second
        if t == horizon:
            g = trajectory_gradient(kind, game, policy, tables, prefix)
            mean += prob * g
            second += prob * float(g @ g)
            return
        for a_idx in range(game.n_joint_actions):
            p_a = prob * joint[s, a_idx]
            if p_a == 0.0:
                continue
            step = prefix + [(s, game.joint_action(a_idx))]
            if t == horizon - 1:
                rec(t + 1, -1, p_a, step)  # successor state never read
                continue
            for s2 in range(game.n_states):
                p_next = p_a * float(game.transition[s, a_idx, s2])
                if p_next > 0.0:
                    rec(t + 1, s2, p_next, step)

    for s0 in range(game.n_states):
        p0 = float(game.initial_dist[s0])
        if p0 > 0.0:
            rec(0, s0, p0, [])
    var = second - float(mean @ mean)
    return mean, var


def fd_policy_gradient(game, policy, agent, h=1e-5):
    """Central finite differences of J through the exact solver."""
    from mapgvar import JointPolicy, SoftmaxPolicy, solve_values

    base = policy.agents[agent].logits
    grad = np.empty(base.size)

    def j_of(logits_flat):
        agents = list(policy.agents)
        agents[agent] = SoftmaxPolicy(logits_flat.reshape(base.shape))
        pol = JointPolicy(tuple(agents))
        tables = solve_values(game, pol)
        return float(game.initial_dist @ tables.v)

    flat = base.reshape(-1).astype(float)
    for j in range(flat.size):
        up = flat.copy()
        dn = flat.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (j_of(up) - j_of(dn)) / (2.0 * h)
    return grad


def local_variance_oracle(pi_i, signal_row, grad_vectors):
    """Var_a[signal * score] by the two-pass textbook formula."""
    pi_i = np.asarray(pi_i, dtype=float)
    vecs = [float(signal_row[a]) * np.asarray(grad_vectors[a], dtype=float)
            for a in range(len(pi_i))]
    mean = sum(p * v for p, v in zip(pi_i, vecs))
    return float(
        sum(p * float(v @ v) for p, v in zip(pi_i, vecs)) - mean @ mean
    )
