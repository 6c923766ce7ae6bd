import itertools

import numpy as np
import pytest
from oracles import expected_contribution_oracle, fd_policy_gradient

from mapgvar import (
    EstimatorKind,
    EstimatorTag,
    coma_baseline,
    exact_policy_gradient,
    ob_surrogate_discrete,
    per_step_gradient,
    signal_table,
    solve_values,
    trajectory_gradient,
)
from mapgvar.estimators import (
    agent_axis_view,
    agent_prob_table,
    default_horizon,
    mean_step_gradient_by_state,
    others_prob_table,
    param_dim,
    unview_agent_axis,
)
from mapgvar.values import discounted_state_occupancy

ALL_TAGS = (
    EstimatorTag.CENTRALIZED_VANILLA,
    EstimatorTag.DECENTRALIZED,
    EstimatorTag.COMA,
    EstimatorTag.OB_X,
)


# ---------------------------------------------------------------------------
# plumbing


def test_default_horizon_values():
    assert default_horizon(0.0, 1.0) == 1
    # gamma^H * beta/(1-gamma) <= tol
    h = default_horizon(0.9, 1.0, tol=1e-9)
    assert 0.9**h * 10.0 <= 1e-9 < 0.9 ** (h - 1) * 10.0


def test_agent_axis_view_round_trip(corpus30):
    for game, policy, tables in corpus30[:10]:
        for i in range(game.n_agents):
            rows = agent_axis_view(game, tables.q, i)
            assert rows.shape == (
                game.n_states,
                game.n_joint_actions // game.action_counts[i],
                game.action_counts[i],
            )
            np.testing.assert_array_equal(
                unview_agent_axis(game, rows, i), tables.q
            )


def test_agent_axis_view_indexing(corpus30):
    # row m enumerates the other agents' actions in ascending-agent C order
    game, policy, tables = corpus30[2]
    i = 1
    rows = agent_axis_view(game, tables.q, i)
    others = [j for j in range(game.n_agents) if j != i]
    for s in range(game.n_states):
        for m, combo_others in enumerate(
            itertools.product(*(range(game.action_counts[j]) for j in others))
        ):
            for a_i in range(game.action_counts[i]):
                joint = [0] * game.n_agents
                for j, a in zip(others, combo_others):
                    joint[j] = a
                joint[i] = a_i
                expect = tables.q[s, game.joint_action_index(tuple(joint))]
                assert rows[s, m, a_i] == expect


def test_prob_tables_normalize(corpus30):
    for game, policy, _ in corpus30[:10]:
        for i in range(game.n_agents):
            np.testing.assert_allclose(
                agent_prob_table(game, policy, i).sum(axis=1), 1.0, atol=1e-12
            )
            np.testing.assert_allclose(
                others_prob_table(game, policy, i).sum(axis=1), 1.0, atol=1e-12
            )


# ---------------------------------------------------------------------------
# signal tables


def test_signal_rows_by_hand(corpus30):
    game, policy, tables = corpus30[3]
    i = 0
    kinds = {tag: EstimatorKind(tag, i) for tag in ALL_TAGS}
    pi_rows = agent_prob_table(game, policy, i)
    for s in range(game.n_states):
        rows = agent_axis_view(game, tables.q, i)[s]  # (M, k)
        vanilla = agent_axis_view(
            game, signal_table(kinds[EstimatorTag.CENTRALIZED_VANILLA], game, policy, tables), i
        )[s]
        coma = agent_axis_view(
            game, signal_table(kinds[EstimatorTag.COMA], game, policy, tables), i
        )[s]
        obx = agent_axis_view(
            game, signal_table(kinds[EstimatorTag.OB_X], game, policy, tables), i
        )[s]
        dec = agent_axis_view(
            game, signal_table(kinds[EstimatorTag.DECENTRALIZED], game, policy, tables), i
        )[s]
        for m in range(rows.shape[0]):
            np.testing.assert_allclose(vanilla[m], rows[m], atol=1e-12)
            np.testing.assert_allclose(
                coma[m], rows[m] - coma_baseline(rows[m], pi_rows[s]), atol=1e-9
            )
            np.testing.assert_allclose(
                obx[m], rows[m] - ob_surrogate_discrete(rows[m], pi_rows[s]), atol=1e-9
            )
        # decentralized rows are constant across the others' actions
        marginal = np.einsum("mk,m->k", rows, others_prob_table(game, policy, i)[s])
        for m in range(rows.shape[0]):
            np.testing.assert_allclose(dec[m], marginal, atol=1e-9)


def test_coma_signal_rows_have_zero_policy_mean(corpus30):
    for game, policy, tables in corpus30[:10]:
        for i in range(game.n_agents):
            kind = EstimatorKind(EstimatorTag.COMA, i)
            rows = agent_axis_view(game, signal_table(kind, game, policy, tables), i)
            pi_rows = agent_prob_table(game, policy, i)
            means = np.einsum("smk,sk->sm", rows, pi_rows)
            assert np.abs(means).max() < 1e-9


# ---------------------------------------------------------------------------
# per-step contributions


def test_per_step_gradient_by_hand(corpus30):
    game, policy, tables = corpus30[4]
    i = 0
    kind = EstimatorKind(EstimatorTag.CENTRALIZED_VANILLA, i)
    s = game.n_states - 1
    joint = tuple(0 for _ in range(game.n_agents))
    contrib = per_step_gradient(kind, game, policy, tables, s, joint)
    k = game.action_counts[i]
    vec = contrib.vector
    assert vec.shape == (param_dim(game, i),)
    # zero outside the state block
    outside = np.delete(vec.reshape(game.n_states, k), s, axis=0)
    assert np.all(outside == 0.0)
    # inside: signal * (e_a - pi)
    sig = tables.q[s, game.joint_action_index(joint)]
    probs = policy.probs(i, s)
    expect = -probs * sig
    expect[joint[i]] += sig
    np.testing.assert_allclose(vec[s * k : (s + 1) * k], expect, atol=1e-12)


def test_per_step_gradient_rejects_stale_tables(corpus30):
    from mapgvar import uniform_policy

    game, policy, tables = corpus30[5]
    kind = EstimatorKind(EstimatorTag.COMA, 0)
    with pytest.raises(ValueError, match="different policy"):
        per_step_gradient(
            kind, game, uniform_policy(game), tables, 0, (0,) * game.n_agents
        )


def test_trajectory_gradient_is_discounted_sum(corpus30):
    game, policy, tables = corpus30[7]
    kind = EstimatorKind(EstimatorTag.OB_X, 0)
    rng = np.random.default_rng(8)
    traj = [
        (
            int(rng.integers(game.n_states)),
            tuple(int(rng.integers(k)) for k in game.action_counts),
        )
        for _ in range(5)
    ]
    total = trajectory_gradient(kind, game, policy, tables, traj)
    expect = np.zeros_like(total)
    for t, (s, joint) in enumerate(traj):
        expect += (
            game.gamma**t
            * per_step_gradient(kind, game, policy, tables, s, joint).vector
        )
    np.testing.assert_allclose(total, expect, atol=1e-12)
    # horizon truncation drops the tail
    short = trajectory_gradient(kind, game, policy, tables, traj, horizon=2)
    expect2 = sum(
        game.gamma**t
        * per_step_gradient(kind, game, policy, tables, s, joint).vector
        for t, (s, joint) in enumerate(traj[:2])
    )
    np.testing.assert_allclose(short, expect2, atol=1e-12)


# ---------------------------------------------------------------------------
# unbiasedness and the exact gradient


def test_all_kinds_share_the_expected_contribution(corpus30):
    from mapgvar import expected_per_step_gradient

    for game, policy, tables in corpus30[:10]:
        for i in range(game.n_agents):
            for s in range(game.n_states):
                vecs = []
                for tag in ALL_TAGS:
                    kind = EstimatorKind(tag, i)
                    vec = expected_per_step_gradient(kind, game, policy, tables, s)
                    oracle = expected_contribution_oracle(
                        kind, game, policy, tables, s
                    )
                    np.testing.assert_allclose(vec, oracle, atol=1e-9)
                    vecs.append(vec)
                for other in vecs[1:]:
                    np.testing.assert_allclose(other, vecs[0], atol=1e-9)


def test_mean_step_gradient_matches_enumeration(corpus30):
    kind_tag = EstimatorTag.CENTRALIZED_VANILLA
    for game, policy, tables in corpus30[:10]:
        for i in range(game.n_agents):
            by_state = mean_step_gradient_by_state(game, policy, tables, i)
            k = game.action_counts[i]
            for s in range(game.n_states):
                oracle = expected_contribution_oracle(
                    EstimatorKind(kind_tag, i), game, policy, tables, s
                )
                np.testing.assert_allclose(
                    by_state[s], oracle[s * k : (s + 1) * k], atol=1e-9
                )


def test_exact_gradient_matches_occupancy_route(corpus30):
    for game, policy, tables in corpus30[:10]:
        for i in range(game.n_agents):
            grad = exact_policy_gradient(game, policy, i)
            eta = discounted_state_occupancy(game, policy)
            by_state = mean_step_gradient_by_state(game, policy, tables, i)
            expect = (eta[:, None] * by_state).reshape(-1)
            np.testing.assert_allclose(grad, expect, atol=1e-7)


def test_exact_gradient_matches_finite_differences(corpus30):
    worst = 0.0
    for game, policy, _ in corpus30[:5]:
        for i in range(game.n_agents):
            grad = exact_policy_gradient(game, policy, i)
            fd = fd_policy_gradient(game, policy, i)
            scale = max(1.0, float(np.abs(fd).max()))
            worst = max(worst, float(np.abs(grad - fd).max()) / scale)
    assert worst < 1e-5, worst
