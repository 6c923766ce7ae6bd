import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapgvar import (
    DegeneratePolicy,
    GaussianPolicy,
    JointPolicy,
    SoftmaxPolicy,
    gaussian_log_prob,
    gaussian_log_prob_grad,
    grad_log_norm_sq,
    grad_log_softmax,
    joint_action_prob_table,
    load_policy,
    policy_from_dict,
    policy_to_dict,
    random_game,
    random_softmax_policy,
    save_policy,
    softmax_probs,
    uniform_policy,
    x_measure_softmax,
)
from mapgvar.policies import sample_discrete

logit_vectors = st.lists(
    st.floats(-10, 10, allow_nan=False), min_size=2, max_size=6
)


# ---------------------------------------------------------------------------
# softmax and its score


@settings(max_examples=200, deadline=None)
@given(logits=logit_vectors)
def test_softmax_is_a_distribution(logits):
    p = softmax_probs(np.array(logits))
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) < 1e-12


@settings(max_examples=100, deadline=None)
@given(logits=logit_vectors, shift=st.floats(-50, 50, allow_nan=False))
def test_softmax_shift_invariance(logits, shift):
    a = softmax_probs(np.array(logits))
    b = softmax_probs(np.array(logits) + shift)
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(logits=logit_vectors)
def test_score_has_zero_mean(logits):
    p = softmax_probs(np.array(logits))
    total = sum(p[a] * grad_log_softmax(p, a) for a in range(len(p)))
    np.testing.assert_allclose(total, 0.0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(logits=logit_vectors)
def test_score_norm_identity(logits):
    p = softmax_probs(np.array(logits))
    for a in range(len(p)):
        g = grad_log_softmax(p, a)
        assert abs(float(g @ g) - grad_log_norm_sq(p, a)) < 1e-12
        # closed form: 1 + ||p||^2 - 2 p_a
        assert abs(grad_log_norm_sq(p, a) - (1 + p @ p - 2 * p[a])) < 1e-12


def test_score_matches_finite_differences():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=4)
    h = 1e-6
    for a in range(4):
        p = softmax_probs(logits)
        fd = np.empty(4)
        for j in range(4):
            up, dn = logits.copy(), logits.copy()
            up[j] += h
            dn[j] -= h
            fd[j] = (
                np.log(softmax_probs(up)[a]) - np.log(softmax_probs(dn)[a])
            ) / (2 * h)
        np.testing.assert_allclose(grad_log_softmax(p, a), fd, atol=1e-8)


# ---------------------------------------------------------------------------
# the reweighted action measure


@settings(max_examples=100, deadline=None)
@given(logits=logit_vectors)
def test_x_measure_is_a_distribution(logits):
    p = softmax_probs(np.array(logits))
    x = x_measure_softmax(p)
    assert np.all(x >= 0)
    # rounding in x.sum() amplifies by 1/(1 - ||pi||^2) near-deterministic
    # policies, so the tolerance must scale with the conditioning
    tol = 64 * np.finfo(float).eps / (1.0 - float(p @ p))
    assert abs(x.sum() - 1.0) < tol
    # definition: x(a) proportional to pi(a) ||score(a)||^2
    w = np.array([p[a] * grad_log_norm_sq(p, a) for a in range(len(p))])
    np.testing.assert_allclose(x, w / w.sum(), atol=tol)


def test_x_measure_rejects_degenerate_rows():
    p = softmax_probs(np.array([60.0, 0.0, 0.0]))
    with pytest.raises(DegeneratePolicy):
        x_measure_softmax(p)


def test_x_measure_equals_policy_at_uniform():
    # all score norms coincide at the uniform policy, so the reweighting
    # is a no-op — the one case where the optimal and counterfactual
    # baselines agree exactly.
    p = np.full(3, 1 / 3)
    np.testing.assert_allclose(x_measure_softmax(p), p, atol=1e-12)


# ---------------------------------------------------------------------------
# Gaussian score


def test_gaussian_log_prob_value():
    # one dimension, standard normal, at the mean
    lp = gaussian_log_prob(np.zeros(1), np.ones(1), np.zeros(1))
    assert abs(lp - (-0.5 * np.log(2 * np.pi))) < 1e-12


@settings(max_examples=100, deadline=None)
@given(
    mean=st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=3),
    scale=st.lists(st.floats(0.2, 3, allow_nan=False), min_size=1, max_size=3),
    offset=st.floats(-2, 2, allow_nan=False),
)
def test_gaussian_grad_matches_fd(mean, scale, offset):
    d = min(len(mean), len(scale))
    mean = np.array(mean[:d])
    std = np.array(scale[:d])
    action = mean + offset
    grad = gaussian_log_prob_grad(mean, std, action)
    assert grad.shape == (2 * d,)
    h = 1e-6
    fd = np.empty(2 * d)
    for j in range(d):
        up, dn = mean.copy(), mean.copy()
        up[j] += h
        dn[j] -= h
        fd[j] = (
            gaussian_log_prob(up, std, action)
            - gaussian_log_prob(dn, std, action)
        ) / (2 * h)
    for j in range(d):
        up, dn = std.copy(), std.copy()
        up[j] += h
        dn[j] -= h
        fd[d + j] = (
            gaussian_log_prob(mean, up, action)
            - gaussian_log_prob(mean, dn, action)
        ) / (2 * h)
    np.testing.assert_allclose(grad, fd, atol=1e-5)


# ---------------------------------------------------------------------------
# policy containers


def test_sample_discrete_is_deterministic_and_calibrated():
    p = np.array([0.7, 0.2, 0.1])
    rng = np.random.default_rng(4)
    draws = np.array([sample_discrete(p, rng) for _ in range(20_000)])
    rng2 = np.random.default_rng(4)
    draws2 = np.array([sample_discrete(p, rng2) for _ in range(20_000)])
    assert np.array_equal(draws, draws2)
    freq = np.bincount(draws, minlength=3) / len(draws)
    np.testing.assert_allclose(freq, p, atol=0.02)


def test_softmax_policy_probs_rows():
    logits = np.array([[0.0, 1.0], [2.0, 2.0]])
    pol = SoftmaxPolicy(logits)
    assert pol.n_actions == 2
    np.testing.assert_allclose(pol.probs(1), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(pol.all_probs().sum(axis=1), 1.0, atol=1e-12)


def test_gaussian_policy_validation():
    with pytest.raises(ValueError):
        GaussianPolicy(mean=np.zeros((1, 2)), std=np.zeros((1, 2)))  # std > 0


def test_fingerprint_tracks_parameters():
    pol = JointPolicy((SoftmaxPolicy(np.zeros((1, 3))),))
    same = JointPolicy((SoftmaxPolicy(np.zeros((1, 3))),))
    other = JointPolicy((SoftmaxPolicy(np.array([[0.0, 0.0, 1e-9]])),))
    assert pol.fingerprint() == same.fingerprint()
    assert pol.fingerprint() != other.fingerprint()


def test_joint_action_prob_table_factorizes():
    game = random_game(3, 2, 2, seed=3)
    rng = np.random.default_rng(3)
    policy = random_softmax_policy(game, rng)
    table = joint_action_prob_table(game, policy)
    assert table.shape == (game.n_states, game.n_joint_actions)
    np.testing.assert_allclose(table.sum(axis=1), 1.0, atol=1e-12)
    for s in range(game.n_states):
        for a_idx in range(game.n_joint_actions):
            combo = game.joint_action(a_idx)
            expect = 1.0
            for i, a in enumerate(combo):
                expect *= float(policy.probs(i, s)[a])
            assert abs(table[s, a_idx] - expect) < 1e-12


def test_uniform_policy_rows():
    game = random_game(2, 3, 3, seed=9)
    pol = uniform_policy(game)
    for i in range(2):
        for s in range(3):
            np.testing.assert_allclose(pol.probs(i, s), 1 / 3, atol=1e-15)


# ---------------------------------------------------------------------------
# serialization


def test_policy_round_trip_softmax(tmp_path):
    game = random_game(2, 2, 3, seed=21)
    pol = random_softmax_policy(game, np.random.default_rng(21))
    again = policy_from_dict(policy_to_dict(pol))
    assert again.fingerprint() == pol.fingerprint()
    path = tmp_path / "policy.json"
    save_policy(path, pol)
    assert load_policy(path).fingerprint() == pol.fingerprint()


def test_policy_round_trip_gaussian():
    pol = JointPolicy(
        (
            GaussianPolicy(mean=np.array([[0.5, -1.0]]), std=np.array([[1.0, 2.0]])),
            SoftmaxPolicy(np.zeros((1, 2))),
        )
    )
    again = policy_from_dict(policy_to_dict(pol))
    assert again.fingerprint() == pol.fingerprint()
    assert isinstance(again.agents[0], GaussianPolicy)


def test_policy_from_dict_rejects_bad_input():
    with pytest.raises(ValueError):
        policy_from_dict({"schema_version": 99, "agents": []})
    with pytest.raises(ValueError):
        policy_from_dict(
            {"schema_version": 1, "agents": [{"kind": "tabular", "logits": [[0.0]]}]}
        )
