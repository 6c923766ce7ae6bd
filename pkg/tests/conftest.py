"""Shared corpus: seeded (game, policy, tables) triples reused across files.

Sizes stay within n_agents <= 4, n_states <= 3, n_actions <= 3 so exhaustive
enumeration (all permutations, all joint actions) is always affordable.
"""
import numpy as np
import pytest

from mapgvar import random_game, random_softmax_policy, solve_values

CORPUS_SEED = 20_000


def corpus_pair(idx):
    """Deterministic (game, policy) pair #idx."""
    rng = np.random.default_rng(CORPUS_SEED + idx)
    n_agents = int(rng.integers(2, 5))
    n_states = int(rng.integers(1, 4))
    n_actions = int(rng.integers(2, 4))
    game = random_game(
        n_agents, n_states, n_actions, seed=CORPUS_SEED + 100_000 + idx
    )
    policy = random_softmax_policy(game, rng)
    return game, policy


@pytest.fixture(scope="session")
def corpus500():
    triples = []
    for idx in range(500):
        game, policy = corpus_pair(idx)
        triples.append((game, policy, solve_values(game, policy)))
    return triples


@pytest.fixture(scope="session")
def corpus200(corpus500):
    return corpus500[:200]


@pytest.fixture(scope="session")
def corpus100(corpus500):
    return corpus500[:100]


@pytest.fixture(scope="session")
def corpus30(corpus500):
    return corpus500[:30]
