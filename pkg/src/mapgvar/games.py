"""Finite Markov games: representation, validation, generation, serialization.

A game is the tuple (agent set, states, per-agent action sets, transition
kernel, bounded reward, discount, initial state distribution). Joint actions
are canonical tuples ordered by agent index; every flattened table in this
package indexes joint actions by their lexicographic rank, so cross-module
indexing is unambiguous.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ENUMERATION_CAP = 10_000_000
DIST_TOL = 1e-12


class EnumerationCapExceeded(ValueError):
    """A requested table would exceed the exact-enumeration size cap."""


def _read_only(a: np.ndarray) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """Immutable finite Markov game.

    transition has shape (n_states, n_joint_actions, n_states); reward has
    shape (n_states, n_joint_actions). Rows of ``transition`` are probability
    vectors over successor states. ``beta`` bounds |reward| and ``gamma`` in
    [0, 1) is the discount. Immutable after construction; safe to share
    across workers.
    """

    n_agents: int
    states: tuple[str, ...]
    action_spaces: tuple[tuple[str, ...], ...]
    transition: np.ndarray
    reward: np.ndarray
    beta: float
    gamma: float
    initial_dist: np.ndarray

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if len(self.action_spaces) != self.n_agents:
            raise ValueError("one action space per agent required")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(
            self, "action_spaces", tuple(tuple(a) for a in self.action_spaces)
        )
        object.__setattr__(self, "transition", _read_only(self.transition))
        object.__setattr__(self, "reward", _read_only(self.reward))
        object.__setattr__(self, "initial_dist", _read_only(self.initial_dist))
        s, a = self.n_states, self.n_joint_actions
        if self.transition.shape != (s, a, s):
            raise ValueError(
                f"transition shape {self.transition.shape} != {(s, a, s)}"
            )
        if self.reward.shape != (s, a):
            raise ValueError(f"reward shape {self.reward.shape} != {(s, a)}")
        if self.initial_dist.shape != (s,):
            raise ValueError("initial_dist must have one entry per state")
        for name, arr in (
            ("transition", self.transition),
            ("reward", self.reward),
            ("initial_dist", self.initial_dist),
        ):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be a positive finite real")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.action_spaces)

    @property
    def n_joint_actions(self) -> int:
        return int(np.prod(self.action_counts))

    def joint_action_index(self, actions) -> int:
        """Lexicographic rank of a joint-action tuple (agent-major order)."""
        idx = 0
        for count, a in zip(self.action_counts, actions):
            if not 0 <= a < count:
                raise IndexError(f"action index {a} out of range")
            idx = idx * count + a
        return idx

    def joint_action(self, index: int) -> tuple[int, ...]:
        out = []
        for count in reversed(self.action_counts):
            index, a = divmod(index, count)
            out.append(a)
        return tuple(reversed(out))

    def __eq__(self, other):
        if not isinstance(other, MarkovGame):
            return NotImplemented
        return (
            self.n_agents == other.n_agents
            and self.states == other.states
            and self.action_spaces == other.action_spaces
            and self.beta == other.beta
            and self.gamma == other.gamma
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward, other.reward)
            and np.array_equal(self.initial_dist, other.initial_dist)
        )


@dataclass(frozen=True, eq=False)
class OneStepGame:
    """Stateless one-shot game: agents act once, receive ``payoff``.

    ``payoff`` is indexed by joint-action rank. Used for worked examples and
    coordination tasks where a transition kernel would be dead weight;
    ``as_markov_game`` lifts it when full-game machinery is needed.
    """

    n_agents: int
    action_spaces: tuple[tuple[str, ...], ...]
    payoff: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "action_spaces", tuple(tuple(a) for a in self.action_spaces)
        )
        object.__setattr__(self, "payoff", _read_only(self.payoff))
        n = int(np.prod([len(a) for a in self.action_spaces]))
        if self.payoff.shape != (n,):
            raise ValueError(f"payoff must have {n} entries, one per joint action")
        if not np.all(np.isfinite(self.payoff)):
            raise ValueError("payoff contains non-finite entries")

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.action_spaces)

    def as_markov_game(self, gamma: float = 0.0) -> MarkovGame:
        """Lift to a single-state game with a self-loop and discount ``gamma``."""
        n = self.payoff.shape[0]
        beta = float(np.max(np.abs(self.payoff)))
        return MarkovGame(
            n_agents=self.n_agents,
            states=("s0",),
            action_spaces=self.action_spaces,
            transition=np.ones((1, n, 1)),
            reward=self.payoff.reshape(1, n),
            beta=beta if beta > 0 else 1.0,
            gamma=gamma,
            initial_dist=np.array([1.0]),
        )

    def __eq__(self, other):
        if not isinstance(other, OneStepGame):
            return NotImplemented
        return (
            self.n_agents == other.n_agents
            and self.action_spaces == other.action_spaces
            and np.array_equal(self.payoff, other.payoff)
        )


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_game(game: MarkovGame) -> ValidationReport:
    """Check every game invariant; list all violations, never abort."""
    report = ValidationReport()
    actions = enumerate_joint_actions(game)
    for s in range(game.n_states):
        for ai, a in enumerate(actions):
            row = game.transition[s, ai]
            if np.any(row < 0):
                report.violations.append(
                    f"negative-prob state={game.states[s]} action={a}"
                )
            total = float(row.sum())
            if abs(total - 1.0) > DIST_TOL:
                report.violations.append(
                    f"row-sum state={game.states[s]} action={a} sum={total!r}"
                )
            if abs(game.reward[s, ai]) > game.beta:
                report.violations.append(
                    f"reward-bound state={game.states[s]} action={a} "
                    f"value={game.reward[s, ai]!r} beta={game.beta!r}"
                )
    if np.any(game.initial_dist < 0):
        report.violations.append("initial-dist has negative entries")
    total = float(game.initial_dist.sum())
    if abs(total - 1.0) > DIST_TOL:
        report.violations.append(f"initial-dist sum={total!r}")
    if not 0.0 <= game.gamma < 1.0:
        report.violations.append(f"gamma out of [0,1): {game.gamma!r}")
    return report


def enumerate_joint_actions(game, cap: int = DEFAULT_ENUMERATION_CAP):
    """All joint actions as index tuples, lexicographic by agent then action."""
    counts = game.action_counts
    total = int(np.prod(counts))
    if total > cap:
        raise EnumerationCapExceeded(
            f"{total} joint actions exceeds the cap of {cap}"
        )
    return list(itertools.product(*(range(k) for k in counts)))


def random_game(
    n_agents: int,
    n_states: int,
    n_actions: int,
    seed: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> MarkovGame:
    """Deterministic random game with gamma in [0.8, 0.99] and |reward| <= 1."""
    if min(n_agents, n_states, n_actions) < 1:
        raise ValueError("all sizes must be >= 1")
    n_joint = n_actions**n_agents
    if n_states * n_joint > cap:
        raise EnumerationCapExceeded(
            f"{n_states * n_joint} table entries exceeds the cap of {cap}"
        )
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_joint))
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_joint))
    gamma = float(rng.uniform(0.8, 0.99))
    initial = rng.dirichlet(np.ones(n_states))
    return MarkovGame(
        n_agents=n_agents,
        states=tuple(f"s{i}" for i in range(n_states)),
        action_spaces=tuple(
            tuple(f"a{j}" for j in range(n_actions)) for _ in range(n_agents)
        ),
        transition=transition,
        reward=reward,
        beta=1.0,
        gamma=gamma,
        initial_dist=initial,
    )


def _action_key(game: MarkovGame, joint: tuple[int, ...]) -> str:
    return ",".join(game.action_spaces[i][a] for i, a in enumerate(joint))


def serialize_game(game: MarkovGame) -> str:
    """Lossless UTF-8 JSON text for a game; parse_game inverts it exactly."""
    actions = enumerate_joint_actions(game)
    doc = {
        "n_agents": game.n_agents,
        "states": list(game.states),
        "actions": [list(a) for a in game.action_spaces],
        "gamma": game.gamma,
        "beta": game.beta,
        "initial_dist": game.initial_dist.tolist(),
        "transition": {
            game.states[s]: {
                _action_key(game, a): game.transition[s, ai].tolist()
                for ai, a in enumerate(actions)
            }
            for s in range(game.n_states)
        },
        "reward": {
            game.states[s]: {
                _action_key(game, a): float(game.reward[s, ai])
                for ai, a in enumerate(actions)
            }
            for s in range(game.n_states)
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_game(text: str) -> MarkovGame:
    doc = json.loads(text)
    try:
        states = tuple(doc["states"])
        action_spaces = tuple(tuple(a) for a in doc["actions"])
        n_agents = int(doc["n_agents"])
        if len(action_spaces) != n_agents:
            raise ValueError("actions must list one action set per agent")
        counts = [len(a) for a in action_spaces]
        n_joint = int(np.prod(counts))
        keys = [
            ",".join(action_spaces[i][a] for i, a in enumerate(joint))
            for joint in itertools.product(*(range(k) for k in counts))
        ]
        transition = np.empty((len(states), n_joint, len(states)))
        reward = np.empty((len(states), n_joint))
        for s, name in enumerate(states):
            trans_row = doc["transition"][name]
            reward_row = doc["reward"][name]
            for ai, key in enumerate(keys):
                transition[s, ai] = trans_row[key]
                reward[s, ai] = reward_row[key]
        beta = float(doc["beta"])
        gamma = float(doc["gamma"])
        initial = np.array(doc["initial_dist"], dtype=float)
    except KeyError as exc:
        raise ValueError(f"game document missing entry {exc}") from exc
    return MarkovGame(
        n_agents=n_agents,
        states=states,
        action_spaces=action_spaces,
        transition=transition,
        reward=reward,
        beta=beta,
        gamma=gamma,
        initial_dist=initial,
    )


def save_game(game: MarkovGame, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_game(game))


def load_game(path) -> MarkovGame:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_game(fh.read())
