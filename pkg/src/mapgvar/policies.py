"""Per-agent policies and their output-layer score functions.

Tabular softmax policies hold one logit vector per state; diagonal Gaussian
policies hold a per-state (mean, std) pair (std is per-state, not global).
All gradients here are with respect to the policy's output layer: for softmax
that is the logit vector itself, so grad log pi(a) = e_a - pi, with squared
norm 1 + ||pi||^2 - 2 pi(a). The x-measure reweights actions by exactly that
squared norm; under it the optimal baseline is a plain expectation of Q.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

DEGENERACY_TOL = 1e-10
PROB_TOL = 1e-12


class DegeneratePolicy(ValueError):
    """The x-measure is undefined: 1 - ||pi||^2 vanished (near-deterministic)."""


def softmax_probs(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def grad_log_softmax(probs, a: int) -> np.ndarray:
    """Score of the softmax output layer: e_a - pi. Entries sum to 0."""
    probs = np.asarray(probs, dtype=float)
    if not 0 <= a < probs.shape[0]:
        raise IndexError(f"action index {a} out of range")
    g = -probs.copy()
    g[a] += 1.0
    return g


def grad_log_norm_sq(probs, a: int) -> float:
    """||e_a - pi||^2 in closed form: 1 + ||pi||^2 - 2 pi(a)."""
    probs = np.asarray(probs, dtype=float)
    if not 0 <= a < probs.shape[0]:
        raise IndexError(f"action index {a} out of range")
    return float(1.0 + probs @ probs - 2.0 * probs[a])


def x_measure_softmax(probs, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Score-norm-weighted action measure x(a) = pi(a) ||e_a - pi||^2 / (1 - ||pi||^2).

    The normalizer 1 - ||pi||^2 is the expected squared score norm under pi;
    it vanishes for deterministic policies, where the measure is undefined.
    """
    probs = np.asarray(probs, dtype=float)
    norm_sq = float(probs @ probs)
    denom = 1.0 - norm_sq
    if denom <= tol:
        raise DegeneratePolicy(
            f"1 - ||pi||^2 = {denom!r} <= {tol!r}; x-measure undefined"
        )
    weights = 1.0 + norm_sq - 2.0 * probs
    return probs * weights / denom


def gaussian_log_prob(mean, std, action) -> float:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.atleast_1d(np.asarray(std, dtype=float))
    action = np.atleast_1d(np.asarray(action, dtype=float))
    if np.any(std <= 0):
        raise ValueError("std must be strictly positive")
    z = (action - mean) / std
    return float(-0.5 * z @ z - np.log(std).sum() - 0.5 * len(z) * np.log(2 * np.pi))


def gaussian_log_prob_grad(mean, std, action) -> np.ndarray:
    """Gradient of log N(action; mean, std) w.r.t. (mean, std), concatenated.

    d/dmean = (a - mean)/std^2 and d/dstd = ((a - mean)^2 - std^2)/std^3,
    componentwise; the returned vector is [mean components..., std components...].
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.atleast_1d(np.asarray(std, dtype=float))
    action = np.atleast_1d(np.asarray(action, dtype=float))
    if np.any(std <= 0):
        raise ValueError("std must be strictly positive")
    diff = action - mean
    d_mean = diff / std**2
    d_std = (diff**2 - std**2) / std**3
    return np.concatenate([d_mean, d_std])


def sample_discrete(probs, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a probability vector."""
    cdf = np.cumsum(np.asarray(probs, dtype=float))
    return int(np.searchsorted(cdf, rng.random(), side="right").clip(0, len(cdf) - 1))


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """Tabular softmax actor: one logit vector per state, shape (S, k)."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.logits, dtype=float)).copy()
        if not np.all(np.isfinite(arr)):
            raise ValueError("logits must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "logits", arr)

    @property
    def n_actions(self) -> int:
        return self.logits.shape[1]

    def probs(self, s: int) -> np.ndarray:
        return softmax_probs(self.logits[s])

    def all_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def sample(self, s: int, rng: np.random.Generator) -> int:
        return sample_discrete(self.probs(s), rng)


@dataclass(frozen=True, eq=False)
class GaussianPolicy:
    """Diagonal Gaussian actor: per-state mean/std arrays of shape (S, d)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float)).copy()
        std = np.atleast_2d(np.asarray(self.std, dtype=float)).copy()
        if mean.shape != std.shape:
            raise ValueError("mean and std must have matching shapes")
        if np.any(std <= 0):
            raise ValueError("std must be strictly positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[1]

    def sample(self, s: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean[s] + self.std[s] * rng.standard_normal(self.dim)


def sample_action(policy, s: int, rng: np.random.Generator):
    """Draw an action from one agent's policy slice at state s."""
    return policy.sample(s, rng)


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """One policy per agent; joint probability is the per-agent product."""

    agents: tuple

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise ValueError("at least one agent policy required")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def is_discrete(self) -> bool:
        return all(isinstance(p, SoftmaxPolicy) for p in self.agents)

    def probs(self, i: int, s: int) -> np.ndarray:
        return self.agents[i].probs(s)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.agents:
            if isinstance(p, SoftmaxPolicy):
                h.update(b"softmax")
                h.update(p.logits.tobytes())
            else:
                h.update(b"gaussian")
                h.update(p.mean.tobytes())
                h.update(p.std.tobytes())
        return h.hexdigest()[:16]


def joint_action_probs(game, policy: JointPolicy, s: int) -> np.ndarray:
    """Flattened product distribution over joint actions at state s."""
    out = np.ones(1)
    for i in range(game.n_agents):
        out = (out[:, None] * policy.probs(i, s)[None, :]).reshape(-1)
    return out


def joint_action_prob_table(game, policy: JointPolicy) -> np.ndarray:
    """(n_states, n_joint_actions) table of joint-action probabilities."""
    return np.stack(
        [joint_action_probs(game, policy, s) for s in range(game.n_states)]
    )


def uniform_policy(game) -> JointPolicy:
    return JointPolicy(
        tuple(
            SoftmaxPolicy(np.zeros((game.n_states, k))) for k in game.action_counts
        )
    )


def random_softmax_policy(game, rng: np.random.Generator, scale: float = 1.0) -> JointPolicy:
    return JointPolicy(
        tuple(
            SoftmaxPolicy(scale * rng.standard_normal((game.n_states, k)))
            for k in game.action_counts
        )
    )


POLICY_SCHEMA_VERSION = 1


def policy_to_dict(policy: JointPolicy) -> dict:
    agents = []
    for agent in policy.agents:
        if isinstance(agent, SoftmaxPolicy):
            agents.append({"kind": "softmax", "logits": agent.logits.tolist()})
        else:
            agents.append(
                {
                    "kind": "gaussian",
                    "mean": agent.mean.tolist(),
                    "std": agent.std.tolist(),
                }
            )
    return {"schema_version": POLICY_SCHEMA_VERSION, "agents": agents}


def policy_from_dict(data: dict) -> JointPolicy:
    version = data.get("schema_version")
    if version != POLICY_SCHEMA_VERSION:
        raise ValueError(f"unsupported policy schema_version {version!r}")
    agents = []
    for entry in data["agents"]:
        kind = entry.get("kind")
        if kind == "softmax":
            agents.append(SoftmaxPolicy(np.array(entry["logits"], dtype=float)))
        elif kind == "gaussian":
            agents.append(
                GaussianPolicy(
                    mean=np.array(entry["mean"], dtype=float),
                    std=np.array(entry["std"], dtype=float),
                )
            )
        else:
            raise ValueError(f"unknown policy kind {kind!r}")
    return JointPolicy(tuple(agents))


def save_policy(path, policy: JointPolicy) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(policy), fh, indent=2)
        fh.write("\n")


def load_policy(path) -> JointPolicy:
    with open(path, encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))
