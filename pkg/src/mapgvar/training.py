"""Tabular actor training with selectable baselines.

The loop rolls out a batch of trajectories, looks up q from an exact or
TD-learned critic, subtracts the configured baseline (none, counterfactual
mean, or the variance-optimal one), and ascends the policy-gradient
objective — optionally through a clipped-ratio surrogate for a few epochs
per batch. Everything is driven by one seeded generator, so a (game, config,
initial policy) triple reproduces bit-identically.

Plain gradient ascent on the logits, no adaptive optimizer: determinism and
attributability matter more at this scale than wall-clock, and the optimizer
is orthogonal to what is being measured. Baseline comparisons share seeds
across runs so variance differences are paired, not sampling luck.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import BaselineKind, BaselineTag, ob_surrogate_gaussian
from .estimators import agent_axis_view, default_horizon, param_dim
from .games import MarkovGame
from .policies import (
    DEGENERACY_TOL,
    DegeneratePolicy,
    JointPolicy,
    SoftmaxPolicy,
    gaussian_log_prob_grad,
    joint_action_prob_table,
    policy_from_dict,
    policy_to_dict,
    uniform_policy,
)
from .values import solve_values

CHECKPOINT_SCHEMA_VERSION = 1
HISTORY_SCHEMA_VERSION = 1


class DivergenceError(RuntimeError):
    """Raised when |J| exceeds its a-priori bound — always indicates a bug."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class CriticConfig:
    """mode 'exact' solves for q each iteration; 'td' learns it from the batch."""

    mode: str = "exact"
    lr: float = 0.5
    target_sync_interval: int = 1

    def __post_init__(self):
        if self.mode not in ("exact", "td"):
            raise ValueError(f"unknown critic mode {self.mode!r}")
        if not 0.0 < self.lr <= 1.0:
            raise ValueError("critic lr must be in (0, 1]")
        if self.target_sync_interval < 1:
            raise ValueError("target_sync_interval must be >= 1")


@dataclass(frozen=True)
class PPOConfig:
    eps_clip: float = 0.2
    epochs: int = 4

    def __post_init__(self):
        if not 0.0 < self.eps_clip < 1.0:
            raise ValueError("eps_clip must be in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    baseline: BaselineKind = field(
        default_factory=lambda: BaselineKind(BaselineTag.OB_SURROGATE)
    )
    actor_lr: float = 0.1
    critic: CriticConfig = field(default_factory=CriticConfig)
    batch_size: int = 32
    ppo: PPOConfig | None = None
    horizon: int | None = None
    iterations: int = 100
    seed: int = 0
    ob_n_samples: int = 1000
    entropy_coef: float = 0.0

    def __post_init__(self):
        if self.actor_lr <= 0.0:
            raise ValueError("actor_lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.ob_n_samples < 2:
            raise ValueError("ob_n_samples must be >= 2")
        if self.entropy_coef < 0.0:
            raise ValueError("entropy_coef must be >= 0")


def config_to_dict(config: TrainConfig) -> dict:
    return {
        "baseline": config.baseline.tag.value,
        "actor_lr": config.actor_lr,
        "critic": {
            "mode": config.critic.mode,
            "lr": config.critic.lr,
            "target_sync_interval": config.critic.target_sync_interval,
        },
        "batch_size": config.batch_size,
        "ppo": (
            None
            if config.ppo is None
            else {"eps_clip": config.ppo.eps_clip, "epochs": config.ppo.epochs}
        ),
        "horizon": config.horizon,
        "iterations": config.iterations,
        "seed": config.seed,
        "ob_n_samples": config.ob_n_samples,
        "entropy_coef": config.entropy_coef,
    }


def config_from_dict(data: dict) -> TrainConfig:
    ppo = data.get("ppo")
    return TrainConfig(
        baseline=BaselineKind(BaselineTag(data.get("baseline", "ob_surrogate"))),
        actor_lr=float(data.get("actor_lr", 0.1)),
        critic=CriticConfig(
            mode=data.get("critic", {}).get("mode", "exact"),
            lr=float(data.get("critic", {}).get("lr", 0.5)),
            target_sync_interval=int(
                data.get("critic", {}).get("target_sync_interval", 1)
            ),
        ),
        batch_size=int(data.get("batch_size", 32)),
        ppo=(
            None
            if ppo is None
            else PPOConfig(eps_clip=float(ppo["eps_clip"]), epochs=int(ppo["epochs"]))
        ),
        horizon=None if data.get("horizon") is None else int(data["horizon"]),
        iterations=int(data.get("iterations", 100)),
        seed=int(data.get("seed", 0)),
        ob_n_samples=int(data.get("ob_n_samples", 1000)),
        entropy_coef=float(data.get("entropy_coef", 0.0)),
    )


# ---------------------------------------------------------------------------
# history / results


@dataclass(frozen=True)
class TrainHistory:
    """Per-iteration diagnostics; all tuples have length == iterations.

    returns[k] is the exact expected return of the policy at the START of
    iteration k (solved, not sampled). grad_variance[k] is the sample total
    variance of the per-trajectory gradient vectors inside iteration k's
    batch; grad_norm[k] the norm of the batch-mean gradient actually applied.
    """

    returns: tuple[float, ...]
    grad_variance: tuple[float, ...]
    grad_norm: tuple[float, ...]
    entropies: tuple[tuple[float, ...], ...]  # per iteration, per agent

    def __len__(self) -> int:
        return len(self.returns)

    def to_csv_rows(self) -> list[tuple]:
        rows = []
        for k in range(len(self.returns)):
            rows.append(
                (
                    k,
                    self.returns[k],
                    self.grad_variance[k],
                    self.grad_norm[k],
                    *self.entropies[k],
                )
            )
        return rows

    def to_json_dict(self) -> dict:
        return {
            "schema_version": HISTORY_SCHEMA_VERSION,
            "iterations": len(self.returns),
            "final_return": self.returns[-1] if self.returns else None,
            "returns": list(self.returns),
            "grad_variance": list(self.grad_variance),
            "grad_norm": list(self.grad_norm),
            "entropies": [list(e) for e in self.entropies],
        }


@dataclass(frozen=True)
class TrainResult:
    history: TrainHistory
    policy: JointPolicy
    config: TrainConfig
    final_rng_state: dict


@dataclass(frozen=True)
class CriticState:
    q: np.ndarray
    target_q: np.ndarray
    lr: float
    target_sync_interval: int
    sweeps: int = 0


def init_critic(game: MarkovGame, config: CriticConfig) -> CriticState:
    shape = (game.n_states, game.n_joint_actions)
    return CriticState(
        q=np.zeros(shape),
        target_q=np.zeros(shape),
        lr=config.lr,
        target_sync_interval=config.target_sync_interval,
    )


def td_learn_q(
    game: MarkovGame,
    policy: JointPolicy,
    batch,
    state: CriticState,
) -> CriticState:
    """One TD pass: batch=None does a full synchronous expected sweep over
    every (s, joint action); otherwise batch is an iterable of
    (s, joint_action_index, reward, next_state) transitions applied in order.

    Targets bootstrap from the target table, which re-syncs every
    target_sync_interval sweeps. Full synchronous sweeps with interval 1
    contract toward the solved q at rate (1 - lr) + lr * gamma per sweep.
    """
    probs = joint_action_prob_table(game, policy)  # (S, A)
    q = state.q.copy()
    if batch is None:
        probs_dot = np.einsum("sa,sa->s", probs, state.target_q)  # E_{a'}[Q_tgt(s',.)]
        targets = game.reward + game.gamma * game.transition @ probs_dot
        q += state.lr * (targets - q)
    else:
        expected_next = np.einsum("sa,sa->s", probs, state.target_q)
        for s, a_idx, r, s_next in batch:
            target = r + game.gamma * expected_next[s_next]
            q[s, a_idx] += state.lr * (target - q[s, a_idx])
    sweeps = state.sweeps + 1
    target_q = state.target_q
    if sweeps % state.target_sync_interval == 0:
        target_q = q.copy()
    return CriticState(
        q=q,
        target_q=target_q,
        lr=state.lr,
        target_sync_interval=state.target_sync_interval,
        sweeps=sweeps,
    )


# ---------------------------------------------------------------------------
# the discrete training loop


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _signal_batch(
    tag: BaselineTag,
    q_full_vals: np.ndarray,
    q_rows: np.ndarray,
    pi_rows: np.ndarray,
    tol: float = DEGENERACY_TOL,
) -> np.ndarray:
    """Per-sample scalar signals for one agent given its counterfactual q-rows."""
    if tag is BaselineTag.NONE:
        return q_full_vals
    if tag is BaselineTag.COMA:
        return q_full_vals - np.einsum("bk,bk->b", pi_rows, q_rows)
    # variance-optimal surrogate: weights pi(a) ||score(a)||^2, normalized
    pi_norm_sq = np.einsum("bk,bk->b", pi_rows, pi_rows)
    denom = 1.0 - pi_norm_sq
    if np.any(denom <= tol):
        raise DegeneratePolicy(
            "optimal-baseline weights undefined for a near-deterministic policy row"
        )
    weights = pi_rows * (1.0 + pi_norm_sq[:, None] - 2.0 * pi_rows)
    baseline = np.einsum("bk,bk->b", weights, q_rows) / denom
    return q_full_vals - baseline


def train(
    game: MarkovGame,
    initial_policy: JointPolicy | None,
    config: TrainConfig,
) -> TrainResult:
    """Run the full loop; see the module docstring for the shape of one step.

    Returns the final policy alongside the history so callers can checkpoint
    or evaluate; histories from identical (game, initial policy, config) are
    bit-identical.
    """
    if initial_policy is None:
        initial_policy = uniform_policy(game)
    if not initial_policy.is_discrete:
        raise ValueError("train() handles softmax actors; see train_gaussian")
    rng = np.random.default_rng(config.seed)
    n = game.n_agents
    counts = game.action_counts
    logits = [np.array(agent.logits, dtype=float) for agent in initial_policy.agents]
    horizon = (
        config.horizon
        if config.horizon is not None
        else default_horizon(game.gamma, game.beta)
    )
    j_bound = 10.0 * game.beta / (1.0 - game.gamma)
    use_td = config.critic.mode == "td"
    critic = init_critic(game, config.critic) if use_td else None
    init_cdf = np.cumsum(game.initial_dist)
    trans_cdf = np.cumsum(game.transition, axis=2)
    batch = config.batch_size
    rows_b = np.arange(batch)

    returns, grad_vars, grad_norms, entropies = [], [], [], []
    for _ in range(config.iterations):
        policy = JointPolicy(tuple(SoftmaxPolicy(l) for l in logits))
        tables = solve_values(game, policy)
        j_val = float(game.initial_dist @ tables.v)
        if not math.isfinite(j_val) or abs(j_val) > j_bound:
            raise DivergenceError(
                f"expected return {j_val} exceeds bound {j_bound}",
                report={
                    "J": j_val,
                    "bound": j_bound,
                    "iteration": len(returns),
                    "max_abs_logit": max(float(np.abs(l).max()) for l in logits),
                },
            )
        returns.append(j_val)
        pi_tables = [_softmax_rows(l) for l in logits]
        entropies.append(
            tuple(
                float(
                    -(p * np.log(np.clip(p, 1e-300, None))).sum(axis=1).mean()
                )
                for p in pi_tables
            )
        )
        q_table = critic.q if use_td else tables.q
        q_views = [agent_axis_view(game, q_table, i) for i in range(n)]

        cdfs = [np.cumsum(p, axis=1) for p in pi_tables]
        # roll out the batch, vectorized across trajectories
        states = np.empty((batch, horizon), dtype=np.int64)
        actions = [np.empty((batch, horizon), dtype=np.int64) for _ in range(n)]
        joint_idx = np.empty((batch, horizon), dtype=np.int64)
        rewards = np.empty((batch, horizon))
        s = np.searchsorted(init_cdf, rng.random(batch), side="right").clip(
            0, game.n_states - 1
        )
        for t in range(horizon):
            states[:, t] = s
            a_idx = np.zeros(batch, dtype=np.int64)
            for j in range(n):
                u = rng.random(batch)
                a_j = (u[:, None] > cdfs[j][s]).sum(axis=1).clip(0, counts[j] - 1)
                actions[j][:, t] = a_j
                a_idx = a_idx * counts[j] + a_j
            joint_idx[:, t] = a_idx
            rewards[:, t] = game.reward[s, a_idx]
            u = rng.random(batch)
            s = (u[:, None] > trans_cdf[s, a_idx]).sum(axis=1).clip(
                0, game.n_states - 1
            )

        # per-trajectory gradients, plus flat sample records for clipped epochs
        grads = [np.zeros((batch, game.n_states, counts[i])) for i in range(n)]
        signals = [np.empty((batch, horizon)) for _ in range(n)]
        for i in range(n):
            # rank of the other agents' actions inside the (S, M, k) view
            m_idx = np.zeros(batch * horizon, dtype=np.int64)
            for j in range(n):
                if j == i:
                    continue
                m_idx = m_idx * counts[j] + actions[j].reshape(-1)
            s_flat = states.reshape(-1)
            q_rows = q_views[i][s_flat, m_idx]  # (B*T, k)
            pi_rows = pi_tables[i][s_flat]
            q_full_vals = q_table[s_flat, joint_idx.reshape(-1)]
            sig = _signal_batch(config.baseline.tag, q_full_vals, q_rows, pi_rows)
            sig = sig.reshape(batch, horizon)
            signals[i][:] = sig
            a_i = actions[i]
            scale = 1.0
            for t in range(horizon):
                val = scale * sig[:, t]
                st = states[:, t]
                grads[i][rows_b, st] -= pi_tables[i][st] * val[:, None]
                grads[i][rows_b, st, a_i[:, t]] += val
                scale *= game.gamma

        flat = np.concatenate([g.reshape(batch, -1) for g in grads], axis=1)
        mean_grad = flat.mean(axis=0)
        if batch > 1:
            dev = flat - mean_grad
            grad_vars.append(float(np.einsum("bd,bd->", dev, dev) / (batch - 1)))
        else:
            grad_vars.append(0.0)
        grad_norms.append(float(np.linalg.norm(mean_grad)))

        if config.ppo is None:
            offset = 0
            for i in range(n):
                width = param_dim(game, i)
                step = mean_grad[offset : offset + width].reshape(
                    game.n_states, counts[i]
                )
                logits[i] = logits[i] + config.actor_lr * step
                offset += width
        else:
            gamma_pow = game.gamma ** np.arange(horizon)
            old_logp = [
                np.log(
                    pi_tables[i][states.reshape(-1), actions[i].reshape(-1)]
                ).reshape(batch, horizon)
                for i in range(n)
            ]
            for _ in range(config.ppo.epochs):
                new_tables = [_softmax_rows(l) for l in logits]
                steps = [np.zeros_like(l) for l in logits]
                for i in range(n):
                    s_flat = states.reshape(-1)
                    a_flat = actions[i].reshape(-1)
                    logp = np.log(new_tables[i][s_flat, a_flat]).reshape(
                        batch, horizon
                    )
                    ratio = np.exp(logp - old_logp[i])
                    adv = signals[i] * gamma_pow[None, :]
                    clipped_out = (
                        (adv > 0) & (ratio > 1.0 + config.ppo.eps_clip)
                    ) | ((adv < 0) & (ratio < 1.0 - config.ppo.eps_clip))
                    coef = np.where(clipped_out, 0.0, ratio * adv) / (
                        batch * horizon
                    )
                    coef_flat = coef.reshape(-1)
                    np.add.at(steps[i], (s_flat, a_flat), coef_flat)
                    np.add.at(
                        steps[i], s_flat, -new_tables[i][s_flat] * coef_flat[:, None]
                    )
                for i in range(n):
                    logits[i] = logits[i] + config.actor_lr * steps[i]

        if config.entropy_coef > 0.0:
            for i in range(n):
                p = _softmax_rows(logits[i])
                log_p = np.log(np.clip(p, 1e-300, None))
                ent = -(p * log_p).sum(axis=1, keepdims=True)
                logits[i] = logits[i] + config.actor_lr * config.entropy_coef * (
                    -p * (log_p + ent)
                )

        if use_td:
            transitions = []
            next_states = np.empty((batch, horizon), dtype=np.int64)
            next_states[:, :-1] = states[:, 1:]
            # resample terminal next-states? trajectories are contiguous, so
            # the sampled chain already provides s' for every t < horizon-1;
            # the final step reuses its own sampled successor via the chain's
            # last draw, which lives in `s` after the loop.
            next_states[:, -1] = s
            for b in range(batch):
                for t in range(horizon):
                    transitions.append(
                        (
                            int(states[b, t]),
                            int(joint_idx[b, t]),
                            float(rewards[b, t]),
                            int(next_states[b, t]),
                        )
                    )
            critic = td_learn_q(game, policy, transitions, critic)

    final_policy = JointPolicy(tuple(SoftmaxPolicy(l) for l in logits))
    history = TrainHistory(
        returns=tuple(returns),
        grad_variance=tuple(grad_vars),
        grad_norm=tuple(grad_norms),
        entropies=tuple(entropies),
    )
    return TrainResult(
        history=history,
        policy=final_policy,
        config=config,
        final_rng_state=rng.bit_generator.state,
    )


# ---------------------------------------------------------------------------
# paired baseline comparison


def compare_baselines(
    game: MarkovGame,
    base_config: TrainConfig,
    baseline_tags=(BaselineTag.NONE, BaselineTag.COMA, BaselineTag.OB_SURROGATE),
    seeds=(0, 1, 2, 3, 4),
    initial_policy: JointPolicy | None = None,
) -> list[dict]:
    """Train once per (baseline, seed) with seeds shared across baselines and
    summarize gradient-estimate variance and final return per baseline.
    """
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) < 5:
        raise ValueError("paired comparison needs at least 5 seeds")
    rows = []
    for tag in baseline_tags:
        per_seed_var = []
        per_seed_final = []
        for seed in seeds:
            cfg = replace(base_config, baseline=BaselineKind(tag), seed=seed)
            result = train(game, initial_policy, cfg)
            per_seed_var.append(
                float(np.mean(result.history.grad_variance))
            )
            per_seed_final.append(result.history.returns[-1])
        rows.append(
            {
                "baseline": tag.value,
                "seeds": list(seeds),
                "mean_grad_variance": float(np.mean(per_seed_var)),
                "sd_grad_variance": float(np.std(per_seed_var, ddof=1)),
                "mean_final_return": float(np.mean(per_seed_final)),
                "sd_final_return": float(np.std(per_seed_final, ddof=1)),
                "per_seed_grad_variance": per_seed_var,
                "per_seed_final_return": per_seed_final,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# checkpointing


def checkpoint_dict(config: TrainConfig, policy: JointPolicy, rng_state: dict) -> dict:
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": config_to_dict(config),
        "policy": policy_to_dict(policy),
        "rng_state": rng_state,
    }


def save_checkpoint(path, config: TrainConfig, policy: JointPolicy, rng_state: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(config, policy, rng_state), fh, indent=2)
        fh.write("\n")


def load_checkpoint(path) -> tuple[TrainConfig, JointPolicy, dict]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema_version {version!r}")
    return (
        config_from_dict(data["config"]),
        policy_from_dict(data["policy"]),
        data["rng_state"],
    )


# ---------------------------------------------------------------------------
# continuous one-step task (Gaussian actors)


@dataclass(frozen=True)
class ContinuousOneStepTask:
    """A single-state game with real-valued actions: payoff maps a batch of
    joint action vectors (m, total_dim) to rewards (m,). beta bounds |payoff|.
    """

    payoff: object  # callable (m, total_dim) -> (m,)
    dims: tuple[int, ...]
    beta: float

    @property
    def n_agents(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(sum(self.dims))


def train_gaussian(
    task: ContinuousOneStepTask,
    initial_params,
    config: TrainConfig,
) -> tuple[TrainHistory, list]:
    """Gaussian-actor analogue of train() on a continuous one-step task.

    initial_params is a list of (mean, std) arrays per agent. The baseline is
    the sampled surrogate (config.ob_n_samples fresh actions per update,
    counterfactual q queried from the payoff), COMA-style mean, or none.
    Returns are batch-mean estimates: there is no solver to make them exact.
    """
    params = [
        (np.array(m, dtype=float), np.array(s, dtype=float))
        for m, s in initial_params
    ]
    if len(params) != task.n_agents:
        raise ValueError("one (mean, std) pair per agent required")
    rng = np.random.default_rng(config.seed)
    offsets = np.concatenate(([0], np.cumsum(task.dims))).astype(int)
    batch = config.batch_size
    j_bound = 10.0 * task.beta
    returns, grad_vars, grad_norms, entropies = [], [], [], []
    for _ in range(config.iterations):
        samples = np.empty((batch, task.total_dim))
        for i, (mean, std) in enumerate(params):
            samples[:, offsets[i] : offsets[i + 1]] = mean + std * rng.standard_normal(
                (batch, task.dims[i])
            )
        q_vals = np.asarray(task.payoff(samples), dtype=float)
        j_val = float(q_vals.mean())
        if not math.isfinite(j_val) or abs(j_val) > j_bound:
            raise DivergenceError(
                f"estimated return {j_val} exceeds bound {j_bound}",
                report={"J": j_val, "bound": j_bound, "iteration": len(returns)},
            )
        returns.append(j_val)
        entropies.append(
            tuple(
                float(
                    0.5 * np.sum(np.log(2.0 * math.pi * math.e * std**2))
                )
                for _, std in params
            )
        )
        per_traj = []
        mean_steps = []
        for i, (mean, std) in enumerate(params):
            own = samples[:, offsets[i] : offsets[i + 1]]
            if config.baseline.tag is BaselineTag.NONE:
                baselines = np.zeros(batch)
            elif config.baseline.tag is BaselineTag.COMA:
                baselines = np.full(batch, j_val)
            else:
                baselines = np.empty(batch)
                for b in range(batch):
                    fixed = samples[b]

                    def q_fn(candidates, fixed=fixed, i=i):
                        joint = np.tile(fixed, (len(candidates), 1))
                        joint[:, offsets[i] : offsets[i + 1]] = candidates
                        return np.asarray(task.payoff(joint), dtype=float)

                    baselines[b] = ob_surrogate_gaussian(
                        q_fn, mean, std, config.ob_n_samples, rng
                    )
            x_vals = q_vals - baselines
            score = np.stack(
                [gaussian_log_prob_grad(mean, std, a) for a in own]
            )  # (batch, 2d)
            g = x_vals[:, None] * score
            per_traj.append(g)
            mean_steps.append(g.mean(axis=0))
        flat = np.concatenate(per_traj, axis=1)
        mg = flat.mean(axis=0)
        dev = flat - mg
        grad_vars.append(
            float(np.einsum("bd,bd->", dev, dev) / max(batch - 1, 1))
        )
        grad_norms.append(float(np.linalg.norm(mg)))
        for i, (mean, std) in enumerate(params):
            d = task.dims[i]
            step = mean_steps[i]
            new_mean = mean + config.actor_lr * step[:d]
            new_std = np.maximum(std + config.actor_lr * step[d:], 1e-3)
            params[i] = (new_mean, new_std)
    history = TrainHistory(
        returns=tuple(returns),
        grad_variance=tuple(grad_vars),
        grad_norm=tuple(grad_norms),
        entropies=tuple(entropies),
    )
    return history, params
