"""Baselines for the per-agent policy-gradient signal.

Given one agent's row of Q-values over its own actions (other agents' actions
and the state held fixed), four choices of the scalar subtracted from that
row:

  none          b = 0 (vanilla signal Q itself)
  coma          b = E_{a~pi}[Q]  (counterfactual baseline; signal becomes the
                local advantage)
  ob_exact      b* = sum_a pi(a) Q(a) ||g_a||^2 / sum_a pi(a) ||g_a||^2, the
                variance-minimizing choice for arbitrary score vectors g_a
  ob_surrogate  the same optimum specialized to output-layer scores; for
                softmax it is the x-measure expectation of Q, and for Gaussian
                policies it is estimated from freshly sampled actions.

Any constant shift leaves the expected gradient unchanged; only the variance
moves. The optimal baseline is a gradient-norm-weighted average of Q, so it
leans toward the Q-values of actions whose score vectors are large.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .policies import x_measure_softmax


class BaselineTag(str, Enum):
    NONE = "none"
    COMA = "coma"
    OB_EXACT = "ob_exact"
    OB_SURROGATE = "ob_surrogate"


@dataclass(frozen=True)
class BaselineKind:
    tag: BaselineTag = BaselineTag.NONE

    def __post_init__(self):
        object.__setattr__(self, "tag", BaselineTag(self.tag))


def coma_baseline(q_row, pi_i) -> float:
    """Counterfactual baseline: the policy expectation of the Q-row."""
    q_row = np.asarray(q_row, dtype=float)
    pi_i = np.asarray(pi_i, dtype=float)
    if q_row.shape != pi_i.shape:
        raise ValueError(f"length mismatch: {q_row.shape} vs {pi_i.shape}")
    return float(pi_i @ q_row)


def ob_surrogate_discrete(q_row, pi_i, tol: float = 1e-10) -> float:
    """Optimal baseline for a tabular softmax actor: E_x[Q] under the x-measure."""
    q_row = np.asarray(q_row, dtype=float)
    pi_i = np.asarray(pi_i, dtype=float)
    if q_row.shape != pi_i.shape:
        raise ValueError(f"length mismatch: {q_row.shape} vs {pi_i.shape}")
    return float(x_measure_softmax(pi_i, tol=tol) @ q_row)


def ob_exact(q_row, grad_vectors, pi_i) -> float:
    """Optimal baseline for arbitrary per-action score vectors.

    grad_vectors has one row per action: the gradient of log pi at that
    action with respect to the full parameter vector.
    """
    q_row = np.asarray(q_row, dtype=float)
    pi_i = np.asarray(pi_i, dtype=float)
    grads = np.asarray(grad_vectors, dtype=float)
    if grads.shape[0] != q_row.shape[0] or pi_i.shape != q_row.shape:
        raise ValueError("q_row, grad_vectors, pi_i must agree on the action count")
    norms = np.einsum("ad,ad->a", grads, grads)
    denom = float(pi_i @ norms)
    if denom <= 0.0:
        raise ZeroDivisionError("all score vectors vanish; baseline undefined")
    return float(pi_i @ (q_row * norms)) / denom


def ob_surrogate_gaussian(
    q_fn,
    mean,
    std,
    n_samples: int,
    rng: np.random.Generator,
    include_std_grad: bool = True,
) -> float:
    """Sampled optimal baseline for a diagonal Gaussian actor.

    Draws n_samples actions from N(mean, std), queries q_fn once with the
    (n_samples, d) batch, and returns the score-norm-weighted average of the
    q-values. The score norm covers the (mean, std) output layer; pass
    include_std_grad=False to weight by the mean components only (the
    reference pseudocode is silent on which convention it uses).
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.atleast_1d(np.asarray(std, dtype=float))
    if np.any(std <= 0):
        raise ValueError("std must be strictly positive")
    actions = mean + std * rng.standard_normal((n_samples, mean.shape[0]))
    diff = actions - mean
    norms = np.sum((diff / std**2) ** 2, axis=1)
    if include_std_grad:
        norms = norms + np.sum(((diff**2 - std**2) / std**3) ** 2, axis=1)
    q_vals = np.asarray(q_fn(actions), dtype=float).reshape(-1)
    if q_vals.shape[0] != n_samples:
        raise ValueError("q_fn must return one value per sampled action")
    denom = float(norms.sum())
    if denom <= 0.0:
        raise ZeroDivisionError("all sampled score norms vanish; baseline undefined")
    lo, hi = float(q_vals.min()), float(q_vals.max())
    if lo == hi:
        # weighted mean of identical values is that value; skip the rounding
        return lo
    return float(norms @ q_vals) / denom


def x_value(q_row, baseline: float) -> np.ndarray:
    """Baseline-shifted signal row: Q - b, the drop-in advantage replacement."""
    return np.asarray(q_row, dtype=float) - float(baseline)


def baseline_value(kind: BaselineKind, q_row, pi_i, grad_vectors=None) -> float:
    """Dispatch a discrete baseline choice on one Q-row."""
    if kind.tag is BaselineTag.NONE:
        return 0.0
    if kind.tag is BaselineTag.COMA:
        return coma_baseline(q_row, pi_i)
    if kind.tag is BaselineTag.OB_SURROGATE:
        return ob_surrogate_discrete(q_row, pi_i)
    if grad_vectors is None:
        from .policies import grad_log_softmax

        pi_arr = np.asarray(pi_i, dtype=float)
        grad_vectors = np.stack(
            [grad_log_softmax(pi_arr, a) for a in range(pi_arr.shape[0])]
        )
    return ob_exact(q_row, grad_vectors, pi_i)
