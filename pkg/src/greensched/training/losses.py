"""Actor-critic losses: one-step critic regression, exact-expectation actor
objective, and the offline cloning variants (plain and advantage-filtered).

The numeric recipes live in pure-numpy helpers so they can be pinned against
hand-computed tables; the graph builders reproduce the same formulas through
the autodiff ops for the parameter updates.  Expectations over the small
discrete action set are computed exactly instead of sampled, except where an
explicit sample count k is requested for the advantage baseline.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..nn import autodiff as ad
from ..nn.autodiff import Tensor

# -- numpy reference computations (tabular-checkable) -------------------------


def critic_targets(rewards: np.ndarray, dones: np.ndarray, next_probs: np.ndarray,
                   next_q: np.ndarray, discount: float) -> np.ndarray:
    """y_i = r_i + discount * (1 - done_i) * sum_a pi(a|s') * Qbar(s', a)."""
    expected_next = (next_probs * next_q).sum(axis=-1)
    return rewards + discount * (1.0 - dones.astype(np.float64)) * expected_next


def critic_loss_value(q_taken: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((q_taken - targets) ** 2))


def actor_loss_online_value(probs: np.ndarray, q: np.ndarray,
                            entropy_coeff: float = 0.0) -> float:
    """Mean of -E_{a~pi}[Q(s,a)], optionally minus an entropy bonus."""
    expected_q = (probs * q).sum(axis=-1)
    loss = -float(np.mean(expected_q))
    if entropy_coeff:
        entropy = -(probs * np.log(np.clip(probs, 1e-12, None))).sum(axis=-1)
        loss -= entropy_coeff * float(np.mean(entropy))
    return loss


def estimate_advantage(probs: np.ndarray, q: np.ndarray, actions: np.ndarray,
                       k: Optional[int] = None,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """A(s, a) = Q(s, a) - baseline.

    With k None the baseline is the exact expectation sum_a pi(a|s) Q(s, a);
    otherwise it is the mean of k action-value samples drawn from pi.
    """
    rows = np.arange(len(actions))
    q_taken = q[rows, actions]
    if k is None:
        baseline = (probs * q).sum(axis=-1)
    else:
        if k < 1:
            raise ValueError("advantage sample count must be >= 1 (or None for exact)")
        if rng is None:
            raise ValueError("sampled advantage baseline needs an rng")
        baseline = np.zeros(len(actions))
        for i in range(len(actions)):
            drawn = rng.choice(q.shape[1], size=k, p=probs[i])
            baseline[i] = q[i, drawn].mean()
    return q_taken - baseline


def actor_loss_offline_value(log_probs: np.ndarray, actions: np.ndarray,
                             advantages: Optional[np.ndarray], mode: str) -> float:
    """bc: mean -log pi(a_i|s_i); crr: clone only positive-advantage actions."""
    rows = np.arange(len(actions))
    logp = log_probs[rows, actions]
    if mode == "bc":
        return -float(np.mean(logp))
    if mode == "crr":
        if advantages is None:
            raise ValueError("crr mode requires advantages")
        keep = (advantages > 0).astype(np.float64)
        return -float(np.mean(keep * logp))
    raise ValueError(f"unknown offline mode: {mode!r}")


# -- graph builders used by the update step -----------------------------------


def critic_loss_graph(q_values: Tensor, actions: np.ndarray, targets: np.ndarray) -> Tensor:
    q_taken = ad.take_actions(q_values, actions)
    diff = ad.sub(q_taken, ad.constant(targets))
    return ad.reduce_mean(ad.power(diff, 2.0))


def actor_loss_online_graph(logits: Tensor, q_data: np.ndarray,
                            entropy_coeff: float = 0.0) -> Tensor:
    probs = ad.softmax(logits, axis=-1)
    expected_q = ad.reduce_sum(ad.mul(probs, ad.constant(q_data)), axis=-1)
    loss = ad.mul(ad.reduce_mean(expected_q), ad.constant(-1.0))
    if entropy_coeff:
        logp = ad.log_softmax(logits, axis=-1)
        entropy = ad.mul(ad.reduce_sum(ad.mul(probs, logp), axis=-1), ad.constant(-1.0))
        loss = ad.sub(loss, ad.mul(ad.reduce_mean(entropy), ad.constant(entropy_coeff)))
    return loss


def actor_loss_offline_graph(logits: Tensor, actions: np.ndarray, mode: str,
                             advantages: Optional[np.ndarray] = None) -> Tensor:
    logp = ad.take_actions(ad.log_softmax(logits, axis=-1), actions)
    if mode == "bc":
        weights = np.ones(len(actions))
    elif mode == "crr":
        if advantages is None:
            raise ValueError("crr mode requires advantages")
        weights = (advantages > 0).astype(np.float64)
    else:
        raise ValueError(f"unknown offline mode: {mode!r}")
    weighted = ad.mul(logp, ad.constant(weights))
    return ad.mul(ad.reduce_mean(weighted), ad.constant(-1.0))
