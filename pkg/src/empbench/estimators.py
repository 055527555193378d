"""Average-reward estimators built on learned corrections.

Given a state correction omega (or a state-action correction u) and logged
transitions, these functions produce point estimates of the target policy's
infinite-horizon average reward, plus the classical step-wise weighted
importance sampling baseline and the multiple-importance-sampling
combination of per-behavior estimates.
"""

import numpy as np
from dataclasses import dataclass

from .corrections import (CorrectionVector, KernelSpec, RATIO_FLOOR, SolverParams,
                          StateActionCorrection, learn_emp)
from .mdp import TabularPolicy, TransitionDataset
from .policies import WeightVector, compute_kl_weights, estimate_policy_mle


@dataclass
class HeuristicTable:
    """Per-state combination weights h[j, s] over behavior labels, forming a
    partition of unity: sum_j h[j, s] = 1 for every state."""

    h: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.h.ndim != 2:
            raise ValueError("heuristic table must be (m, S)")
        if np.any(self.h < 0):
            raise ValueError("heuristic weights must be nonnegative")
        if not np.allclose(self.h.sum(axis=0), 1.0, rtol=0.0, atol=1e-9):
            raise ValueError("heuristic columns must sum to 1")


def _denominator_probs(data: TransitionDataset, denom_policy) -> np.ndarray:
    if isinstance(denom_policy, TabularPolicy):
        return denom_policy.probs[data.s, data.a]
    labels = data.require_labels()
    stacked = np.stack([p.probs for p in denom_policy])
    return stacked[labels, data.s, data.a]


def _correction_values(omega) -> np.ndarray:
    # learned corrections carry a normalization; exact-ratio arrays are
    # accepted as-is so oracles can be plugged in directly
    if isinstance(omega, CorrectionVector):
        return omega.values
    return np.asarray(omega, dtype=np.float64)


def ratio_reward_estimate(data: TransitionDataset, omega: CorrectionVector,
                          target: TabularPolicy, denom_policy) -> float:
    """Weighted average of omega(s) * pi(a|s)/denom(a|s) * r over the data.

    ``denom_policy`` is the same policy the correction was learned against:
    the exact behavior, the maximum-likelihood mixture estimate, or a list
    of per-label policies for pooled policy-aware data.  ``omega`` may be a
    learned correction or a plain per-state ratio array (oracle use).
    """
    if len(data) == 0:
        raise ValueError("dataset must be nonempty")
    rho = target.probs[data.s, data.a] / np.maximum(_denominator_probs(data, denom_policy),
                                                    RATIO_FLOOR)
    terms = data.weights * _correction_values(omega)[data.s] * rho * data.r
    return float(terms.sum() / data.weights.sum())


def sadl_reward_estimate(data: TransitionDataset, u: StateActionCorrection,
                         target: TabularPolicy) -> float:
    """Weighted average of u(s, a) * pi(a|s) * r; no behavior policy needed."""
    if len(data) == 0:
        raise ValueError("dataset must be nonempty")
    terms = data.weights * u.values[data.s, data.a] * target.probs[data.s, data.a] * data.r
    return float(terms.sum() / data.weights.sum())


def balanced_heuristic(weights: WeightVector, stationary_dists) -> HeuristicTable:
    """The variance-minimizing partition of unity
    h_j(s) = w_j d_j(s) / sum_k w_k d_k(s); states with zero total mass get
    uniform rows."""
    if len(weights) != len(stationary_dists):
        raise ValueError("weights and stationary_dists must have equal length")
    mass = np.stack([w * d.probs for w, d in zip(weights.weights, stationary_dists)])
    denom = mass.sum(axis=0)
    h = np.full_like(mass, 1.0 / len(weights.weights))
    ok = denom > 0
    h[:, ok] = mass[:, ok] / denom[ok]
    return HeuristicTable(h)


def mis_reward_estimate(data: TransitionDataset, per_policy_omegas,
                        per_policy_behaviors, target: TabularPolicy,
                        heuristics: HeuristicTable) -> float:
    """Multiple importance sampling: per-label self-averaged estimates
    combined through the heuristic weights:

    sum_j (1/W_j) sum_{i: label=j} w_i h_j(s_i) omega_j(s_i)
                  pi(a_i|s_i)/pi_j(a_i|s_i) r_i

    Each per-policy correction may be a learned correction or a plain
    per-state ratio array (oracle use).
    """
    labels = data.require_labels()
    total = 0.0
    for j, (omega, behavior) in enumerate(zip(per_policy_omegas, per_policy_behaviors)):
        mask = labels == j
        if not np.any(mask):
            continue
        w = data.weights[mask]
        s, a, r = data.s[mask], data.a[mask], data.r[mask]
        rho = target.probs[s, a] / np.maximum(behavior.probs[s, a], RATIO_FLOOR)
        values = _correction_values(omega)
        total += float((w * heuristics.h[j, s] * values[s] * rho * r).sum() / w.sum())
    return total


def stepwise_wis_estimate(trajectories, target: TabularPolicy, behaviors) -> float:
    """Step-wise weighted (self-normalized) importance sampling.

    Each step carries the cumulative product of action-probability ratios
    from the start of its trajectory; the estimate is the weight-normalized
    average of all step rewards.  Products are accumulated in log space so
    long horizons cannot overflow.
    """
    if len(trajectories) == 0:
        raise ValueError("trajectories must be nonempty")
    log_weights, rewards = [], []
    for traj in trajectories:
        behavior = behaviors[traj.policy_label]
        p_target = target.probs[traj.states, traj.actions]
        p_behavior = np.maximum(behavior.probs[traj.states, traj.actions], RATIO_FLOOR)
        with np.errstate(divide="ignore"):
            log_rho = np.where(p_target > 0, np.log(p_target / p_behavior), -np.inf)
        log_weights.append(np.cumsum(log_rho))
        rewards.append(traj.rewards)
    log_weights = np.concatenate(log_weights)
    rewards = np.concatenate(rewards)
    shift = log_weights.max()
    if not np.isfinite(shift):
        return float("nan")
    w = np.exp(log_weights - shift)
    return float((w * rewards).sum() / w.sum())


def emp_single_estimate(data: TransitionDataset, target: TabularPolicy,
                        kernel: KernelSpec | None = None,
                        solver: SolverParams | None = None) -> float:
    """Run the estimated-mixture pipeline separately on each behavior's
    subgroup and average the per-subgroup estimates."""
    labels = data.require_labels()
    num_states, num_actions = target.probs.shape
    estimates = []
    for j in np.unique(labels):
        sub = data.subset(labels == j)
        omega = learn_emp(sub, target, kernel, solver)
        pi_hat = estimate_policy_mle(sub, num_states, num_actions)
        estimates.append(ratio_reward_estimate(sub, omega, target, pi_hat))
    return float(np.mean(estimates))


def kl_emp_estimate(data: TransitionDataset, target: TabularPolicy,
                    kernel: KernelSpec | None = None,
                    solver: SolverParams | None = None) -> float:
    """Pooled estimated-mixture estimate with KL-based mixture proportions.

    Each behavior is first estimated per label by maximum likelihood; the
    sample proportions N_j/N are then replaced by the KL-proximity weights
    by multiplying every record's weight with w_kl_j / (N_j/N), and the
    plain pooled pipeline runs on the reweighted data.
    """
    labels = data.require_labels()
    num_states, num_actions = target.probs.shape
    present = np.unique(labels)
    behaviors = [estimate_policy_mle(data.subset(labels == j), num_states, num_actions)
                 for j in present]
    visited = np.unique(data.s)
    kl_weights = compute_kl_weights(target, behaviors, visited)
    group_w = np.array([data.weights[labels == j].sum() for j in present])
    group_w /= group_w.sum()
    factor_by_label = np.zeros(int(present.max()) + 1)
    factor_by_label[present] = kl_weights.weights / group_w
    reweighted = data.with_weights(data.weights * factor_by_label[labels])
    omega = learn_emp(reweighted, target, kernel, solver)
    pi_hat = estimate_policy_mle(reweighted, num_states, num_actions)
    return ratio_reward_estimate(reweighted, omega, target, pi_hat)
