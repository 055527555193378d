"""Tabular MDP primitives: domain types, exact oracles, and simulation.

States are 0..S-1, actions 0..A-1.  Transition tensors have shape (S, A, S)
with rows T[s, a, :] summing to one, rewards are (S, A) tables, and every
stochastic operation takes an explicit integer seed so experiments are
bit-reproducible.
"""

import numpy as np
from dataclasses import dataclass, field

PROB_ATOL = 1e-12


class NonErgodicChain(RuntimeError):
    """Power iteration did not reach the residual tolerance.

    Signals that the policy-induced chain has no unique stationary
    distribution reachable by iteration (periodic or reducible chain).
    """


class MissingLabel(ValueError):
    """An operation that needs behavior-policy labels got unlabeled records."""


@dataclass
class TabularMDP:
    """Finite MDP with transition tensor T[s, a, s'], rewards r[s, a]
    and an initial state distribution."""

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.initial_dist = np.asarray(self.initial_dist, dtype=np.float64)
        if self.transition.ndim != 3 or self.transition.shape[0] != self.transition.shape[2]:
            raise ValueError(f"transition must be (S, A, S), got {self.transition.shape}")
        s, a = self.transition.shape[:2]
        if self.reward.shape != (s, a):
            raise ValueError(f"reward must be (S, A) = ({s}, {a}), got {self.reward.shape}")
        if self.initial_dist.shape != (s,):
            raise ValueError(f"initial_dist must have length {s}")
        if np.any(self.transition < 0) or np.any(self.initial_dist < 0):
            raise ValueError("probabilities must be nonnegative")
        row_sums = self.transition.sum(axis=2)
        if not np.allclose(row_sums, 1.0, rtol=0.0, atol=PROB_ATOL):
            raise ValueError("every transition row T[s, a, :] must sum to 1")
        if abs(self.initial_dist.sum() - 1.0) > PROB_ATOL:
            raise ValueError("initial_dist must sum to 1")

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]


@dataclass
class TabularPolicy:
    """Row-stochastic action probability table pi[s, a]."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValueError("policy table must be 2-D (S, A)")
        if np.any(self.probs < 0):
            raise ValueError("policy probabilities must be nonnegative")
        if not np.allclose(self.probs.sum(axis=1), 1.0, rtol=0.0, atol=PROB_ATOL):
            raise ValueError("every policy row must sum to 1")

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]


def uniform_policy(num_states: int, num_actions: int) -> TabularPolicy:
    return TabularPolicy(np.full((num_states, num_actions), 1.0 / num_actions))


def greedy_policy(policy: TabularPolicy) -> TabularPolicy:
    """Deterministic policy picking each row's most probable action
    (ties broken by lowest action index)."""
    probs = np.zeros_like(policy.probs)
    probs[np.arange(policy.num_states), np.argmax(policy.probs, axis=1)] = 1.0
    return TabularPolicy(probs)


def soften_policy(policy: TabularPolicy, epsilon: float) -> TabularPolicy:
    """Mix a policy with the uniform policy: (1 - eps) * pi + eps * uniform."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    num_actions = policy.num_actions
    return TabularPolicy((1.0 - epsilon) * policy.probs + epsilon / num_actions)


@dataclass
class StateDistribution:
    """Probability vector over states."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1:
            raise ValueError("state distribution must be 1-D")
        if np.any(self.probs < 0):
            raise ValueError("state distribution entries must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("state distribution must sum to 1")


@dataclass
class Trajectory:
    """One rollout: parallel arrays of (state, action, reward, next_state)
    plus the index of the behavior policy that generated it."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    policy_label: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.next_states = np.asarray(self.next_states, dtype=np.int64)
        n = len(self.states)
        if not (len(self.actions) == len(self.rewards) == len(self.next_states) == n):
            raise ValueError("trajectory arrays must have equal length")
        if n > 1 and not np.array_equal(self.next_states[:-1], self.states[1:]):
            raise ValueError("steps must chain: next_state[t] == state[t+1]")

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class TransitionDataset:
    """Flat collection of logged transitions.

    Columns: state s, action a, next state sp, reward r, an optional
    behavior-policy label per record, and a nonnegative sample weight
    (default 1).  Weighted records let population-level expectations be
    represented exactly, see :func:`population_dataset`.
    """

    s: np.ndarray
    a: np.ndarray
    sp: np.ndarray
    r: np.ndarray
    labels: np.ndarray | None = None
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int64)
        self.a = np.asarray(self.a, dtype=np.int64)
        self.sp = np.asarray(self.sp, dtype=np.int64)
        self.r = np.asarray(self.r, dtype=np.float64)
        n = len(self.s)
        if not (len(self.a) == len(self.sp) == len(self.r) == n):
            raise ValueError("dataset columns must have equal length")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != n:
                raise ValueError("labels must have one entry per record")
        if self.weights is None:
            self.weights = np.ones(n, dtype=np.float64)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if len(self.weights) != n:
                raise ValueError("weights must have one entry per record")
            if np.any(self.weights < 0):
                raise ValueError("weights must be nonnegative")

    def __len__(self) -> int:
        return len(self.s)

    @property
    def counts_per_label(self) -> np.ndarray:
        """Record counts N_j per behavior label (requires labels)."""
        labels = self.require_labels()
        return np.bincount(labels)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise MissingLabel("this operation requires per-record behavior labels")
        return self.labels

    def subset(self, mask: np.ndarray) -> "TransitionDataset":
        labels = self.labels[mask] if self.labels is not None else None
        return TransitionDataset(self.s[mask], self.a[mask], self.sp[mask],
                                 self.r[mask], labels, self.weights[mask])

    def with_weights(self, weights: np.ndarray) -> "TransitionDataset":
        return TransitionDataset(self.s, self.a, self.sp, self.r, self.labels, weights)

    @classmethod
    def from_trajectories(cls, trajectories) -> "TransitionDataset":
        s = np.concatenate([t.states for t in trajectories])
        a = np.concatenate([t.actions for t in trajectories])
        sp = np.concatenate([t.next_states for t in trajectories])
        r = np.concatenate([t.rewards for t in trajectories])
        labels = np.concatenate([np.full(len(t), t.policy_label, dtype=np.int64)
                                 for t in trajectories])
        return cls(s, a, sp, r, labels)


def chain_matrix(mdp: TabularMDP, policy: TabularPolicy) -> np.ndarray:
    """State-to-state transition matrix M[s, s'] of the policy-induced chain."""
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def stationary_distribution(mdp: TabularMDP, policy: TabularPolicy,
                            tol: float = 1e-10, max_iters: int = 10**6) -> StateDistribution:
    """Stationary distribution of the policy-induced chain by power iteration.

    Starts from the uniform vector and iterates d <- d M until the balance
    residual ||d M - d||_1 drops below ``tol``.  Raises
    :class:`NonErgodicChain` if the residual does not converge within
    ``max_iters`` iterations.
    """
    m = chain_matrix(mdp, policy)
    d = np.full(mdp.num_states, 1.0 / mdp.num_states)
    for _ in range(max_iters):
        d_next = d @ m
        if np.abs(d_next - d).sum() <= tol:
            return StateDistribution(d / d.sum())
        d = d_next
    raise NonErgodicChain(
        f"balance residual did not reach {tol} within {max_iters} iterations")


def average_reward(mdp: TabularMDP, policy: TabularPolicy,
                   tol: float = 1e-10, max_iters: int = 10**6) -> float:
    """Long-run average reward sum_{s,a} d(s) pi(a|s) r(s,a)."""
    d = stationary_distribution(mdp, policy, tol=tol, max_iters=max_iters)
    per_state = np.einsum("sa,sa->s", policy.probs, mdp.reward)
    return float(d.probs @ per_state)


class _RowSampler:
    """Inverse-CDF sampler over the rows of a probability table, caching
    each row's cumulative sums on first use."""

    def __init__(self, table: np.ndarray):
        self.table = table
        self.cache: dict = {}

    def draw(self, key, rng) -> int:
        cdf = self.cache.get(key)
        if cdf is None:
            cdf = np.cumsum(self.table[key])
            self.cache[key] = cdf
        idx = int(np.searchsorted(cdf, rng.random(), side="right"))
        return min(idx, len(cdf) - 1)


def sample_trajectories(mdp: TabularMDP, policy: TabularPolicy, num_traj: int,
                        horizon: int, seed: int, label: int = 0) -> list[Trajectory]:
    """Simulate ``num_traj`` rollouts of exactly ``horizon`` steps each.

    Every trajectory starts from the MDP's initial distribution.  Identical
    seeds produce bit-identical output.
    """
    if num_traj < 1 or horizon < 1:
        raise ValueError("num_traj and horizon must be >= 1")
    rng = np.random.default_rng(seed)
    action_sampler = _RowSampler(policy.probs)
    next_sampler = _RowSampler(mdp.transition)
    init_cdf = np.cumsum(mdp.initial_dist)
    out = []
    for _ in range(num_traj):
        s = min(int(np.searchsorted(init_cdf, rng.random(), side="right")),
                mdp.num_states - 1)
        states = np.empty(horizon, dtype=np.int64)
        actions = np.empty(horizon, dtype=np.int64)
        rewards = np.empty(horizon, dtype=np.float64)
        nexts = np.empty(horizon, dtype=np.int64)
        for t in range(horizon):
            a = action_sampler.draw(s, rng)
            sp = next_sampler.draw((s, a), rng)
            states[t], actions[t], rewards[t], nexts[t] = s, a, mdp.reward[s, a], sp
            s = sp
        out.append(Trajectory(states, actions, rewards, nexts, policy_label=label))
    return out


def train_q_learning_policy(mdp: TabularMDP, episodes: int, epsilon: float,
                            alpha: float, gamma: float, seed: int,
                            steps_per_episode: int = 100) -> TabularPolicy:
    """Tabular Q-learning followed by epsilon-softening of the greedy policy.

    Exploration during training is epsilon-greedy with the same ``epsilon``
    that softens the returned policy:
    pi(a|s) = (1 - eps) * 1{a = argmax Q(s, .)} + eps / |A|,
    argmax ties broken by lowest action index.  The environments here are
    continuing, so an episode is a fixed-length segment of
    ``steps_per_episode`` steps starting from the initial distribution.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    rng = np.random.default_rng(seed)
    num_states, num_actions = mdp.num_states, mdp.num_actions
    q = np.zeros((num_states, num_actions))
    next_sampler = _RowSampler(mdp.transition)
    init_cdf = np.cumsum(mdp.initial_dist)
    for _ in range(episodes):
        s = min(int(np.searchsorted(init_cdf, rng.random(), side="right")),
                num_states - 1)
        for _ in range(steps_per_episode):
            if rng.random() < epsilon:
                a = int(rng.integers(num_actions))
            else:
                a = int(np.argmax(q[s]))
            sp = next_sampler.draw((s, a), rng)
            q[s, a] += alpha * (mdp.reward[s, a] + gamma * q[sp].max() - q[s, a])
            s = sp
    probs = np.full((num_states, num_actions), epsilon / num_actions)
    probs[np.arange(num_states), np.argmax(q, axis=1)] += 1.0 - epsilon
    return TabularPolicy(probs)


def population_dataset(mdp: TabularMDP, behaviors, weights=None,
                       tol: float = 1e-10) -> TransitionDataset:
    """Weighted enumeration of all supported (s, a, s') triples.

    Record weights equal w_j * d_j(s) * pi_j(a|s) * T(s'|s, a), where d_j is
    the exact stationary distribution of behavior j, so weighted sample
    averages over this dataset reproduce population expectations exactly.
    Used as the testing oracle for the correction learners.
    """
    if isinstance(behaviors, TabularPolicy):
        behaviors = [behaviors]
    m = len(behaviors)
    if weights is None:
        weights = np.full(m, 1.0 / m)
    weights = np.asarray(weights, dtype=np.float64)
    cols_s, cols_a, cols_sp, cols_r, cols_l, cols_w = [], [], [], [], [], []
    for j, pol in enumerate(behaviors):
        d = stationary_distribution(mdp, pol, tol=tol).probs
        joint = weights[j] * d[:, None, None] * pol.probs[:, :, None] * mdp.transition
        s_idx, a_idx, sp_idx = np.nonzero(joint)
        cols_s.append(s_idx)
        cols_a.append(a_idx)
        cols_sp.append(sp_idx)
        cols_r.append(mdp.reward[s_idx, a_idx])
        cols_l.append(np.full(len(s_idx), j, dtype=np.int64))
        cols_w.append(joint[s_idx, a_idx, sp_idx])
    return TransitionDataset(np.concatenate(cols_s), np.concatenate(cols_a),
                             np.concatenate(cols_sp), np.concatenate(cols_r),
                             np.concatenate(cols_l), np.concatenate(cols_w))
