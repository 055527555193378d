"""Shared test fixtures: small random MDPs and independent oracles."""

import dataclasses

import numpy as np

from empbench import TabularMDP, TabularPolicy, stationary_distribution


def random_mdp(rng, num_states, num_actions, reward_scale=1.0):
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    reward = reward_scale * rng.normal(size=(num_states, num_actions))
    initial = rng.dirichlet(np.ones(num_states))
    return TabularMDP(transition, reward, initial)


def random_policy(rng, num_states, num_actions):
    return TabularPolicy(rng.dirichlet(np.ones(num_actions), size=num_states))


def random_soft_policy(rng, num_states, num_actions, epsilon=0.2):
    """Random policy mixed with uniform, so every action keeps probability
    at least epsilon / num_actions (bounded importance ratios)."""
    probs = rng.dirichlet(np.ones(num_actions), size=num_states)
    return TabularPolicy((1 - epsilon) * probs + epsilon / num_actions)


def two_state_symmetric(rewards=(0.0, 1.0)):
    # one action per state, both states hop to the other with prob 0.5
    transition = np.array([[[0.5, 0.5]], [[0.5, 0.5]]])
    reward = np.array([[rewards[0]], [rewards[1]]])
    return TabularMDP(transition, reward, np.array([1.0, 0.0]))


def solve_stationary_exactly(chain: np.ndarray) -> np.ndarray:
    """Independent oracle: solve the balance equations d P = d, sum d = 1
    as a linear system (no power iteration)."""
    n = chain.shape[0]
    a = np.vstack([chain.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    d, *_ = np.linalg.lstsq(a, b, rcond=None)
    return d


def stationary_start(mdp: TabularMDP, policy: TabularPolicy) -> TabularMDP:
    """Copy of the MDP whose initial distribution is the policy's stationary
    distribution, so sampled states are stationary from step one."""
    d = stationary_distribution(mdp, policy)
    return dataclasses.replace(mdp, initial_dist=d.probs)


def naive_state_quadratic(data, target, denom, kfunc, num_states):
    """O(N^2) double-sum oracle for the state quadratic form."""
    n = len(data)
    w = data.weights
    a = np.zeros((num_states, num_states))
    basis = []
    for i in range(n):
        b = np.zeros(num_states)
        b[data.s[i]] += target.probs[data.s[i], data.a[i]] / denom.probs[data.s[i], data.a[i]]
        b[data.sp[i]] -= 1.0
        basis.append(b)
    for i in range(n):
        for j in range(n):
            a += w[i] * w[j] * kfunc(data.sp[i], data.sp[j]) * np.outer(basis[i], basis[j])
    return a / w.sum() ** 2


def naive_state_action_objective(data, target, nu, kfunc, u):
    """Direct four-kernel-term double sum for the state-action objective."""
    n = len(data)
    num_actions = len(nu)
    w = data.weights
    total = 0.0
    for i in range(n):
        si, ai, spi = int(data.s[i]), int(data.a[i]), int(data.sp[i])
        ui, pii = u[si, ai], target.probs[si, ai]
        for j in range(n):
            sj, aj, spj = int(data.s[j]), int(data.a[j]), int(data.sp[j])
            uj, pij = u[sj, aj], target.probs[sj, aj]
            t1 = nu[ai] * nu[aj] * kfunc((si, ai), (sj, aj))
            t2 = pii * pij * sum(nu[a1] * nu[a2] * kfunc((spi, a1), (spj, a2))
                                 for a1 in range(num_actions) for a2 in range(num_actions))
            t3 = -nu[ai] * pij * sum(nu[a2] * kfunc((si, ai), (spj, a2))
                                     for a2 in range(num_actions))
            t4 = -nu[aj] * pii * sum(nu[a1] * kfunc((spi, a1), (sj, aj))
                                     for a1 in range(num_actions))
            total += w[i] * w[j] * ui * uj * (t1 + t2 + t3 + t4)
    return total / w.sum() ** 2
