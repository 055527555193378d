"""Tour of the three benchmark environments and their exact oracles.

Builds each environment, trains a target policy with tabular Q-learning,
and prints the exact stationary distribution and average reward obtained
by power iteration on the policy-induced chain.

Run: python3 demos/01_environments_and_oracles.py
"""

import numpy as np

from empbench import (average_reward, build_environment, soften_policy,
                      stationary_distribution, train_q_learning_policy,
                      uniform_policy)


def describe(name, episodes):
    mdp = build_environment(name)
    print(f"\n=== {name} ===")
    print(f"states: {mdp.num_states}, actions: {mdp.num_actions}")

    uniform = uniform_policy(mdp.num_states, mdp.num_actions)
    print(f"average reward, uniform policy: {average_reward(mdp, uniform):.4f}")

    trained = train_q_learning_policy(mdp, episodes=episodes, epsilon=0.1,
                                      alpha=0.2, gamma=0.95, seed=0)
    print(f"average reward, trained policy: {average_reward(mdp, trained):.4f}")

    d = stationary_distribution(mdp, trained)
    top = np.argsort(d.probs)[::-1][:5]
    print("most visited states under the trained policy:")
    for s in top:
        print(f"  state {s:4d}: {d.probs[s]:.4f}")

    softened = soften_policy(trained, 0.5)
    print(f"average reward after 0.5-softening:  {average_reward(mdp, softened):.4f}")


if __name__ == "__main__":
    describe("singlepath", episodes=200)
    describe("gridworld", episodes=2000)
    describe("taxi", episodes=2000)
