"""The three discrete benchmark environments.

All environments are continuing (ergodic under any everywhere-positive
policy), so infinite-horizon average reward is well defined.
"""

import numpy as np

from .mdp import TabularMDP

TAXI_GRID = 5
TAXI_CORNERS = (0, 4, 20, 24)  # cell indices of the four corners, row-major
TAXI_PASSENGER_RATE = 0.05     # per-corner appearance/disappearance probability


def _taxi_state(cell: int, passengers: int, status: int) -> int:
    # passengers is a 4-bit mask over corners, status 0 = empty taxi and
    # 1 + d = carrying a passenger bound for corner d
    return cell * 80 + passengers * 5 + status


def build_taxi() -> TabularMDP:
    """5x5 taxi world: 2000 states (25 cells x 16 passenger masks x 5 taxi
    statuses) and 6 actions (move N/E/S/W, pick up, drop off).

    Rewards: +20 for a valid pickup or for dropping a passenger at their
    destination corner, -1 otherwise.  Between steps every corner gains or
    loses a waiting passenger with probability 0.05, independently, which
    keeps the chain ergodic.  A picked-up passenger's destination corner is
    drawn uniformly.

    Episodes start with the empty taxi at the center cell and the passenger
    mask drawn from its own stationary law (uniform over the 16 masks, since
    appearance and disappearance rates are equal), so early steps are not
    systematically passenger-starved.
    """
    num_states = 25 * 16 * 5
    num_actions = 6
    transition = np.zeros((num_states, num_actions, num_states))
    reward = np.full((num_states, num_actions), -1.0)

    # probability of each 4-bit flip pattern applied to the passenger mask
    rate = TAXI_PASSENGER_RATE
    flip_probs = np.empty(16)
    for pattern in range(16):
        k = bin(pattern).count("1")
        flip_probs[pattern] = rate**k * (1.0 - rate) ** (4 - k)

    corner_of_cell = {cell: i for i, cell in enumerate(TAXI_CORNERS)}

    for cell in range(25):
        row, col = divmod(cell, TAXI_GRID)
        moved = [
            cell - TAXI_GRID if row > 0 else cell,              # north
            cell + 1 if col < TAXI_GRID - 1 else cell,          # east
            cell + TAXI_GRID if row < TAXI_GRID - 1 else cell,  # south
            cell - 1 if col > 0 else cell,                      # west
        ]
        for passengers in range(16):
            for status in range(5):
                s = _taxi_state(cell, passengers, status)
                for action in range(num_actions):
                    # core outcomes: (probability, cell', passengers', status')
                    if action < 4:
                        outcomes = [(1.0, moved[action], passengers, status)]
                    elif action == 4:  # pick up
                        corner = corner_of_cell.get(cell)
                        if status == 0 and corner is not None and passengers >> corner & 1:
                            reward[s, action] = 20.0
                            cleared = passengers & ~(1 << corner)
                            outcomes = [(0.25, cell, cleared, 1 + d) for d in range(4)]
                        else:
                            outcomes = [(1.0, cell, passengers, status)]
                    else:  # drop off
                        if status > 0 and cell == TAXI_CORNERS[status - 1]:
                            reward[s, action] = 20.0
                            outcomes = [(1.0, cell, passengers, 0)]
                        else:
                            outcomes = [(1.0, cell, passengers, status)]
                    for prob, cell2, pass2, status2 in outcomes:
                        for pattern in range(16):
                            s2 = _taxi_state(cell2, pass2 ^ pattern, status2)
                            transition[s, action, s2] += prob * flip_probs[pattern]

    initial = np.zeros(num_states)
    for passengers in range(16):
        initial[_taxi_state(12, passengers, 0)] = 1.0 / 16.0
    return TabularMDP(transition, reward, initial)


GRIDWORLD_SIDE = 4
GRIDWORLD_REWARD_STATE = 3
GRIDWORLD_FIRE_STATE = 12
GRIDWORLD_TERMINATE_STATE = 15
GRIDWORLD_START_STATE = 0


def build_gridworld() -> TabularMDP:
    """4x4 grid world, actions up/down/left/right, deterministic moves.

    State rewards: -1 in the thirteen normal states, +1 in the reward state,
    +100 in the terminate state, -11 in the fire state.  The terminate state
    pays its reward and then resets to the start, turning the episodic task
    into an ergodic chain.
    """
    n = GRIDWORLD_SIDE
    num_states = n * n
    num_actions = 4
    state_reward = np.full(num_states, -1.0)
    state_reward[GRIDWORLD_REWARD_STATE] = 1.0
    state_reward[GRIDWORLD_FIRE_STATE] = -11.0
    state_reward[GRIDWORLD_TERMINATE_STATE] = 100.0

    initial = np.zeros(num_states)
    initial[GRIDWORLD_START_STATE] = 1.0

    transition = np.zeros((num_states, num_actions, num_states))
    for s in range(num_states):
        if s == GRIDWORLD_TERMINATE_STATE:
            transition[s, :, :] = initial  # reset after the terminal payout
            continue
        row, col = divmod(s, n)
        moves = [
            s - n if row > 0 else s,      # up
            s + n if row < n - 1 else s,  # down
            s - 1 if col > 0 else s,      # left
            s + 1 if col < n - 1 else s,  # right
        ]
        for a, s2 in enumerate(moves):
            transition[s, a, s2] = 1.0

    reward = np.tile(state_reward[:, None], (1, num_actions))
    return TabularMDP(transition, reward, initial)


SINGLEPATH_ADVANCE = 0
SINGLEPATH_STAY = 1


def build_singlepath() -> TabularMDP:
    """Five-state chain with two actions: advance to the next state (+1
    reward) or remain in place (-1 reward).

    The final state wraps back to state 0 on advance, which keeps every
    policy that advances with positive probability ergodic.
    """
    num_states = 5
    num_actions = 2
    transition = np.zeros((num_states, num_actions, num_states))
    reward = np.empty((num_states, num_actions))
    for s in range(num_states):
        transition[s, SINGLEPATH_ADVANCE, (s + 1) % num_states] = 1.0
        transition[s, SINGLEPATH_STAY, s] = 1.0
        reward[s, SINGLEPATH_ADVANCE] = 1.0
        reward[s, SINGLEPATH_STAY] = -1.0
    initial = np.zeros(num_states)
    initial[0] = 1.0
    return TabularMDP(transition, reward, initial)


ENVIRONMENTS = {
    "taxi": build_taxi,
    "gridworld": build_gridworld,
    "singlepath": build_singlepath,
}


def build_environment(name: str) -> TabularMDP:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; "
                         f"expected one of {sorted(ENVIRONMENTS)}") from None
