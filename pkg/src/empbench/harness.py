"""Benchmark harness: experiment configs, sweeps, summaries, CSV output.

An experiment sweeps (method, num_trajectories, horizon, seed) cells on one
environment.  All behavior policies are epsilon-softenings of one trained
greedy policy, every cell's data seed derives from the sweep values (not
positions), and all methods inside a cell share the same dataset so paired
comparisons across methods are meaningful.
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .corrections import (KernelSpec, SolverParams, learn_bch, learn_bch_pooled,
                          learn_emp, learn_sadl)
from .envs import ENVIRONMENTS, build_environment
from .estimators import (balanced_heuristic, emp_single_estimate, kl_emp_estimate,
                         mis_reward_estimate, ratio_reward_estimate,
                         sadl_reward_estimate, stepwise_wis_estimate)
from .mdp import (MissingLabel, StateDistribution, TransitionDataset, average_reward,
                  greedy_policy, sample_trajectories, soften_policy,
                  stationary_distribution, train_q_learning_policy)
from .policies import WeightVector, compute_kl_weights, empirical_state_distribution, \
    estimate_policy_mle


class InvalidConfig(ValueError):
    """The experiment configuration is malformed."""


class UnknownMethod(ValueError):
    """A method identifier is not recognized."""


METHOD_NAMES = ("bch", "emp", "bch-pooled", "bch-kl-pooled", "emp-single",
                "kl-emp", "sadl", "mis", "wis")


@dataclass
class PolicySpec:
    """Q-learning parameters for the target policy; ``epsilon`` both drives
    exploration and softens the returned greedy policy."""

    episodes: int = 300
    epsilon: float = 0.1
    alpha: float = 0.2
    gamma: float = 0.95


@dataclass
class ExperimentConfig:
    environment: str = "singlepath"
    target: PolicySpec = field(default_factory=PolicySpec)
    behavior_epsilons: list = field(default_factory=lambda: [0.2])
    num_trajectories: list = field(default_factory=lambda: [20, 50, 100, 200])
    horizons: list = field(default_factory=lambda: [50, 100, 200])
    methods: list = field(default_factory=lambda: ["bch", "emp", "wis"])
    seeds: int = 50
    kernel: KernelSpec = field(default_factory=KernelSpec.state_delta)
    solver: SolverParams = field(default_factory=SolverParams)
    output: str = "."

    def validate(self) -> None:
        if self.environment not in ENVIRONMENTS:
            raise InvalidConfig(f"unknown environment {self.environment!r}")
        if self.seeds < 1:
            raise InvalidConfig("seeds must be >= 1")
        if not self.num_trajectories or not self.horizons or not self.methods:
            raise InvalidConfig("num_trajectories, horizons and methods must be nonempty")
        if any(n < 1 for n in self.num_trajectories) or any(h < 1 for h in self.horizons):
            raise InvalidConfig("sweep values must be >= 1")
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise InvalidConfig(f"unknown method {m!r}; expected one of {METHOD_NAMES}")
        if not self.behavior_epsilons:
            raise InvalidConfig("at least one behavior epsilon is required")
        if any(not 0 < e <= 1 for e in self.behavior_epsilons):
            raise InvalidConfig("behavior epsilons must be in (0, 1]")


_CONFIG_KEYS = {
    "environment": str,
    "methods": "str_list",
    "num_trajectories": "int_list",
    "horizons": "int_list",
    "seeds": int,
    "behavior.epsilons": "float_list",
    "target.episodes": int,
    "target.epsilon": float,
    "target.alpha": float,
    "target.gamma": float,
    "kernel.kind": str,
    "kernel.bandwidth": float,
    "solver.step": float,
    "solver.iters": int,
    "solver.seed": int,
    "output": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value config format (lists comma-separated,
    ``#`` starts a comment)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            if kind == "str_list":
                raw[key] = [v.strip() for v in value.split(",") if v.strip()]
            elif kind == "int_list":
                raw[key] = [int(v) for v in value.split(",") if v.strip()]
            elif kind == "float_list":
                raw[key] = [float(v) for v in value.split(",") if v.strip()]
            else:
                raw[key] = kind(value)
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key!r}: {exc}") from None

    cfg = ExperimentConfig()
    cfg.target = PolicySpec(
        episodes=raw.get("target.episodes", cfg.target.episodes),
        epsilon=raw.get("target.epsilon", cfg.target.epsilon),
        alpha=raw.get("target.alpha", cfg.target.alpha),
        gamma=raw.get("target.gamma", cfg.target.gamma),
    )
    cfg.environment = raw.get("environment", cfg.environment)
    cfg.methods = raw.get("methods", cfg.methods)
    cfg.num_trajectories = raw.get("num_trajectories", cfg.num_trajectories)
    cfg.horizons = raw.get("horizons", cfg.horizons)
    cfg.seeds = raw.get("seeds", cfg.seeds)
    cfg.behavior_epsilons = raw.get("behavior.epsilons", cfg.behavior_epsilons)
    cfg.output = raw.get("output", cfg.output)
    kind = raw.get("kernel.kind", "state-delta")
    try:
        cfg.kernel = KernelSpec(kind, raw.get("kernel.bandwidth"))
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    step = raw.get("solver.step")
    cfg.solver = SolverParams(step=None if not step else step,
                              iters=raw.get("solver.iters", 20000),
                              seed=raw.get("solver.seed", 0))
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


@dataclass
class ResultRecord:
    environment: str
    method: str
    num_trajectories: int
    horizon: int
    seed: int
    estimate: float
    true_value: float
    squared_error: float
    tv_distance: float | None
    wall_time_ms: int


@dataclass
class SummaryRow:
    environment: str
    method: str
    num_trajectories: int
    horizon: int
    num_seeds: int
    mse_mean: float
    mse_stderr: float
    log10_mse: float


def tv_distance(estimated: StateDistribution, truth: StateDistribution) -> float:
    """Total variation distance, half the L1 distance between the vectors."""
    if estimated.probs.shape != truth.probs.shape:
        raise ValueError("distributions must cover the same state set")
    return float(0.5 * np.abs(estimated.probs - truth.probs).sum())


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# tags separating independent randomness streams under one master seed
_TAG_TRAIN, _TAG_DATA, _TAG_SOLVER = 1, 2, 3


def make_policies(mdp, cfg: ExperimentConfig, master_seed: int):
    """Target policy plus behaviors: all epsilon-softenings of the greedy
    policy extracted from one Q-learning run."""
    spec = cfg.target
    target = train_q_learning_policy(mdp, spec.episodes, spec.epsilon, spec.alpha,
                                     spec.gamma, seed=_derive_seed(master_seed, _TAG_TRAIN))
    greedy = greedy_policy(target)
    behaviors = [soften_policy(greedy, eps) for eps in cfg.behavior_epsilons]
    return target, behaviors


def generate_cell_data(mdp, behaviors, num_traj: int, horizon: int, data_seed: int):
    """Trajectories split as evenly as possible across the behaviors (the
    first ones take the remainder), plus the flattened labeled dataset."""
    m = len(behaviors)
    shares = [num_traj // m + (1 if j < num_traj % m else 0) for j in range(m)]
    trajectories = []
    for j, (policy, share) in enumerate(zip(behaviors, shares)):
        if share == 0:
            continue
        trajectories.extend(sample_trajectories(
            mdp, policy, share, horizon, seed=_derive_seed(data_seed, j), label=j))
    return trajectories, TransitionDataset.from_trajectories(trajectories)


def run_method(method: str, mdp, target, behaviors, trajectories,
               data: TransitionDataset, kernel: KernelSpec, solver: SolverParams):
    """Dispatch one method; returns (estimate, implied state distribution or
    None for methods without a single pooled state correction)."""
    num_states, num_actions = target.probs.shape
    labels = data.labels
    if labels is None:
        if len(behaviors) > 1:
            raise MissingLabel("multi-behavior data must carry per-record labels")
        labels = np.zeros(len(data), dtype=np.int64)
    if method == "bch":
        estimates, omega = [], None
        for j, behavior in enumerate(behaviors):
            sub = data.subset(labels == j)
            if len(sub) == 0:
                continue
            omega = learn_bch(sub, target, behavior, kernel, solver)
            estimates.append(ratio_reward_estimate(sub, omega, target, behavior))
        dist = omega.implied_distribution() if len(behaviors) == 1 else None
        return float(np.mean(estimates)), dist
    if method == "emp":
        omega = learn_emp(data, target, kernel, solver)
        pi_hat = estimate_policy_mle(data, num_states, num_actions)
        return ratio_reward_estimate(data, omega, target, pi_hat), omega.implied_distribution()
    if method == "bch-pooled":
        omega = learn_bch_pooled(data, target, behaviors, kernel, solver)
        return ratio_reward_estimate(data, omega, target, behaviors), omega.implied_distribution()
    if method == "bch-kl-pooled":
        kl_w = compute_kl_weights(target, behaviors, np.unique(data.s))
        group_w = np.array([data.weights[labels == j].sum() for j in range(len(behaviors))])
        group_w /= group_w.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(group_w > 0, kl_w.weights / group_w, 0.0)
        reweighted = data.with_weights(data.weights * factor[labels])
        omega = learn_bch_pooled(reweighted, target, behaviors, kernel, solver)
        return ratio_reward_estimate(reweighted, omega, target, behaviors), None
    if method == "emp-single":
        return emp_single_estimate(data, target, kernel, solver), None
    if method == "kl-emp":
        return kl_emp_estimate(data, target, kernel, solver), None
    if method == "sadl":
        sa_kernel = kernel if kernel.kind != "state-delta" else KernelSpec.state_action_delta()
        u = learn_sadl(data, target, None, sa_kernel, solver)
        return sadl_reward_estimate(data, u, target), None
    if method == "mis":
        omegas, pi_hats, dists = [], [], []
        counts = np.zeros(len(behaviors))
        for j in range(len(behaviors)):
            sub = data.subset(labels == j)
            counts[j] = len(sub)
            if len(sub) == 0:
                omegas.append(None)
                pi_hats.append(target)
                dists.append(StateDistribution(np.full(num_states, 1.0 / num_states)))
                continue
            omegas.append(learn_emp(sub, target, kernel, solver))
            pi_hats.append(estimate_policy_mle(sub, num_states, num_actions))
            dists.append(empirical_state_distribution(sub, num_states))
        weights = WeightVector(counts / counts.sum())
        heur = balanced_heuristic(weights, dists)
        return mis_reward_estimate(data, omegas, pi_hats, target, heur), None
    if method == "wis":
        return stepwise_wis_estimate(trajectories, target, behaviors), None
    raise UnknownMethod(f"unknown method {method!r}")


# per-process cache so worker processes build the environment and train the
# policies only once
_WORKER_CACHE: dict = {}


def _cell_context(cfg: ExperimentConfig, master_seed: int):
    key = (cfg.environment, cfg.target.episodes, cfg.target.epsilon, cfg.target.alpha,
           cfg.target.gamma, tuple(cfg.behavior_epsilons), master_seed)
    ctx = _WORKER_CACHE.get(key)
    if ctx is None:
        mdp = build_environment(cfg.environment)
        target, behaviors = make_policies(mdp, cfg, master_seed)
        truth = average_reward(mdp, target)
        d_target = stationary_distribution(mdp, target)
        ctx = (mdp, target, behaviors, truth, d_target)
        _WORKER_CACHE.clear()
        _WORKER_CACHE[key] = ctx
    return ctx


def _run_cell(args):
    cfg, master_seed, measure_time, num_traj, horizon, seed = args
    mdp, target, behaviors, truth, d_target = _cell_context(cfg, master_seed)
    data_seed = _derive_seed(master_seed, _TAG_DATA, num_traj, horizon, seed)
    trajectories, data = generate_cell_data(mdp, behaviors, num_traj, horizon, data_seed)
    records = []
    for method in cfg.methods:
        solver = replace(cfg.solver, seed=_derive_seed(
            master_seed, _TAG_SOLVER, num_traj, horizon, seed, METHOD_NAMES.index(method)))
        start = time.perf_counter()
        estimate, dist = run_method(method, mdp, target, behaviors, trajectories,
                                    data, cfg.kernel, solver)
        elapsed = int(round((time.perf_counter() - start) * 1000)) if measure_time else 0
        tv = tv_distance(dist, d_target) if dist is not None else None
        records.append(ResultRecord(cfg.environment, method, num_traj, horizon, seed,
                                    estimate, truth, (estimate - truth) ** 2, tv, elapsed))
    return records


def run_experiment(cfg: ExperimentConfig, master_seed: int = 0, workers: int = 1,
                   measure_time: bool = True) -> list[ResultRecord]:
    """Run the full sweep and return records sorted by
    (environment, method, num_trajectories, horizon, seed).

    Data seeds derive from the sweep values, so permuting the sweep lists
    permutes rows without changing any per-cell value, and all methods in a
    cell see the same dataset.  With ``workers`` > 1 the cells run in
    separate processes; results are identical to the serial run.
    """
    cfg.validate()
    if master_seed < 0:
        raise InvalidConfig("master seed must be nonnegative")
    tasks = [(cfg, master_seed, measure_time, nt, h, k)
             for nt in cfg.num_trajectories for h in cfg.horizons
             for k in range(cfg.seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(task) for task in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda r: (r.environment, r.method, r.num_trajectories,
                                r.horizon, r.seed))
    return records


def summarize_mse(records) -> list[SummaryRow]:
    """Group records by (environment, method, num_trajectories, horizon) and
    report mean squared error, its standard error, and log10."""
    if not records:
        raise ValueError("records must be nonempty")
    groups: dict = {}
    for rec in records:
        key = (rec.environment, rec.method, rec.num_trajectories, rec.horizon)
        groups.setdefault(key, []).append(rec.squared_error)
    rows = []
    for key in sorted(groups):
        errors = np.asarray(groups[key])
        mean = float(errors.mean())
        stderr = float(errors.std(ddof=1) / np.sqrt(len(errors))) if len(errors) > 1 else 0.0
        with np.errstate(divide="ignore"):
            log10 = float(np.log10(mean)) if mean > 0 else float("-inf")
        rows.append(SummaryRow(*key, len(errors), mean, stderr, log10))
    return rows


@dataclass
class TvSummaryRow:
    environment: str
    method: str
    num_trajectories: int
    horizon: int
    num_seeds: int
    tv_mean: float
    tv_stderr: float


def summarize_tv(records) -> list[TvSummaryRow]:
    """Mean total-variation distance per cell group, over records that carry
    one (methods producing a pooled state correction)."""
    groups: dict = {}
    for rec in records:
        if rec.tv_distance is None:
            continue
        key = (rec.environment, rec.method, rec.num_trajectories, rec.horizon)
        groups.setdefault(key, []).append(rec.tv_distance)
    rows = []
    for key in sorted(groups):
        tv = np.asarray(groups[key])
        stderr = float(tv.std(ddof=1) / np.sqrt(len(tv))) if len(tv) > 1 else 0.0
        rows.append(TvSummaryRow(*key, len(tv), float(tv.mean()), stderr))
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_csv(rows, path) -> None:
    """Write dataclass rows as UTF-8 CSV: header first, fields in declaration
    order, reals at 17 significant digits, records sorted by
    (environment, method, num_trajectories, horizon, seed)."""
    rows = list(rows)
    if rows and isinstance(rows[0], ResultRecord):
        rows.sort(key=lambda r: (r.environment, r.method, r.num_trajectories,
                                 r.horizon, r.seed))
    row_type = type(rows[0]) if rows else ResultRecord
    names = [f.name for f in fields(row_type)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, name)) for name in names])


def read_records_csv(path) -> list[ResultRecord]:
    """Parse a records CSV back into ResultRecord rows (round-trip of
    emit_csv)."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(ResultRecord(
                environment=row["environment"],
                method=row["method"],
                num_trajectories=int(row["num_trajectories"]),
                horizon=int(row["horizon"]),
                seed=int(row["seed"]),
                estimate=float(row["estimate"]),
                true_value=float(row["true_value"]),
                squared_error=float(row["squared_error"]),
                tv_distance=float(row["tv_distance"]) if row["tv_distance"] else None,
                wall_time_ms=int(row["wall_time_ms"]),
            ))
    return records
