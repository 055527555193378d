"""Stationary distribution correction learners.

The learners here recover the ratio between the target policy's stationary
state (or state-action) distribution and the one underlying the logged
data.  Each learner is a min-max problem whose inner maximization over a
unit ball of a reproducing-kernel space has a closed form, turning the
whole thing into the minimization of a positive semidefinite quadratic
form over the correction's index set, subject to nonnegativity and a
normalization constraint fixing the correction's scale.

Variants differ only in the action-probability denominator used for the
per-record importance ratio:

* exact behavior policy (policy aware),
* maximum-likelihood estimate of the pooled mixture (estimated mixture),
* exact per-record behavior via labels (policy aware, pooled),
* no denominator at all for the state-action correction, which absorbs the
  behavior policy into the learned quantity (fully policy agnostic).
"""

import numpy as np
import scipy.sparse as sparse
from dataclasses import dataclass

from .mdp import StateDistribution, TabularPolicy, TransitionDataset
from .policies import empirical_state_distribution, estimate_policy_mle

RATIO_FLOOR = 1e-12

KERNEL_KINDS = ("state-delta", "state-action-delta", "gaussian-on-embedding")


class DegenerateReference(RuntimeError):
    """The normalization constraint cannot be satisfied: the reference puts
    zero mass on every index where a positive value is feasible."""


@dataclass(frozen=True)
class KernelSpec:
    """Positive semidefinite kernel choice for the quadratic-form assembly.

    ``state-delta`` and ``state-action-delta`` are Kronecker deltas on the
    respective index sets; they are universal on finite spaces and admit
    grouped O(N) assembly.  ``gaussian-on-embedding`` is
    exp(-||e(x) - e(y)||^2 / (2 h^2)) over a per-state embedding (one-hot by
    default, actions appended one-hot for state-action use); it requires a
    dense Gram matrix and is intended for small problems.
    """

    kind: str = "state-delta"
    bandwidth: float | None = None
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian-on-embedding":
            if self.bandwidth is None or self.bandwidth <= 0:
                raise ValueError("gaussian kernel requires a positive bandwidth")

    @classmethod
    def state_delta(cls) -> "KernelSpec":
        return cls("state-delta")

    @classmethod
    def state_action_delta(cls) -> "KernelSpec":
        return cls("state-action-delta")

    @classmethod
    def gaussian(cls, bandwidth: float, embedding: np.ndarray | None = None) -> "KernelSpec":
        return cls("gaussian-on-embedding", bandwidth, embedding)

    def _embedding_matrix(self, num_states: int) -> np.ndarray:
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=np.float64)
            if emb.shape[0] != num_states:
                raise ValueError("embedding must have one row per state")
            return emb
        return np.eye(num_states)

    def state_gram(self, num_states: int) -> np.ndarray:
        """Dense Gram matrix over states (gaussian kernel only)."""
        emb = self._embedding_matrix(num_states)
        sq = np.sum((emb[:, None, :] - emb[None, :, :]) ** 2, axis=2)
        return np.exp(-sq / (2.0 * self.bandwidth**2))

    def state_action_gram(self, num_states: int, num_actions: int) -> np.ndarray:
        """Dense Gram matrix over (s, a) pairs indexed s * A + a."""
        emb = self._embedding_matrix(num_states)
        pairs = np.hstack([np.repeat(emb, num_actions, axis=0),
                           np.tile(np.eye(num_actions), (num_states, 1))])
        sq = np.sum((pairs[:, None, :] - pairs[None, :, :]) ** 2, axis=2)
        return np.exp(-sq / (2.0 * self.bandwidth**2))


@dataclass
class QuadraticForm:
    """Symmetric PSD form representing an objective x -> scale * x' matrix x.

    The data-average normalization (1 / total-weight-squared) is kept as the
    separate ``scale`` scalar instead of being folded into the entries: with
    unit sample weights the accumulated Gram matrix is integer-valued, so
    exact cancellations (for example a residual that is identically zero on
    on-policy data) survive in floating point.
    """

    matrix: np.ndarray
    dim: int
    scale: float = 1.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (self.dim, self.dim):
            raise ValueError(f"matrix must be ({self.dim}, {self.dim})")

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return self.scale * float(x @ (self.matrix @ x))

    def normalized_matrix(self) -> np.ndarray:
        """The objective's matrix with the scale folded in."""
        return self.scale * self.matrix

    def dump(self, path) -> None:
        """Write the normalized matrix row-major, whitespace-separated."""
        np.savetxt(path, self.normalized_matrix())


@dataclass
class SolverParams:
    """Projected-gradient settings.  ``step`` None means 0.5 / lambda_max(A)
    with lambda_max estimated by power iteration."""

    step: float | None = None
    iters: int = 20000
    seed: int = 0


@dataclass
class CorrectionVector:
    """Learned state ratio omega(s) with the reference distribution that
    fixes its scale via sum_s reference(s) omega(s) = 1."""

    values: np.ndarray
    reference_dist: StateDistribution

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0):
            raise ValueError("correction values must be nonnegative")
        total = float(self.reference_dist.probs @ self.values)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"normalization violated: E_ref[omega] = {total}")

    def implied_distribution(self) -> StateDistribution:
        """The state distribution omega * reference, renormalized."""
        mass = self.values * self.reference_dist.probs
        return StateDistribution(mass / mass.sum())


@dataclass
class StateActionCorrection:
    """Learned state-action ratio u(s, a), normalized so that the empirical
    average of u(s, a) pi(a|s) over the data equals 1."""

    values: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.reference = np.asarray(self.reference, dtype=np.float64)
        if self.values.shape != self.reference.shape or self.values.ndim != 2:
            raise ValueError("values and reference must both be (S, A)")
        if np.any(self.values < 0):
            raise ValueError("correction values must be nonnegative")
        total = float(np.sum(self.reference * self.values))
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"normalization violated: E_ref[u] = {total}")


def importance_ratio(target: TabularPolicy, denom: TabularPolicy, s: int, a: int) -> float:
    """pi(a|s) / denom(a|s), denominator floored at 1e-12."""
    return float(target.probs[s, a] / max(denom.probs[s, a], RATIO_FLOOR))


def _ratio_column(target: TabularPolicy, denom_probs: np.ndarray,
                  s: np.ndarray, a: np.ndarray) -> np.ndarray:
    return target.probs[s, a] / np.maximum(denom_probs, RATIO_FLOOR)


def _state_quadratic(s, next_s, weights, rho, kernel: KernelSpec,
                     num_states: int) -> QuadraticForm:
    # Each record contributes the linear-in-omega residual
    # rho_i omega(s_i) - omega(s'_i), paired through the kernel at the next
    # states.  Rows of C group records by next state, so A = C' K C / W^2
    # never materializes an N x N Gram matrix.
    rows = np.concatenate([next_s, next_s])
    cols = np.concatenate([s, next_s])
    vals = np.concatenate([weights * rho, -weights])
    c = sparse.coo_matrix((vals, (rows, cols)),
                          shape=(num_states, num_states)).tocsr()
    w_total = float(weights.sum())
    if kernel.kind == "state-delta":
        mat = (c.T @ c).toarray()
    elif kernel.kind == "gaussian-on-embedding":
        dense = c.toarray()
        mat = dense.T @ kernel.state_gram(num_states) @ dense
    else:
        raise ValueError(f"kernel kind {kernel.kind!r} is not a state kernel")
    mat = 0.5 * (mat + mat.T)
    return QuadraticForm(mat, num_states, scale=1.0 / w_total**2)


def assemble_state_quadratic(data: TransitionDataset, target: TabularPolicy,
                             denom_policy: TabularPolicy, kernel: KernelSpec,
                             num_states: int) -> QuadraticForm:
    """Quadratic form A with omega' A omega equal to the kernelized squared
    residual of the stationary balance equation under importance weighting:

    (1/W^2) sum_{i,j} w_i w_j (rho_i omega(s_i) - omega(s'_i))
                              (rho_j omega(s_j) - omega(s'_j)) k(s'_i, s'_j)

    where rho_i = pi(a_i|s_i) / denom(a_i|s_i) and W = sum_i w_i.
    """
    if len(data) == 0:
        raise ValueError("dataset must be nonempty")
    rho = _ratio_column(target, denom_policy.probs[data.s, data.a], data.s, data.a)
    return _state_quadratic(data.s, data.sp, data.weights, rho, kernel, num_states)


def assemble_state_action_quadratic(data: TransitionDataset, target: TabularPolicy,
                                    action_weighting, kernel: KernelSpec,
                                    num_states: int, num_actions: int) -> QuadraticForm:
    """Quadratic form over (s, a) pairs (indexed s * A + a) for the
    state-action correction u.

    Record i contributes the linear functional
    u(s_i, a_i) [nu(a_i) f(s_i, a_i) - pi(a_i|s_i) sum_a' nu(a') f(s'_i, a')]
    on test functions f; pairing two records through the kernel expands into
    four kernel terms, with the expectation over a' taken as an explicit sum
    over actions.  ``action_weighting`` nu is any probability vector over
    actions.
    """
    if len(data) == 0:
        raise ValueError("dataset must be nonempty")
    if kernel.kind == "state-delta":
        raise ValueError("state-action assembly needs a state-action kernel")
    nu = np.asarray(action_weighting, dtype=np.float64)
    if nu.shape != (num_actions,) or np.any(nu < 0) or abs(nu.sum() - 1.0) > 1e-9:
        raise ValueError("action_weighting must be a probability vector over actions")
    dim = num_states * num_actions
    pair = data.s * num_actions + data.a
    pi_sa = target.probs[data.s, data.a]
    # row p of M accumulates w_i times record i's functional coefficients
    rows = np.concatenate([pair, np.repeat(pair, num_actions)])
    cols = np.concatenate([pair,
                           (data.sp[:, None] * num_actions
                            + np.arange(num_actions)[None, :]).ravel()])
    vals = np.concatenate([data.weights * nu[data.a],
                           (-(data.weights * pi_sa)[:, None] * nu[None, :]).ravel()])
    m = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    w_total = float(data.weights.sum())
    if kernel.kind == "state-action-delta":
        mat = (m @ m.T).toarray()
    else:
        gram = kernel.state_action_gram(num_states, num_actions)
        dense = m.toarray()
        mat = dense @ gram @ dense.T
    mat = 0.5 * (mat + mat.T)
    return QuadraticForm(mat, dim, scale=1.0 / w_total**2)


def _lambda_max(matrix, dim: int, seed: int, iters: int = 200) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm <= 1e-300:
            return 0.0
        v = w / norm
    return float(v @ (matrix @ v))


def solve_normalized_quadratic(A: QuadraticForm, reference, step: float | None = None,
                               iters: int = 20000, seed: int = 0,
                               trace: list | None = None) -> np.ndarray:
    """Approximately minimize x' A x subject to x >= 0 and reference . x = 1.

    Projected gradient descent from x = 1: gradient step, clip at zero,
    rescale to restore the linear constraint.  The gradient is taken of the
    rescaled objective x -> f(x / reference.x), i.e. 2 A x - 2 f(x) ref at a
    feasible point; the plain gradient's radial component would be undone by
    the rescale and leave spurious fixed points wherever A x is parallel
    to x.  The step starts at 0.5 / lambda_max(A); iterates that would
    increase the objective are rejected and the step halved, accepted steps
    let it grow again (up to 50x the initial step, which speeds up badly
    conditioned problems without weakening the safeguard), so the objective
    is non-increasing across accepted iterates.  Stops after ``iters``
    iterations or when the objective decrease over 100 iterations falls
    below 1e-12.  Pass a list as ``trace`` to record accepted objective
    values.
    """
    reference = np.asarray(reference, dtype=np.float64)
    if np.any(reference < 0):
        raise ValueError("reference must be nonnegative")
    if reference.sum() <= 0:
        raise DegenerateReference("reference has no mass anywhere")
    matrix = A.matrix
    scale = A.scale
    if A.dim >= 512 and np.count_nonzero(matrix) < 0.25 * A.dim**2:
        matrix = sparse.csr_matrix(matrix)  # matvec speed only; same iterates
    x = np.ones(A.dim)
    x /= reference @ x
    if step is None:
        lam = scale * _lambda_max(matrix, A.dim, seed)
        if lam <= 1e-300:
            return x
        step = 0.5 / lam
    elif step <= 0:
        raise ValueError("step must be positive")
    step_cap = 50.0 * step
    y = matrix @ x
    f = scale * float(x @ y)
    if trace is not None:
        trace.append(f)
    f_checkpoint = f
    for it in range(1, iters + 1):
        gradient = (2.0 * scale) * y - (2.0 * f) * reference
        cand = np.maximum(x - step * gradient, 0.0)
        total = reference @ cand
        if total <= 0:
            raise DegenerateReference(
                "all mass of the reference fell on clipped coordinates")
        cand /= total
        y_cand = matrix @ cand
        f_cand = scale * float(cand @ y_cand)
        if f_cand <= f:
            x, y, f = cand, y_cand, f_cand
            step = min(1.1 * step, step_cap)
            if trace is not None:
                trace.append(f)
        else:
            step *= 0.5
        if it % 100 == 0:
            if f_checkpoint - f < 1e-12:
                break
            f_checkpoint = f
    return x


def learn_bch(data: TransitionDataset, target: TabularPolicy,
              exact_behavior: TabularPolicy, kernel: KernelSpec | None = None,
              solver: SolverParams | None = None) -> CorrectionVector:
    """State correction learner with the exact behavior policy in the
    importance-ratio denominator (policy aware)."""
    rho = _ratio_column(target, exact_behavior.probs[data.s, data.a], data.s, data.a)
    return _solve_state_correction(data, rho, target.num_states, kernel, solver)


def learn_emp(data: TransitionDataset, target: TabularPolicy,
              kernel: KernelSpec | None = None,
              solver: SolverParams | None = None) -> CorrectionVector:
    """State correction learner with the denominator policy estimated from
    the data by maximum likelihood.

    Works unchanged for data pooled from several unknown behavior policies:
    the count-frequency estimate converges to the stationary-weighted
    mixture of them, which is exactly the denominator the pooled balance
    equation calls for.
    """
    num_states, num_actions = target.probs.shape
    pi_hat = estimate_policy_mle(data, num_states, num_actions)
    rho = _ratio_column(target, pi_hat.probs[data.s, data.a], data.s, data.a)
    return _solve_state_correction(data, rho, num_states, kernel, solver)


def learn_bch_pooled(data: TransitionDataset, target: TabularPolicy,
                     exact_behaviors, kernel: KernelSpec | None = None,
                     solver: SolverParams | None = None) -> CorrectionVector:
    """State correction learner on pooled labeled data with the exact
    per-record behavior policy in the denominator."""
    labels = data.require_labels()
    if np.any(labels < 0) or np.any(labels >= len(exact_behaviors)):
        raise ValueError("labels must index exact_behaviors")
    stacked = np.stack([b.probs for b in exact_behaviors])
    denom = stacked[labels, data.s, data.a]
    rho = _ratio_column(target, denom, data.s, data.a)
    return _solve_state_correction(data, rho, target.num_states, kernel, solver)


def _solve_state_correction(data, rho, num_states, kernel, solver) -> CorrectionVector:
    if len(data) == 0:
        raise ValueError("dataset must be nonempty")
    kernel = kernel or KernelSpec.state_delta()
    solver = solver or SolverParams()
    qf = _state_quadratic(data.s, data.sp, data.weights, rho, kernel, num_states)
    reference = empirical_state_distribution(data, num_states)
    x = solve_normalized_quadratic(qf, reference.probs, step=solver.step,
                                   iters=solver.iters, seed=solver.seed)
    return CorrectionVector(x, reference)


def learn_sadl(data: TransitionDataset, target: TabularPolicy,
               action_weighting=None, kernel: KernelSpec | None = None,
               solver: SolverParams | None = None) -> StateActionCorrection:
    """State-action correction learner; fully policy agnostic.

    The learned u(s, a) absorbs the behavior policy, so no behavior policy
    (exact or estimated) appears anywhere.  Normalized so the weighted data
    average of u(s_i, a_i) pi(a_i|s_i) equals 1, which makes the matching
    reward estimator self-normalizing.
    """
    if len(data) == 0:
        raise ValueError("dataset must be nonempty")
    num_states, num_actions = target.probs.shape
    if action_weighting is None:
        action_weighting = np.full(num_actions, 1.0 / num_actions)
    kernel = kernel or KernelSpec.state_action_delta()
    solver = solver or SolverParams()
    qf = assemble_state_action_quadratic(data, target, action_weighting, kernel,
                                         num_states, num_actions)
    freq = np.zeros((num_states, num_actions))
    np.add.at(freq, (data.s, data.a), data.weights)
    freq /= freq.sum()
    reference = freq * target.probs
    scale = reference.sum()
    x = solve_normalized_quadratic(qf, reference.ravel() / scale, step=solver.step,
                                   iters=solver.iters, seed=solver.seed)
    return StateActionCorrection((x / scale).reshape(num_states, num_actions), reference)
