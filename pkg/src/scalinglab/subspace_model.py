"""Random-subspace gradient-flow model.

A large model with parameters ``beta`` in R^P only matters through the
projection ``alpha = K beta`` (K is r x P). Only a random p-dimensional
affine slice ``beta = R theta + beta0`` is trainable. Gradient flow on
``theta`` drives ``alpha`` along ``-eta K R R^T K^T grad L(alpha)``, which for
large p is close to the p-free reference flow ``A`` run for time ``p t``.

This module integrates both flows, evaluates the deviation bound, checks
the bound by Monte Carlo, and runs the discrete linear tradeoff experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CoverageError, DivergenceError, DomainError
from .scale_time_predictor import MeasuredCurve, TradeoffCurve, tradeoff_from_runs

__all__ = [
    "ThetaInit",
    "SubspaceSpec",
    "EmbeddingMatrix",
    "QuadraticLoss",
    "FlowTrajectory",
    "TrialRecord",
    "ViolationResult",
    "LinearTradeoffConfig",
    "sample_embedding",
    "integrate_controlled_flow",
    "integrate_reference_flow",
    "deviation_curve",
    "theorem1_bound",
    "default_step",
    "bound_violation_rate",
    "noise_matrix_stats",
    "analytic_noise_frobenius",
    "linear_tradeoff_experiment",
]


def _trial_rng(master_seed: int, index: int) -> np.random.Generator:
    # one independent stream per (master_seed, trial), order-independent
    return np.random.default_rng([int(master_seed), int(index)])


@dataclass(frozen=True)
class ThetaInit:
    """Initialisation of the trainable parameters: zero or unit Gaussian."""

    kind: str = "zero"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "gaussian"):
            raise DomainError(f"unknown theta init {self.kind!r}")

    @classmethod
    def zero(cls) -> "ThetaInit":
        return cls("zero")

    @classmethod
    def gaussian(cls, seed: int) -> "ThetaInit":
        return cls("gaussian", int(seed))

    def draw(self, p: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(p)
        return np.random.default_rng(self.seed).standard_normal(p)


@dataclass(frozen=True)
class SubspaceSpec:
    """Configuration (P, r, p, eta, K, beta0, theta_init) of the subspace model."""

    K: np.ndarray
    beta0: np.ndarray
    p: int
    learning_rate: float
    theta_init: ThetaInit = field(default_factory=ThetaInit.zero)

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        beta0 = np.asarray(self.beta0, dtype=float).reshape(-1)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "beta0", beta0)
        if K.shape[1] != beta0.shape[0]:
            raise DomainError(f"K has {K.shape[1]} columns but beta0 has length {beta0.shape[0]}")
        if self.p < 1:
            raise DomainError("controllable dimension p must be positive")
        if not self.learning_rate > 0:
            raise DomainError("learning rate must be positive")
        if np.linalg.svd(K, compute_uv=False).min() <= 1e-12:
            raise DomainError("K must have full row rank")

    @property
    def P(self) -> int:
        return self.K.shape[1]

    @property
    def r(self) -> int:
        return self.K.shape[0]

    def with_p(self, p: int) -> "SubspaceSpec":
        return SubspaceSpec(self.K, self.beta0, p, self.learning_rate, self.theta_init)

    def check_bound_hypotheses(self) -> None:
        if not self.P > self.p > self.r:
            raise DomainError(f"need P > p > r, got P={self.P}, p={self.p}, r={self.r}")
        if self.theta_init.kind != "zero":
            raise DomainError("bound verification requires theta_init = zero")


@dataclass(frozen=True)
class EmbeddingMatrix:
    R: np.ndarray
    seed: int | None = None


@dataclass(frozen=True)
class QuadraticLoss:
    """``L(alpha) = ||alpha - target||^2`` with optional Lipschitz constants.

    ``lipschitz_l`` bounds the gradient norm and ``lipschitz_h`` is the
    Lipschitz constant of the gradient, both over an evaluation region.
    The Hessian is ``2 I`` so ``lipschitz_h`` defaults to 2.
    """

    target: np.ndarray
    lipschitz_l: float | None = None
    lipschitz_h: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).reshape(-1))

    def value(self, alpha: np.ndarray) -> np.ndarray:
        d = np.asarray(alpha) - self.target
        return np.sum(d * d, axis=-1)

    def gradient(self, alpha: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(alpha) - self.target)

    def lipschitz_over_box(self, lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
        """(max gradient norm, gradient Lipschitz constant) over a box."""
        # ||alpha - target|| is convex, so the max sits at a corner; per
        # coordinate the farther endpoint gives it.
        far = np.maximum(np.abs(lo - self.target), np.abs(hi - self.target))
        return 2.0 * float(np.linalg.norm(far)), 2.0


@dataclass(frozen=True)
class FlowTrajectory:
    times: np.ndarray
    states: np.ndarray
    step_size: float

    def __len__(self) -> int:
        return len(self.times)

    def at(self, t) -> np.ndarray:
        """States at time(s) ``t`` by linear interpolation on the grid."""
        t = np.asarray(t, dtype=float)
        cols = [np.interp(t, self.times, self.states[:, j]) for j in range(self.states.shape[1])]
        return np.stack(cols, axis=-1)


def sample_embedding(spec: SubspaceSpec, seed: int) -> EmbeddingMatrix:
    """P x p matrix of iid standard normals, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    return EmbeddingMatrix(rng.standard_normal((spec.P, spec.p)), seed)


def _grid(horizon: float, dt: float) -> tuple[int, float]:
    if not dt > 0:
        raise DomainError("dt must be positive")
    if horizon < 0:
        raise DomainError("horizon must be nonnegative")
    if horizon == 0:
        return 0, dt
    steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    return steps, horizon / steps


def integrate_controlled_flow(
    spec: SubspaceSpec,
    R: EmbeddingMatrix | np.ndarray,
    loss: QuadraticLoss,
    horizon: float,
    dt: float,
) -> FlowTrajectory:
    """Explicit Euler on ``theta' = -eta R^T K^T grad L(alpha)``; returns alpha_t.

    The step is shrunk so the grid lands exactly on ``horizon``.
    """
    R = R.R if isinstance(R, EmbeddingMatrix) else np.asarray(R, dtype=float)
    if R.shape != (spec.P, spec.p):
        raise DomainError(f"embedding must be {spec.P}x{spec.p}, got {R.shape}")
    steps, h = _grid(horizon, dt)
    KR = spec.K @ R
    offset = spec.K @ spec.beta0
    theta = spec.theta_init.draw(spec.p)
    eta = spec.learning_rate

    states = np.empty((steps + 1, spec.r))
    alpha = KR @ theta + offset
    states[0] = alpha
    for k in range(steps):
        theta = theta - h * eta * (KR.T @ loss.gradient(alpha))
        alpha = KR @ theta + offset
        if not np.all(np.isfinite(alpha)):
            raise DivergenceError((k + 1) * h)
        states[k + 1] = alpha
    return FlowTrajectory(np.arange(steps + 1) * h, states, h)


def integrate_reference_flow(
    spec: SubspaceSpec, loss: QuadraticLoss, horizon_s: float, dt: float
) -> FlowTrajectory:
    """Explicit Euler on ``A' = -eta K K^T grad L(A)`` from ``A_0 = K beta0``.

    Does not look at ``spec.p``.
    """
    steps, h = _grid(horizon_s, dt)
    KKt = spec.K @ spec.K.T
    eta = spec.learning_rate
    states = np.empty((steps + 1, spec.r))
    A = spec.K @ spec.beta0
    states[0] = A
    for k in range(steps):
        A = A - h * eta * (KKt @ loss.gradient(A))
        if not np.all(np.isfinite(A)):
            raise DivergenceError((k + 1) * h)
        states[k + 1] = A
    return FlowTrajectory(np.arange(steps + 1) * h, states, h)


def deviation_curve(alpha: FlowTrajectory, reference: FlowTrajectory, p: float) -> np.ndarray:
    """Rows of ``(t, ||alpha_t - A_{p t}||)`` over the alpha grid."""
    need = p * alpha.times[-1]
    if need > reference.times[-1] * (1 + 1e-12):
        raise CoverageError(
            f"reference reaches s={reference.times[-1]:.6g} but p*t needs s={need:.6g}"
        )
    A = reference.at(np.minimum(p * alpha.times, reference.times[-1]))
    dev = np.linalg.norm(alpha.states - A, axis=1)
    return np.column_stack([alpha.times, dev])


def theorem1_bound(K, l: float, h: float, eta: float, p: int, t, failure_prob: float):
    """Upper bound on ``||alpha_t - A_{pt}||`` holding with prob. 1 - failure_prob.

    ``l`` bounds ``||grad L||`` and ``h`` is the Lipschitz constant of
    ``grad L``. ``t`` may be an array.
    """
    if not 0 < failure_prob <= 1:
        raise DomainError("failure probability must lie in (0, 1]")
    if not h > 0:
        raise DomainError("h must be positive")
    if min(l, eta) < 0 or np.any(np.asarray(t) < 0):
        raise DomainError("l, eta and t must be nonnegative")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    KKt = K @ K.T
    op = np.linalg.norm(KKt, 2)
    if np.linalg.svd(KKt, compute_uv=False).min() <= 1e-12 * max(op, 1.0):
        raise DomainError("K K^T is singular")
    frob = math.sqrt(np.linalg.norm(K, "fro") ** 4 + np.linalg.norm(KKt, "fro") ** 2)
    prefactor = l * frob / (h * math.sqrt(p * failure_prob) * op)
    return prefactor * np.expm1(eta * p * np.asarray(t, dtype=float) * h * op)


def default_step(spec: SubspaceSpec, loss: QuadraticLoss, p: int | None = None) -> float:
    """Euler step with ``eta * p * curvature * dt = 0.1``."""
    p = spec.p if p is None else p
    curvature = loss.lipschitz_h * np.linalg.norm(spec.K @ spec.K.T, 2)
    return 0.1 / (spec.learning_rate * p * curvature)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    max_deviation: float
    max_ratio: float
    violated: bool
    error: str | None = None


@dataclass(frozen=True)
class ViolationResult:
    rate: float
    records: list[TrialRecord]
    lipschitz_l: float
    lipschitz_h: float
    box: tuple[np.ndarray, np.ndarray]
    failure_prob: float
    p: int

    @property
    def violations(self) -> int:
        return sum(r.violated for r in self.records)


def _inflated_box(traj: FlowTrajectory, factor: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = traj.states.min(axis=0), traj.states.max(axis=0)
    center, half = (lo + hi) / 2, (hi - lo) / 2
    return center - (1 + factor) * half, center + (1 + factor) * half


def bound_violation_rate(
    spec: SubspaceSpec,
    loss: QuadraticLoss,
    horizon: float,
    dt: float | None,
    trials: int,
    failure_prob: float,
    master_seed: int,
    reference: FlowTrajectory | None = None,
    reference_dt: float | None = None,
) -> ViolationResult:
    """Fraction of random embeddings whose deviation ever exceeds the bound.

    ``l`` and ``h`` come from the reference trajectory's bounding box inflated
    by 50%. A diverged trial is recorded and counted as a violation.
    """
    spec.check_bound_hypotheses()
    if trials < 1:
        raise DomainError("trials must be at least 1")
    dt = default_step(spec, loss) if dt is None else dt
    if reference is None:
        if reference_dt is None:
            reference_dt = spec.p * dt
        reference = integrate_reference_flow(spec, loss, spec.p * horizon, reference_dt)
    lo, hi = _inflated_box(reference)
    l, h = loss.lipschitz_over_box(lo, hi)
    if loss.lipschitz_l is not None:
        l = loss.lipschitz_l

    records = []
    for i in range(trials):
        R = _trial_rng(master_seed, i).standard_normal((spec.P, spec.p))
        try:
            alpha = integrate_controlled_flow(spec, R, loss, horizon, dt)
        except DivergenceError as exc:
            records.append(TrialRecord(i, math.inf, math.inf, True, str(exc)))
            continue
        dev = deviation_curve(alpha, reference, spec.p)
        bound = theorem1_bound(spec.K, l, h, spec.learning_rate, spec.p, dev[:, 0], failure_prob)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, dev[:, 1] / bound, 0.0)
        records.append(
            TrialRecord(i, float(dev[:, 1].max()), float(ratio.max()), bool(np.any(dev[:, 1] > bound)))
        )
    rate = sum(r.violated for r in records) / trials
    return ViolationResult(rate, records, l, h, (lo, hi), failure_prob, spec.p)


def analytic_noise_frobenius(K, p: int) -> float:
    """``p (||K||_F^4 + ||K K^T||_F^2)``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    return p * (np.linalg.norm(K, "fro") ** 4 + np.linalg.norm(K @ K.T, "fro") ** 2)


def noise_matrix_stats(K, p: int, trials: int, seed: int, chunk: int = 4096) -> tuple[float, float]:
    """Empirical mean of ``||K R R^T K^T - p K K^T||_F^2`` and its analytic value."""
    if trials < 1:
        raise DomainError("trials must be at least 1")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    r, P = K.shape
    expected = p * (K @ K.T)
    rng = np.random.default_rng(seed)
    total = 0.0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        R = rng.standard_normal((b, P, p))
        KR = np.einsum("ij,bjk->bik", K, R)
        N = KR @ KR.transpose(0, 2, 1) - expected
        total += float(np.sum(N * N))
        done += b
    return total / trials, analytic_noise_frobenius(K, p)


@dataclass(frozen=True)
class LinearTradeoffConfig:
    """Discrete gradient descent on ``||K (R theta + beta0) - alpha*||^2``.

    ``threshold_mode`` is ``"absolute"`` or ``"relative"`` (fraction of the
    iteration-0 loss). With ``normalize_embedding`` the columns of R are
    rescaled so that ``||R||_F^2 = P p`` exactly, which for r = P = 1 makes
    the rate exactly proportional to p.
    """

    P: int = 1000
    r: int = 3
    learning_rate: float = 1e-6
    p_grid: Sequence[int] = (20, 50, 100, 200)
    thresholds: Sequence[float] = (1000.0, 300.0, 100.0)
    threshold_mode: str = "absolute"
    trials: int = 5
    max_iters: int = 100_000
    master_seed: int = 101
    theta_init: str = "gaussian"
    normalize_embedding: bool = False
    seeds: Sequence[int] | None = None

    def __post_init__(self):
        if self.seeds is not None and len(self.seeds) == 0:
            raise DomainError("seeds must be nonempty when given")
        if self.threshold_mode not in ("absolute", "relative"):
            raise DomainError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.theta_init not in ("zero", "gaussian"):
            raise DomainError(f"unknown theta init {self.theta_init!r}")
        if any(t <= 0 for t in self.thresholds):
            raise DomainError("thresholds must be positive")
        if self.trials < 1 or self.max_iters < 0:
            raise DomainError("trials must be >= 1 and max_iters >= 0")


def _descent_losses(KR, offset, target, theta, eta, stop_at: float, max_iters: int) -> np.ndarray:
    losses = []
    for _ in range(max_iters + 1):
        e = KR @ theta + offset - target
        L = float(e @ e)
        if not math.isfinite(L):
            break
        losses.append(L)
        if L <= stop_at:
            break
        theta = theta - eta * 2.0 * (KR.T @ e)
    return np.asarray(losses)


def linear_tradeoff_experiment(config: LinearTradeoffConfig) -> dict[float, TradeoffCurve]:
    """Iterations-to-loss-threshold versus p, one tradeoff curve per threshold.

    Each trial draws K, beta0, alpha* and a P x max(p) embedding; smaller p
    use the leading columns, so the controllable subspaces are nested. The
    crossing iteration is interpolated linearly between iterates.
    """
    cfg = config
    p_grid = sorted(int(p) for p in cfg.p_grid)
    p_max = p_grid[-1]
    runs: list[MeasuredCurve] = []
    if cfg.seeds is not None:
        streams = [(s, np.random.default_rng(int(s))) for s in cfg.seeds]
    else:
        streams = [(i, _trial_rng(cfg.master_seed, i)) for i in range(cfg.trials)]
    for trial, rng in streams:
        K = rng.standard_normal((cfg.r, cfg.P))
        beta0 = rng.standard_normal(cfg.P)
        target = rng.standard_normal(cfg.r)
        R_full = rng.standard_normal((cfg.P, p_max))
        theta_full = rng.standard_normal(p_max)
        offset = K @ beta0
        for p in p_grid:
            R = R_full[:, :p]
            if cfg.normalize_embedding:
                R = R * math.sqrt(cfg.P * p) / np.linalg.norm(R)
            theta0 = theta_full[:p] if cfg.theta_init == "gaussian" else np.zeros(p)
            KR = K @ R
            e0 = KR @ theta0 + offset - target
            scale = float(e0 @ e0) if cfg.threshold_mode == "relative" else 1.0
            stop = min(cfg.thresholds) * scale
            losses = _descent_losses(KR, offset, target, theta0, cfg.learning_rate, stop, cfg.max_iters)
            runs.append(
                MeasuredCurve(
                    scale=float(p),
                    times=np.arange(len(losses), dtype=float),
                    train_error=losses / scale,
                    test_error=losses / scale,
                    seed=trial,
                )
            )
    return {thr: tradeoff_from_runs(runs, thr, channel="train") for thr in cfg.thresholds}
