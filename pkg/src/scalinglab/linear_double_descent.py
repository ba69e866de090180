"""Linear student-teacher error dynamics under gradient flow.

Training data ``Y = X w + noise`` is fit by gradient flow on
``0.5 ||X theta - Y||^2`` with rate ``eta`` from ``theta = 0``. Everything is
evaluated through the SVD ``X = U diag(s) V^T`` so the matrix exponential
is diagonal. The expected squared test error splits into a decaying signal
term and a growing noise term; substituting ``t -> p t`` gives the unified
error law over scale and time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "PriorSpec",
    "StudentTeacherInstance",
    "SignalNoiseCoeffs",
    "ErrorTriple",
    "ErrorCurve",
    "DEFAULT_SPECTRUM_SEEDS",
    "make_instance",
    "instance_from_arrays",
    "theta_at",
    "prediction_error_at",
    "prediction_error_expansion",
    "signal_noise_coeffs",
    "closed_form_inputs",
    "expected_error_closed_form",
    "expected_error_monte_carlo",
    "unified_error",
    "scan_curve",
    "trajectory_2d",
    "euler_theta",
    "gradient_step",
]

DEFAULT_SPECTRUM_SEEDS = (101, 102, 103, 104, 105)


@dataclass(frozen=True)
class PriorSpec:
    """Teacher and noise scales; ``test_point=None`` averages over isotropic x.

    ``w`` has iid N(0, s_w^2) coordinates and the label noise iid N(0, s_eps^2).
    """

    s_w: float = 1.0
    s_eps: float = 0.0
    test_point: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.s_w) and np.isfinite(self.s_eps)) or self.s_w < 0 or self.s_eps < 0:
            raise DomainError("s_w and s_eps must be finite and nonnegative")
        if self.test_point is not None:
            object.__setattr__(self, "test_point", np.asarray(self.test_point, dtype=float).reshape(-1))

    @property
    def isotropic(self) -> bool:
        return self.test_point is None


@dataclass(frozen=True)
class StudentTeacherInstance:
    X: np.ndarray
    w: np.ndarray
    noise: np.ndarray
    Y: np.ndarray
    eta: float
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def sigma_ext(self) -> np.ndarray:
        """Singular values padded with zeros to length m."""
        out = np.zeros(self.m)
        out[: len(self.sigma)] = self.sigma
        return out

    def inverse_factors(self, t: float) -> np.ndarray:
        """``(1 - exp(-eta s^2 t)) / s`` per mode, 0 where ``s`` is zero."""
        s = self.sigma
        out = np.zeros_like(s)
        nz = s > _rank_cutoff(s, self.X.shape)
        out[nz] = -np.expm1(-self.eta * s[nz] ** 2 * t) / s[nz]
        return out


def _rank_cutoff(sigma: np.ndarray, shape: tuple[int, int]) -> float:
    if sigma.size == 0:
        return 0.0
    return max(shape) * np.finfo(float).eps * float(sigma.max())


def instance_from_arrays(X, w, noise, eta: float) -> StudentTeacherInstance:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w = np.asarray(w, dtype=float).reshape(-1)
    noise = np.asarray(noise, dtype=float).reshape(-1)
    n, m = X.shape
    if w.shape != (m,) or noise.shape != (n,):
        raise DomainError(f"expected w of length {m} and noise of length {n}")
    if not eta > 0:
        raise DomainError("eta must be positive")
    U, sigma, Vt = np.linalg.svd(X, full_matrices=True)
    return StudentTeacherInstance(X, w, noise, X @ w + noise, float(eta), U, sigma, Vt.T)


def make_instance(n: int, m: int, prior: PriorSpec, eta: float, seed: int) -> StudentTeacherInstance:
    """Draw X with iid N(0, 1) entries, w and noise from ``prior``."""
    if n < 1 or m < 1:
        raise DomainError("n and m must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    w = prior.s_w * rng.standard_normal(m)
    noise = prior.s_eps * rng.standard_normal(n)
    return instance_from_arrays(X, w, noise, eta)


def theta_at(inst: StudentTeacherInstance, t: float) -> np.ndarray:
    """Gradient-flow parameters ``X^+ (I - exp(-eta X X^T t)) Y``."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    k = len(inst.sigma)
    coef = inst.inverse_factors(t) * (inst.U[:, :k].T @ inst.Y)
    return inst.V[:, :k] @ coef


def _check_x(inst: StudentTeacherInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (inst.m,):
        raise DomainError(f"test point must have length {inst.m}, got {x.shape[0]}")
    return x


def prediction_error_at(inst: StudentTeacherInstance, x, t: float) -> float:
    """``x^T theta_t - x^T w`` evaluated directly."""
    x = _check_x(inst, x)
    return float(x @ theta_at(inst, t) - x @ inst.w)


@dataclass(frozen=True)
class SignalNoiseCoeffs:
    test_point: np.ndarray
    S: np.ndarray
    N: np.ndarray
    sigma_ext: np.ndarray


def signal_noise_coeffs(inst: StudentTeacherInstance, x) -> SignalNoiseCoeffs:
    """Per-mode coefficients ``S = -(x^T V)(V^T w)`` and ``N = (x^T V)(U^T noise)``."""
    x = _check_x(inst, x)
    xV = x @ inst.V
    S = -xV * (inst.V.T @ inst.w)
    k = len(inst.sigma)
    N = np.zeros(inst.m)
    live = inst.sigma > _rank_cutoff(inst.sigma, inst.X.shape)
    N[:k][live] = xV[:k][live] * (inst.U[:, :k].T @ inst.noise)[live]
    return SignalNoiseCoeffs(x, S, N, inst.sigma_ext)


def prediction_error_expansion(inst: StudentTeacherInstance, x, t: float) -> float:
    """Same error, summed mode by mode from the signal/noise coefficients."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    c = signal_noise_coeffs(inst, x)
    decay = np.exp(-inst.eta * c.sigma_ext**2 * t)
    growth = np.zeros(inst.m)
    growth[: len(inst.sigma)] = inst.inverse_factors(t)
    return float(np.sum(c.S * decay) + np.sum(c.N * growth))


class ErrorTriple(NamedTuple):
    total: np.ndarray | float
    signal_sq: np.ndarray | float
    noise_sq: np.ndarray | float


def closed_form_inputs(inst: StudentTeacherInstance, prior: PriorSpec) -> tuple[np.ndarray, np.ndarray]:
    """(sigma_ext, (x^T V)_i^2) for the instance; ones when x is isotropic."""
    if prior.isotropic:
        return inst.sigma_ext, np.ones(inst.m)
    x = _check_x(inst, prior.test_point)
    return inst.sigma_ext, (x @ inst.V) ** 2


def expected_error_closed_form(sigma_ext, xv_sq, prior: PriorSpec, eta: float, t) -> ErrorTriple:
    """Expected squared test error over (w, noise): signal + noise terms.

    ``t`` may be a scalar or an array; outputs broadcast over it.
    """
    sigma = np.asarray(sigma_ext, dtype=float)
    xv_sq = np.asarray(xv_sq, dtype=float)
    if sigma.shape != xv_sq.shape:
        raise DomainError("sigma_ext and xv_sq must have the same length")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be nonnegative")
    tt = t_arr[..., None]
    rate = eta * sigma**2
    signal = prior.s_w**2 * np.sum(xv_sq * np.exp(-2.0 * rate * tt), axis=-1)
    live = sigma > 0
    safe = np.where(live, sigma, 1.0)
    grow = np.where(live, -np.expm1(-rate * tt) / safe, 0.0)
    noise = prior.s_eps**2 * np.sum(xv_sq * grow**2, axis=-1)
    total = signal + noise
    if t_arr.ndim == 0:
        return ErrorTriple(float(total), float(signal), float(noise))
    return ErrorTriple(total, signal, noise)


def unified_error(sigma_ext, xv_sq, prior: PriorSpec, eta: float, p, t) -> ErrorTriple:
    """Closed-form error with training time ``t`` replaced by ``p t``."""
    if np.any(np.asarray(p) <= 0):
        raise DomainError("p must be positive")
    return expected_error_closed_form(sigma_ext, xv_sq, prior, eta, np.multiply(p, t))


def expected_error_monte_carlo(
    n: int,
    m: int,
    prior: PriorSpec,
    eta: float,
    t: float,
    draws: int,
    seed: int,
    instance: StudentTeacherInstance | None = None,
) -> tuple[float, float]:
    """Sample mean and standard error of ``(x^T theta_t - x^T w)^2``.

    X is fixed (from ``seed`` or ``instance``); w and noise are redrawn for
    every sample, and so is x when the prior is isotropic. Uses the direct
    parameter path, not the mode expansion.
    """
    if draws < 2:
        raise DomainError("need at least two draws")
    inst = instance if instance is not None else make_instance(n, m, prior, eta, seed)
    rng = np.random.default_rng([int(seed), 1])
    W = prior.s_w * rng.standard_normal((draws, inst.m))
    E = prior.s_eps * rng.standard_normal((draws, inst.n))
    Y = W @ inst.X.T + E
    k = len(inst.sigma)
    theta = ((Y @ inst.U[:, :k]) * inst.inverse_factors(t)) @ inst.V[:, :k].T
    if prior.isotropic:
        x = rng.standard_normal((draws, inst.m))
    else:
        x = np.broadcast_to(_check_x(inst, prior.test_point), (draws, inst.m))
    sq = np.sum(x * (theta - W), axis=1) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(draws))


@dataclass
class ErrorCurve:
    """Error sampled along one axis (``"time"``, ``"scale"`` or ``"data"``)."""

    axis: str
    grid: np.ndarray
    total_sq_error: np.ndarray
    signal_sq: np.ndarray
    noise_sq: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        for name in ("total_sq_error", "signal_sq", "noise_sq"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise DomainError(f"{name} does not match the grid")
            setattr(self, name, arr)


def _spectra(n: int, m: int, seeds: Sequence[int]) -> list[np.ndarray]:
    out = []
    for s in seeds:
        X = np.random.default_rng(s).standard_normal((n, m))
        sig = np.zeros(m)
        sv = np.linalg.svd(X, compute_uv=False)
        sig[: len(sv)] = sv
        out.append(sig)
    return out


def _averaged(spectra, prior, eta, times) -> ErrorTriple:
    parts = [expected_error_closed_form(sig, np.ones_like(sig), prior, eta, times) for sig in spectra]
    return ErrorTriple(*(np.mean([np.asarray(p[i]) for p in parts], axis=0) for i in range(3)))


def scan_curve(
    axis: str,
    grid: Sequence[float],
    *,
    prior: PriorSpec,
    eta: float = 1.0,
    n: int | None = None,
    m: int | None = None,
    p: float = 1.0,
    t: float | None = None,
    scale_param: str = "p",
    spectrum: Sequence[float] | None = None,
    xv_sq: Sequence[float] | None = None,
    spectrum_seeds: Sequence[int] = DEFAULT_SPECTRUM_SEEDS,
) -> ErrorCurve:
    """Expected error along time, scale or data volume.

    * ``time``: sweep t at multiplier ``p``.
    * ``scale``: with ``scale_param="p"`` sweep the multiplier p at time t;
      with ``scale_param="m"`` sweep the student dimension m at fixed n and t.
    * ``data``: sweep n at fixed m, p and t.

    The spectrum is ``spectrum`` if given, otherwise that of a fresh
    Gaussian X per grid point, averaged over ``spectrum_seeds``. Sampled
    spectra use the isotropic test-point average.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainError("grid must be nonempty")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be positive and strictly increasing")
    if axis not in ("time", "scale", "data"):
        raise DomainError(f"unknown axis {axis!r}")
    meta = {"axis": axis, "eta": eta, "s_w": prior.s_w, "s_eps": prior.s_eps, "p": p, "t": t,
            "n": n, "m": m, "scale_param": scale_param if axis == "scale" else None,
            "spectrum_seeds": list(spectrum_seeds) if spectrum is None else None,
            "prior_defaults": "w ~ N(0, s_w^2 I), noise ~ N(0, s_eps^2 I), X ~ iid N(0, 1)"}

    if axis == "data" or (axis == "scale" and scale_param == "m"):
        if spectrum is not None:
            raise DomainError("a fixed spectrum cannot follow a dimension sweep")
        if not prior.isotropic:
            raise DomainError("dimension sweeps need the isotropic test-point average")
        if t is None:
            raise DomainError("t is required for dimension sweeps")
        if np.any(grid != np.round(grid)):
            raise DomainError("dimension grid must be integer valued")
        rows = []
        for g in grid.astype(int):
            nn, mm = (g, m) if axis == "data" else (n, g)
            if nn is None or mm is None:
                raise DomainError("the fixed dimension (n or m) is required")
            rows.append(_averaged(_spectra(nn, mm, spectrum_seeds), prior, eta, p * t))
        total, signal, noise = (np.array([r[i] for r in rows]) for i in range(3))
        return ErrorCurve(axis, grid, total, signal, noise, meta)

    if spectrum is not None:
        sig = np.asarray(spectrum, dtype=float)
        weights = np.ones_like(sig) if xv_sq is None else np.asarray(xv_sq, dtype=float)
        spectra = [(sig, weights)]
    else:
        if n is None or m is None:
            raise DomainError("n and m are required without a supplied spectrum")
        spectra = []
        for s, sig in zip(spectrum_seeds, _spectra(n, m, spectrum_seeds)):
            if prior.isotropic:
                spectra.append((sig, np.ones(m)))
            else:
                X = np.random.default_rng(s).standard_normal((n, m))
                inst = instance_from_arrays(X, np.zeros(m), np.zeros(n), eta)
                spectra.append(closed_form_inputs(inst, prior))

    if axis == "time":
        parts = [unified_error(sig, wts, prior, eta, p, grid) for sig, wts in spectra]
    else:
        if scale_param != "p":
            raise DomainError(f"unknown scale parameter {scale_param!r}")
        if t is None:
            raise DomainError("t is required for a scale sweep")
        parts = [unified_error(sig, wts, prior, eta, grid, t) for sig, wts in spectra]
    total, signal, noise = (np.mean([np.asarray(q[i]) for q in parts], axis=0) for i in range(3))
    return ErrorCurve(axis, grid, total, signal, noise, meta)


def trajectory_2d(inst: StudentTeacherInstance, t_grid: Sequence[float]) -> np.ndarray:
    """``theta_t`` for a two-parameter student, one row per grid time."""
    if inst.m != 2:
        raise DomainError("trajectory_2d needs m = 2")
    return np.array([theta_at(inst, t) for t in t_grid])


def gradient_step(X, Y, theta, eta: float) -> np.ndarray:
    """One gradient-descent step on ``0.5 ||X theta - Y||^2``."""
    X = np.asarray(X, dtype=float)
    return theta - eta * (X.T @ (X @ theta - Y))


def euler_theta(inst: StudentTeacherInstance, times: Sequence[float], dt: float) -> np.ndarray:
    """Brute-force Euler integration of the flow, sampled at ``times``.

    Each requested time is hit exactly by shortening the last step.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise DomainError("times must be nonnegative and sorted")
    XtX = inst.X.T @ inst.X
    XtY = inst.X.T @ inst.Y
    theta = np.zeros(inst.m)
    now = 0.0
    out = np.empty((len(times), inst.m))
    for i, target in enumerate(times):
        steps = int(np.floor((target - now) / dt))
        for _ in range(steps):
            theta = theta - dt * inst.eta * (XtX @ theta - XtY)
        now += steps * dt
        rest = target - now
        if rest > 0:
            theta = theta - rest * inst.eta * (XtX @ theta - XtY)
            now = target
        out[i] = theta
    return out
