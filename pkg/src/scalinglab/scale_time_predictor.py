"""Cross-scale and cross-time performance prediction.

Learned state depends (approximately) on the product of effective parameter
count and training time, so the error of a model at ``(p1, t1)`` is read off
a measured curve at ``(p0, (p1 / p0) t1)``. This module also extracts
time-to-threshold tradeoff curves and fits their log-log slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, PredictionRangeError

__all__ = [
    "MeasuredCurve",
    "TradeoffCurve",
    "SlopeFit",
    "Prediction",
    "DEFAULT_THRESHOLD",
    "effective_params",
    "mlp_param_count",
    "predict_across_scale",
    "predict_across_time",
    "min_time_to_threshold",
    "tradeoff_from_runs",
    "loglog_slope",
]

# test MSE of the constant label-mean predictor on 10 one-hot classes
DEFAULT_THRESHOLD = 0.09


@dataclass(frozen=True)
class MeasuredCurve:
    """Train/test error of one model scale sampled along training time."""

    scale: float
    times: np.ndarray
    train_error: np.ndarray
    test_error: np.ndarray
    n_seeds: int = 1
    std_err: tuple[np.ndarray, np.ndarray] | None = None
    seed: int | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        train = np.asarray(self.train_error, dtype=float)
        test = np.asarray(self.test_error, dtype=float)
        if not (len(times) == len(train) == len(test)):
            raise DomainError("times, train_error and test_error must have equal length")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise DomainError("times must be strictly increasing")
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "train_error", train)
        object.__setattr__(self, "test_error", test)

    def channel(self, name: str) -> np.ndarray:
        if name == "train":
            return self.train_error
        if name == "test":
            return self.test_error
        raise DomainError(f"unknown channel {name!r}")

    def truncated(self, t_max: float) -> "MeasuredCurve":
        keep = self.times <= t_max
        return replace(
            self,
            times=self.times[keep],
            train_error=self.train_error[keep],
            test_error=self.test_error[keep],
            std_err=None if self.std_err is None else tuple(s[keep] for s in self.std_err),
        )


@dataclass(frozen=True)
class TradeoffCurve:
    """Minimum time-to-threshold per scale; NaN entries with ``censored`` set."""

    scales: np.ndarray
    min_times: np.ndarray
    threshold: float
    censored: np.ndarray
    std_err: np.ndarray | None = None
    n_runs: np.ndarray | None = None

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=float)
        if len(scales) > 1 and np.any(np.diff(scales) <= 0):
            raise DomainError("scales must be strictly increasing")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "min_times", np.asarray(self.min_times, dtype=float))
        object.__setattr__(self, "censored", np.asarray(self.censored, dtype=bool))

    def uncensored(self) -> tuple[np.ndarray, np.ndarray]:
        keep = ~self.censored
        return self.scales[keep], self.min_times[keep]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def effective_params(absolute_count: int) -> float:
    """Cube root of the absolute parameter count."""
    if absolute_count < 1:
        raise DomainError("parameter count must be at least 1")
    return float(np.cbrt(float(absolute_count)))


def mlp_param_count(in_dim: int, width: int, depth: int, out_dim: int) -> int:
    """Weights plus biases of a ``depth``-layer fully connected net."""
    if min(in_dim, width, out_dim) < 1 or depth < 2:
        raise DomainError("dimensions must be >= 1 and depth >= 2")
    return (in_dim * width + width) + (depth - 2) * (width * width + width) + (width * out_dim + out_dim)


def _interp_logtime(times: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    if np.any(times <= 0) or np.any(query <= 0):
        raise DomainError("log-time interpolation needs positive times")
    return np.interp(np.log(query), np.log(times), values)


@dataclass(frozen=True)
class Prediction:
    scale: float
    time: float
    source_time: float
    train: float
    test: float
    clamped: bool = False


def predict_across_scale(
    curve: MeasuredCurve,
    targets: Iterable[tuple[float, float]],
    clamp: bool = False,
) -> list[Prediction]:
    """Error at each ``(p1, t1)`` read from ``curve`` at time ``(p1/p0) t1``.

    Interpolates linearly in (log time, error). Out-of-range remapped times
    raise unless ``clamp`` is set, in which case they are clamped to the
    measured range and flagged.
    """
    lo, hi = curve.times[0], curve.times[-1]
    out = []
    for p1, t1 in targets:
        if not p1 > 0:
            raise DomainError("target scale must be positive")
        tau = (p1 / curve.scale) * t1
        clamped = False
        # absorb rounding in the product right at the ends of the grid
        if np.isclose(tau, lo, rtol=1e-12, atol=0):
            tau = max(tau, lo)
        elif np.isclose(tau, hi, rtol=1e-12, atol=0):
            tau = min(tau, hi)
        if not lo <= tau <= hi:
            if not clamp:
                raise PredictionRangeError(
                    f"remapped time {tau:.6g} outside measured [{lo:.6g}, {hi:.6g}]", tau
                )
            tau, clamped = min(max(tau, lo), hi), True
        exact = np.flatnonzero(curve.times == tau)
        if exact.size:
            i = exact[0]
            train, test = curve.train_error[i], curve.test_error[i]
        else:
            q = np.array([tau])
            train = _interp_logtime(curve.times, curve.train_error, q)[0]
            test = _interp_logtime(curve.times, curve.test_error, q)[0]
        out.append(Prediction(float(p1), float(t1), float(tau), float(train), float(test), clamped))
    return out


def predict_across_time(
    curves: Sequence[MeasuredCurve],
    t0: float,
    target_scale: float,
    t_grid: Sequence[float],
) -> list[Prediction]:
    """Error of a ``target_scale`` model over ``t_grid`` from curves stopped at ``t0``.

    For each ``t`` the matching scale is ``p0 = target_scale * t / t0``; the
    error at ``t0`` is interpolated in (log scale, error) between adjacent
    measured scales.
    """
    by_scale = sorted(curves, key=lambda c: c.scale)
    scales = np.array([c.scale for c in by_scale])
    if len(np.unique(scales)) != len(scales):
        raise DomainError("one curve per scale expected")
    at_t0 = []
    for c in by_scale:
        hit = np.flatnonzero(np.isclose(c.times, t0, rtol=1e-12, atol=0))
        if hit.size == 0:
            raise PredictionRangeError(f"curve at scale {c.scale:g} has no sample at t0={t0:g}", t0)
        at_t0.append((c.train_error[hit[0]], c.test_error[hit[0]]))
    train0, test0 = (np.array(v) for v in zip(*at_t0))

    out = []
    for t in t_grid:
        p0 = target_scale * t / t0
        if not scales[0] * (1 - 1e-12) <= p0 <= scales[-1] * (1 + 1e-12):
            raise PredictionRangeError(
                f"t={t:g} needs scale {p0:.6g} outside measured [{scales[0]:.6g}, {scales[-1]:.6g}]", p0
            )
        exact = np.flatnonzero(np.isclose(scales, p0, rtol=1e-12, atol=0))
        if exact.size:
            train, test = train0[exact[0]], test0[exact[0]]
        else:
            q = np.log([p0])
            train = np.interp(q, np.log(scales), train0)[0]
            test = np.interp(q, np.log(scales), test0)[0]
        out.append(Prediction(float(target_scale), float(t), float(t0), float(train), float(test)))
    return out


def min_time_to_threshold(curve: MeasuredCurve, threshold: float, channel: str = "test") -> float:
    """First time the channel drops to ``threshold`` or below; NaN if never.

    Between samples the crossing is located by linear interpolation in
    (time, error). Later re-crossings of a non-monotone curve are ignored.
    """
    if not threshold > 0:
        raise DomainError("threshold must be positive")
    err = curve.channel(channel)
    below = np.flatnonzero(err <= threshold)
    if below.size == 0:
        return math.nan
    i = below[0]
    if i == 0:
        return float(curve.times[0])
    t0, t1 = curve.times[i - 1], curve.times[i]
    e0, e1 = err[i - 1], err[i]
    return float(t0 + (e0 - threshold) / (e0 - e1) * (t1 - t0))


def tradeoff_from_runs(
    runs: Sequence[MeasuredCurve], threshold: float, channel: str = "test"
) -> TradeoffCurve:
    """Mean (and standard error over seeds) of time-to-threshold per scale.

    Censored runs are dropped from the mean; a scale with every run
    censored is marked censored.
    """
    groups: dict[float, list[float]] = {}
    for run in runs:
        groups.setdefault(run.scale, []).append(min_time_to_threshold(run, threshold, channel))
    if len(groups) < 2:
        raise DomainError("need runs at two or more distinct scales")
    scales = sorted(groups)
    means, errs, censored, counts = [], [], [], []
    multi = any(len(v) > 1 for v in groups.values())
    for s in scales:
        vals = np.array([v for v in groups[s] if not math.isnan(v)])
        counts.append(len(vals))
        censored.append(len(vals) == 0)
        means.append(vals.mean() if len(vals) else math.nan)
        errs.append(vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0)
    return TradeoffCurve(
        scales=np.array(scales),
        min_times=np.array(means),
        threshold=float(threshold),
        censored=np.array(censored),
        std_err=np.array(errs) if multi else None,
        n_runs=np.array(counts),
    )


def loglog_slope(curve: TradeoffCurve) -> SlopeFit:
    """Least-squares line through (log10 scale, log10 min_time)."""
    x, y = curve.uncensored()
    if len(x) < 2:
        raise DomainError("need at least two uncensored points")
    lx, ly = np.log10(x), np.log10(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return SlopeFit(float(slope), float(intercept), r2, len(x))
