"""Experiment runners: config in, CSV/SVG files plus a manifest out."""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from .. import linear_double_descent as ldd
from .. import scale_time_predictor as stp
from .. import subspace_model as sm
from ..errors import ConfigError
from ..nn_lab import (
    TrainConfig,
    build_mlp,
    corrupt_labels,
    load_idx,
    subsample,
    synthetic_split,
    train_sgd,
)
from .config import ExperimentConfig, load_config
from .io import AggregateSeries, aggregate_seeds, emit_csv, emit_svg_plot, read_columns, write_rows

RUNNERS: dict[str, Callable[[ExperimentConfig, Path], list[Path]]] = {}


def runner(name: str):
    def register(fn):
        RUNNERS[name] = fn
        return fn

    return register


def _map(cfg: ExperimentConfig, fn, jobs: list) -> list:
    """Apply ``fn`` to each job; results come back in job order."""
    if cfg.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# --- subspace model ----------------------------------------------------------

def subspace_problem(P: int, r: int, seed: int):
    """K with N(0, 1/P) entries, unit-Gaussian beta0 and target."""
    rng = np.random.default_rng(seed)
    K = rng.standard_normal((r, P)) / math.sqrt(P)
    return K, rng.standard_normal(P), rng.standard_normal(r)


@runner("subspace-verify")
def run_subspace_verify(cfg: ExperimentConfig, out: Path) -> list[Path]:
    P, r, eta = cfg["P"], cfg["r"], cfg["learning_rate"]
    p_grid = sorted(cfg["p_grid"])
    eps, trials = cfg["failure_prob"], cfg["trials"]
    if not 0 < eps <= 1:
        raise ConfigError("must lie in (0, 1]", "failure_prob")
    if trials < 1:
        raise ConfigError("must be at least 1", "trials")

    def job(args):
        seed, p = args
        K, beta0, target = subspace_problem(P, r, seed)
        spec = sm.SubspaceSpec(K, beta0, p, eta)
        loss = sm.QuadraticLoss(target)
        dt = cfg["dt"] or sm.default_step(spec, loss)
        ref_dt = sm.default_step(spec, loss, p=1) / 10
        reference = sm.integrate_reference_flow(spec, loss, p_grid[-1] * cfg["horizon"], ref_dt)
        return sm.bound_violation_rate(spec, loss, cfg["horizon"], dt, trials, eps, seed, reference=reference)

    keys = [(s, p) for s in cfg.seeds for p in p_grid]
    results = dict(zip(keys, _map(cfg, job, keys)))
    limit = eps + 3 * math.sqrt(eps * (1 - eps) / trials)
    summary, per_trial = [], []
    for (seed, p), res in results.items():
        summary.append((seed, p, trials, res.violations, res.rate, limit, res.lipschitz_l, res.lipschitz_h,
                        max(t.max_ratio for t in res.records)))
        per_trial += [(seed, p, t.trial, t.max_deviation, t.max_ratio, t.violated) for t in res.records]
    files = [
        write_rows(out / "violations.csv", ("seed", "p", "trials", "violations", "rate", "limit",
                                            "lipschitz_l", "lipschitz_h", "max_ratio"), summary),
        write_rows(out / "trials.csv", ("seed", "p", "trial", "max_deviation", "max_ratio", "violated"), per_trial),
    ]
    if cfg["frobenius_trials"] > 0:
        rows = []
        for seed in cfg.seeds:
            K = np.random.default_rng([seed, 2]).standard_normal((r, cfg["frobenius_P"]))
            for p in cfg["frobenius_p_grid"]:
                emp, ana = sm.noise_matrix_stats(K, p, cfg["frobenius_trials"], seed)
                rows.append((seed, p, cfg["frobenius_trials"], emp, ana, abs(emp - ana) / ana))
        files.append(write_rows(out / "frobenius.csv",
                                ("seed", "p", "trials", "empirical", "analytic", "rel_error"), rows))
    return files


@runner("linear-tradeoff")
def run_linear_tradeoff(cfg: ExperimentConfig, out: Path) -> list[Path]:
    try:
        tcfg = sm.LinearTradeoffConfig(
            P=cfg["P"], r=cfg["r"], learning_rate=cfg["learning_rate"], p_grid=cfg["p_grid"],
            thresholds=cfg["thresholds"], threshold_mode=cfg["threshold_mode"], max_iters=cfg["max_iters"],
            theta_init=cfg["theta_init"], normalize_embedding=cfg["normalize_embedding"], seeds=cfg.seeds,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "linear-tradeoff") from None
    curves = sm.linear_tradeoff_experiment(tcfg)
    files, slopes, series = [], [], []
    for i, (thr, curve) in enumerate(curves.items()):
        files.append(emit_csv(curve, out / f"tradeoff_{i}.csv"))
        try:
            fit = stp.loglog_slope(curve)
            slopes.append((i, thr, fit.slope, fit.intercept, fit.r_squared, fit.n_points))
        except ValueError:
            slopes.append((i, thr, math.nan, math.nan, math.nan, 0))
        x, y = curve.uncensored()
        se = curve.std_err[~curve.censored] if curve.std_err is not None else np.zeros(len(x))
        series.append(AggregateSeries(x, y, se, f"loss <= {thr:g}"))
    files.append(write_rows(out / "slopes.csv",
                            ("index", "threshold", "slope", "intercept", "r_squared", "n_points"), slopes))
    if cfg.plots:
        files.append(_plot(series, out / "tradeoff.svg", log_x=True, log_y=True, guide=True,
                           xlabel="controllable dimension p", ylabel="iterations to threshold"))
    return files


def _plot(series, path, **axes) -> Path:
    usable = [s for s in series if len(s)]
    return emit_svg_plot(usable, axes, path) if usable else None


# --- linear double descent ----------------------------------------------------

def _grid(cfg: ExperimentConfig) -> np.ndarray:
    lo, hi, k = cfg["grid_min"], cfg["grid_max"], cfg["grid_points"]
    if not 0 < lo < hi or k < 2:
        raise ConfigError("need 0 < grid_min < grid_max and grid_points >= 2", "grid_min")
    grid = np.geomspace(lo, hi, k) if cfg["grid_log"] else np.linspace(lo, hi, k)
    if cfg["axis"] == "data" or (cfg["axis"] == "scale" and cfg["scale_param"] == "m"):
        grid = np.unique(np.round(grid))
    return grid


@runner("ddcurve")
def run_ddcurve(cfg: ExperimentConfig, out: Path) -> list[Path]:
    prior = ldd.PriorSpec(cfg["s_w"], cfg["s_eps"])
    axis = cfg["axis"]
    curve = ldd.scan_curve(
        axis, _grid(cfg), prior=prior, eta=cfg["eta"], n=cfg["n"], m=cfg["m"], p=cfg["p"],
        t=cfg["t"], scale_param=cfg["scale_param"], spectrum_seeds=cfg.seeds,
    )
    files = [emit_csv(curve, out / "curve.csv")]
    if cfg.plots:
        zeros = np.zeros(len(curve.grid))
        parts = [AggregateSeries(curve.grid, v, zeros, lbl) for v, lbl in
                 ((curve.total_sq_error, "total"), (curve.signal_sq, "signal"), (curve.noise_sq, "noise"))]
        positive = [s for s in parts if np.all(s.mean > 0)]
        log_x = cfg["grid_log"]
        files.append(_plot(positive or parts, out / "curve.svg", log_x=log_x, log_y=bool(positive),
                           xlabel=axis, ylabel="expected squared error"))
    return files


# --- prediction ---------------------------------------------------------------

def _analytic_inputs(cfg: ExperimentConfig):
    prior = ldd.PriorSpec(cfg["s_w"], cfg["s_eps"])
    inst = ldd.make_instance(cfg["n"], cfg["m"], prior, cfg["eta"], cfg.seeds[0])
    sigma, xv = ldd.closed_form_inputs(inst, prior)
    return prior, sigma, xv


@runner("predict")
def run_predict(cfg: ExperimentConfig, out: Path) -> list[Path]:
    factors = cfg["scale_factors"]
    if cfg["source"] == "csv":
        path = cfg["curve_path"]
        if not path:
            raise ConfigError("required when source = csv", "curve_path")
        try:
            cols = read_columns(path)
        except OSError as exc:
            raise ConfigError(f"cannot read curve: {exc}", "curve_path") from None
        curve = stp.MeasuredCurve(cfg["p0"], cols["time"], cols["train_error"], cols["test_error"])
        rows = []
        for f in factors:
            targets = [(cfg["p0"] * f, t / f) for t in curve.times if t > 0]
            for pred in stp.predict_across_scale(curve, targets):
                rows.append((pred.scale, pred.time, pred.source_time, pred.train, pred.test))
        return [write_rows(out / "across_scale.csv",
                           ("scale", "time", "source_time", "predicted_train", "predicted_test"), rows)]

    prior, sigma, xv = _analytic_inputs(cfg)
    eta, p0 = cfg["eta"], cfg["p0"]
    times = np.geomspace(cfg["t_min"], cfg["t_max"], cfg["points"])
    base = ldd.unified_error(sigma, xv, prior, eta, p0, times)
    curve = stp.MeasuredCurve(p0, times, base.total, base.total)
    ratio = times[1] / times[0]

    scale_rows, series = [], []
    for f in factors:
        # scales on the same log lattice as the time grid: the remap lands on samples
        steps = round(math.log(f) / math.log(ratio))
        factor = ratio**steps
        targets = [(p0 * factor, t) for t in times[: len(times) - steps]]
        preds = stp.predict_across_scale(curve, targets)
        truth = ldd.unified_error(sigma, xv, prior, eta, p0 * factor, np.array([t for _, t in targets])).total
        for pr, tr in zip(preds, truth):
            scale_rows.append((pr.scale, pr.time, pr.source_time, pr.test, tr, abs(pr.test - tr)))
        series.append(AggregateSeries(np.array([t for _, t in targets]), truth, np.zeros(len(truth)),
                                      f"scale x{factor:.3g}"))

    t0 = cfg["t0"]
    scale_grid = p0 * np.geomspace(1.0, ratio ** (cfg["scale_grid_points"] - 1), cfg["scale_grid_points"])
    truncated = [stp.MeasuredCurve(s, [t0], *[ldd.unified_error(sigma, xv, prior, eta, s, np.array([t0])).total] * 2)
                 for s in scale_grid]
    t_grid = t0 * scale_grid / p0
    time_rows = []
    preds = stp.predict_across_time(truncated, t0, p0, t_grid)
    truth = ldd.unified_error(sigma, xv, prior, eta, p0, t_grid).total
    for pr, tr in zip(preds, truth):
        time_rows.append((pr.time, pr.test, tr, abs(pr.test - tr)))
    files = [
        write_rows(out / "across_scale.csv",
                   ("scale", "time", "source_time", "predicted", "actual", "abs_error"), scale_rows),
        write_rows(out / "across_time.csv", ("time", "predicted", "actual", "abs_error"), time_rows),
    ]
    if cfg.plots:
        files.append(_plot(series, out / "across_scale.svg", log_x=True, log_y=True,
                           xlabel="time", ylabel="expected squared error"))
    return files


# --- neural networks ------------------------------------------------------------

def _datasets(cfg: ExperimentConfig, seed: int, n_train: int):
    paths = [cfg[k] for k in ("train_images", "train_labels", "test_images", "test_labels")]
    if any(paths):
        if not all(paths):
            raise ConfigError("all four IDX paths must be given together", "train_images")
        train = load_idx(paths[0], paths[1])
        test = load_idx(paths[2], paths[3])
        if n_train < len(train):
            train = subsample(train, n_train, seed)
        return train, test
    return synthetic_split(cfg["k"], cfg["d"], n_train, cfg["n_test"], cfg["spread"], seed)


def _train(cfg: ExperimentConfig, seed: int, s: int, train, test, epochs: int):
    model = build_mlp(train.dim, s, train.n_classes, seed)
    tc = TrainConfig(epochs=epochs, batch_size=cfg["batch_size"], learning_rate=cfg["learning_rate"], seed=seed)
    return model, train_sgd(model, train, test, tc)


def _effective(model) -> float:
    return stp.effective_params(model.param_count)


@runner("nn-tradeoff")
def run_nn_tradeoff(cfg: ExperimentConfig, out: Path) -> list[Path]:
    widths = sorted(cfg["widths"])

    def job(key):
        seed, s = key
        train, test = _datasets(cfg, seed, cfg["n_train"])
        model, trace = _train(cfg, seed, s, train, test, cfg["epochs"])
        return _effective(model), trace

    keys = [(seed, s) for seed in cfg.seeds for s in widths]
    results = dict(zip(keys, _map(cfg, job, keys)))
    trace_rows, per_seed, runs = [], [], []
    for (seed, s), (scale, tr) in results.items():
        for e, a, b in zip(tr.epochs_logged, tr.train_mse, tr.test_mse):
            trace_rows.append((seed, s, scale, e, a, b))
        curve = stp.MeasuredCurve(scale, tr.epochs_logged, tr.train_mse, tr.test_mse, seed=seed)
        runs.append(curve)
        t = stp.min_time_to_threshold(curve, cfg["threshold"], "test")
        per_seed.append((seed, s, scale, t, math.isnan(t)))
    tradeoff = stp.tradeoff_from_runs(runs, cfg["threshold"], "test")
    signs = []
    for seed in cfg.seeds:
        ts = [row[3] for row in per_seed if row[0] == seed]
        ok = all(not math.isnan(v) for v in ts) and all(a > b for a, b in zip(ts, ts[1:]))
        signs.append((seed, ok))
    files = [
        write_rows(out / "traces.csv", ("seed", "width_scale", "effective_scale", "epoch", "train_mse", "test_mse"),
                   trace_rows),
        write_rows(out / "min_epochs.csv", ("seed", "width_scale", "effective_scale", "min_epochs", "censored"),
                   per_seed),
        emit_csv(tradeoff, out / "tradeoff.csv"),
        write_rows(out / "sign_test.csv", ("seed", "strictly_decreasing"), signs),
    ]
    if cfg.plots:
        x, y = tradeoff.uncensored()
        se = tradeoff.std_err[~tradeoff.censored] if tradeoff.std_err is not None else np.zeros(len(x))
        files.append(_plot([AggregateSeries(x, y, se, f"test MSE <= {cfg['threshold']:g}")], out / "tradeoff.svg",
                           log_x=True, log_y=True, guide=True, xlabel="effective parameters",
                           ylabel="epochs to threshold"))
    return files


@runner("nn-data-scan")
def run_nn_data_scan(cfg: ExperimentConfig, out: Path) -> list[Path]:
    widths, sizes = sorted(cfg["widths"]), sorted(cfg["data_sizes"])

    def job(key):
        seed, s, n = key
        train, test = _datasets(cfg, seed, max(sizes))
        if n < len(train):
            train = subsample(train, n, seed)
        _, tr = _train(cfg, seed, s, train, test, cfg["epochs"])
        return tr.train_mse[-1], tr.test_mse[-1]

    keys = [(seed, s, n) for seed in cfg.seeds for s in widths for n in sizes]
    results = dict(zip(keys, _map(cfg, job, keys)))
    final = [(seed, s, n, a, b) for (seed, s, n), (a, b) in results.items()]
    smallest = []
    for seed in cfg.seeds:
        for s in widths:
            hit = [n for n in sizes if results[(seed, s, n)][1] < cfg["threshold"]]
            smallest.append((seed, s, hit[0] if hit else math.nan, not hit))
    agg_rows, series = [], []
    for s in widths:
        test_series = aggregate_seeds([(sizes, [results[(seed, s, n)][1] for n in sizes]) for seed in cfg.seeds],
                                      f"s={s}")
        train_series = aggregate_seeds([(sizes, [results[(seed, s, n)][0] for n in sizes]) for seed in cfg.seeds])
        for i, n in enumerate(sizes):
            agg_rows.append((s, n, test_series.mean[i], test_series.std_err[i],
                             train_series.mean[i], train_series.std_err[i]))
        series.append(test_series)
    files = [
        write_rows(out / "final.csv", ("seed", "width_scale", "n_train", "final_train_mse", "final_test_mse"), final),
        write_rows(out / "aggregate.csv", ("width_scale", "n_train", "mean_test_mse", "se_test_mse",
                                           "mean_train_mse", "se_train_mse"), agg_rows),
        write_rows(out / "smallest_data.csv", ("seed", "width_scale", "smallest_n", "censored"), smallest),
    ]
    if cfg.plots:
        files.append(_plot(series, out / "test_vs_data.svg", log_x=True, xlabel="training samples",
                           ylabel="test MSE"))
    return files


@runner("nn-noise-scan")
def run_nn_noise_scan(cfg: ExperimentConfig, out: Path) -> list[Path]:
    widths, levels = sorted(cfg["widths"]), sorted(cfg["noise_levels"])
    if any(not 0 <= f <= 1 for f in levels):
        raise ConfigError("noise fractions must lie in [0, 1]", "noise_levels")

    def job(key):
        seed, s, f = key
        train, test = _datasets(cfg, seed, cfg["n_train"])
        train = corrupt_labels(train, f, seed)
        _, tr = _train(cfg, seed, s, train, test, cfg["epochs"])
        return tr

    keys = [(seed, s, f) for seed in cfg.seeds for s in widths for f in levels]
    results = dict(zip(keys, _map(cfg, job, keys)))
    curve_rows, final_rows, series = [], [], []
    for s in widths:
        for f in levels:
            traces = [results[(seed, s, f)] for seed in cfg.seeds]
            test = aggregate_seeds([(t.epochs_logged, t.test_mse) for t in traces], f"s={s} noise={f:g}")
            train = aggregate_seeds([(t.epochs_logged, t.train_mse) for t in traces])
            for i, e in enumerate(test.x):
                curve_rows.append((s, f, int(e), test.mean[i], test.std_err[i], train.mean[i], train.std_err[i]))
            final_rows.append((s, f, test.mean[-1], test.std_err[-1], train.mean[-1], train.std_err[-1]))
            series.append(test)
    files = [
        write_rows(out / "curves.csv", ("width_scale", "noise", "epoch", "mean_test_mse", "se_test_mse",
                                        "mean_train_mse", "se_train_mse"), curve_rows),
        write_rows(out / "final.csv", ("width_scale", "noise", "mean_test_mse", "se_test_mse",
                                       "mean_train_mse", "se_train_mse"), final_rows),
    ]
    if cfg.plots:
        files.append(_plot([AggregateSeries(s.x[1:], s.mean[1:], s.std_err[1:], s.label) for s in series],
                           out / "test_vs_epoch.svg", log_x=True, xlabel="epoch", ylabel="test MSE"))
    return files


# --- orchestration ----------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def execute(cfg: ExperimentConfig) -> list[Path]:
    """Run ``cfg`` and write its outputs plus ``manifest.ini`` / ``manifest.json``."""
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory is not writable ({exc})", "output_dir") from None
    files = [f for f in RUNNERS[cfg.experiment](cfg, out) if f is not None]
    ini = out / "manifest.ini"
    ini.write_text(f"# scalinglab {__version__}\n" + cfg.to_ini())
    manifest = {
        "experiment": cfg.experiment,
        "version": __version__,
        "seeds": list(cfg.seeds),
        "parameters": cfg.raw,
        "output_dir": out.as_posix(),
        "files": {f.name: _sha256(f) for f in files if f.suffix == ".csv"},
        "rerun": f"scalinglab run --config {(out / 'manifest.ini').as_posix()}",
    }
    js = out / "manifest.json"
    js.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return files + [ini, js]


def run_experiment(config_path: str | os.PathLike, **overrides) -> list[Path]:
    """Load a config file and run it; see :func:`load_config` for overrides."""
    return execute(load_config(config_path, **overrides))
