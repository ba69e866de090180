"""Experiment configuration: a ``key = value`` file with one section per experiment.

Example::

    [experiment]
    name = linear-tradeoff
    seeds = 101, 102, 103, 104, 105
    output_dir = results/linear

    [linear-tradeoff]
    p_grid = 20, 50, 100, 200
    thresholds = 1000, 300, 100
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from ..errors import ConfigError

DEFAULT_SEEDS = (101, 102, 103, 104, 105)
OUT_ENV = "SCALINGLAB_OUT"


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        items = [t.strip() for t in text.replace(";", ",").split(",") if t.strip()]
        return tuple(conv(t) for t in items)

    parse.__name__ = f"list[{conv.__name__}]"
    return parse


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    parse.__name__ = "|".join(options)
    return parse


def _opt_path(text: str) -> str:
    return text.strip()


ints, floats = _list(int), _list(float)

# default values are stored as text so the manifest echoes exactly what was parsed
SCHEMAS: dict[str, dict[str, tuple[Callable[[str], Any], str]]] = {
    "subspace-verify": {
        "P": (int, "200"),
        "r": (int, "3"),
        "p_grid": (ints, "10, 20, 40"),
        "learning_rate": (float, "1.0"),
        "horizon": (float, "0.1"),
        "dt": (float, "0"),
        "failure_prob": (float, "0.1"),
        "trials": (int, "200"),
        "frobenius_P": (int, "10"),
        "frobenius_p_grid": (ints, "2, 8, 32"),
        "frobenius_trials": (int, "100000"),
    },
    "linear-tradeoff": {
        "P": (int, "1000"),
        "r": (int, "3"),
        "learning_rate": (float, "1e-6"),
        "p_grid": (ints, "20, 50, 100, 200"),
        "thresholds": (floats, "1000, 300, 100"),
        "threshold_mode": (_choice("absolute", "relative"), "absolute"),
        "max_iters": (int, "100000"),
        "theta_init": (_choice("gaussian", "zero"), "gaussian"),
        "normalize_embedding": (_bool, "false"),
    },
    "ddcurve": {
        "axis": (_choice("time", "scale", "data"), "time"),
        "scale_param": (_choice("p", "m"), "p"),
        "grid_min": (float, "0.01"),
        "grid_max": (float, "1000"),
        "grid_points": (int, "200"),
        "grid_log": (_bool, "true"),
        "n": (int, "50"),
        "m": (int, "50"),
        "s_w": (float, "1.0"),
        "s_eps": (float, "0.5"),
        "eta": (float, "1.0"),
        "p": (float, "1.0"),
        "t": (float, "1.0"),
    },
    "predict": {
        "source": (_choice("analytic", "csv"), "analytic"),
        "curve_path": (_opt_path, ""),
        "n": (int, "40"),
        "m": (int, "40"),
        "s_w": (float, "1.0"),
        "s_eps": (float, "0.5"),
        "eta": (float, "1.0"),
        "p0": (float, "1.0"),
        "t_min": (float, "0.001"),
        "t_max": (float, "1000"),
        "points": (int, "512"),
        "scale_factors": (ints, "2, 4, 8"),
        "t0": (float, "1.0"),
        "scale_grid_points": (int, "512"),
    },
    "nn-tradeoff": {
        "widths": (ints, "1, 2, 5"),
        "k": (int, "10"),
        "d": (int, "64"),
        "n_train": (int, "2000"),
        "n_test": (int, "1000"),
        "spread": (float, "0.1"),
        "epochs": (int, "100"),
        "learning_rate": (float, "0.01"),
        "batch_size": (int, "32"),
        "threshold": (float, "0.09"),
        "train_images": (_opt_path, ""),
        "train_labels": (_opt_path, ""),
        "test_images": (_opt_path, ""),
        "test_labels": (_opt_path, ""),
    },
    "nn-data-scan": {
        "widths": (ints, "1, 5"),
        "data_sizes": (ints, "100, 200, 500, 1000, 2000"),
        "k": (int, "10"),
        "d": (int, "64"),
        "n_test": (int, "1000"),
        "spread": (float, "0.1"),
        "epochs": (int, "20"),
        "learning_rate": (float, "0.01"),
        "batch_size": (int, "32"),
        "threshold": (float, "0.09"),
        "train_images": (_opt_path, ""),
        "train_labels": (_opt_path, ""),
        "test_images": (_opt_path, ""),
        "test_labels": (_opt_path, ""),
    },
    "nn-noise-scan": {
        "widths": (ints, "1, 2, 5"),
        "noise_levels": (floats, "0.0, 0.2"),
        "k": (int, "10"),
        "d": (int, "64"),
        "n_train": (int, "2000"),
        "n_test": (int, "1000"),
        "spread": (float, "0.1"),
        "epochs": (int, "30"),
        "learning_rate": (float, "0.01"),
        "batch_size": (int, "32"),
        "train_images": (_opt_path, ""),
        "train_labels": (_opt_path, ""),
        "test_images": (_opt_path, ""),
        "test_labels": (_opt_path, ""),
    },
}

EXPERIMENTS = tuple(SCHEMAS)


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict[str, Any]
    raw: dict[str, str]
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    output_dir: Path = Path("results")
    plots: bool = True
    threads: int = 1
    extra: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.parameters[key]

    def to_ini(self) -> str:
        """Text form that parses back to an identical configuration."""
        lines = [
            "[experiment]",
            f"name = {self.experiment}",
            f"seeds = {', '.join(str(s) for s in self.seeds)}",
            f"output_dir = {self.output_dir.as_posix()}",
            f"plots = {'true' if self.plots else 'false'}",
            "",
            f"[{self.experiment}]",
        ]
        lines += [f"{k} = {self.raw[k]}" for k in SCHEMAS[self.experiment]]
        return "\n".join(lines) + "\n"


def build_config(
    experiment: str,
    params: Mapping[str, str] | None = None,
    *,
    seeds=None,
    output_dir=None,
    plots: bool = True,
    threads: int = 1,
) -> ExperimentConfig:
    """Validate raw string parameters against the experiment schema."""
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r} (known: {', '.join(EXPERIMENTS)})", "name")
    schema = SCHEMAS[experiment]
    params = dict(params or {})
    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise ConfigError(f"not a parameter of {experiment}", unknown[0])
    raw, parsed = {}, {}
    for key, (conv, default) in schema.items():
        text = str(params.get(key, default)).strip()
        try:
            parsed[key] = conv(text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value {text!r} ({exc})", key) from None
        raw[key] = text
    if seeds is None:
        seeds = DEFAULT_SEEDS
    elif isinstance(seeds, str):
        try:
            seeds = ints(seeds)
        except ValueError:
            raise ConfigError(f"invalid seed list {seeds!r}", "seeds") from None
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ConfigError("at least one seed is required", "seeds")
    if threads < 1:
        raise ConfigError("must be at least 1", "threads")
    out = Path(output_dir or os.environ.get(OUT_ENV) or Path("results") / experiment)
    return ExperimentConfig(experiment, parsed, raw, seeds, out, plots, threads)


def load_config(path, *, output_dir=None, seeds=None, threads: int | None = None) -> ExperimentConfig:
    """Parse a config file. CLI ``output_dir`` beats ``$SCALINGLAB_OUT`` beats the file."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path) as f:
            cp.read_file(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "config") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", "config") from None
    if not cp.has_section("experiment") or not cp.has_option("experiment", "name"):
        raise ConfigError("missing [experiment] name", "name")
    head = dict(cp["experiment"])
    name = head.pop("name").strip()
    file_seeds = head.pop("seeds", None)
    file_out = head.pop("output_dir", None)
    try:
        plots = _bool(head.pop("plots", "true"))
    except ValueError:
        raise ConfigError("not a boolean", "plots") from None
    if head:
        raise ConfigError("not an [experiment] key", sorted(head)[0])
    extra_sections = [s for s in cp.sections() if s not in ("experiment", name)]
    if extra_sections:
        raise ConfigError(f"unexpected section for experiment {name}", extra_sections[0])
    params = dict(cp[name]) if cp.has_section(name) else {}
    out = output_dir or os.environ.get(OUT_ENV) or file_out
    return build_config(
        name,
        params,
        seeds=seeds if seeds is not None else file_seeds,
        output_dir=out,
        plots=plots,
        threads=threads or 1,
    )
