"""Experiment configs, grid runs and report files.

A config is a single JSON document::

    {
      "experiment_kind": "keyless",          # nbkg | keyless | metrics-table
      "parameter_grid": {"p_e": [0.2, 0.3], "lambda": [128]},
      "trial_count": 10,
      "master_seed": 1,
      "output_path": "table2.csv",           # optional
      "format": "csv"                        # optional, csv | jsonl
    }

Grid parameters that are left out take the defaults in ``GRID_DEFAULTS``.
Each (grid point, trial) gets its own seed stream derived from the master
seed, so results do not depend on how trials are scheduled.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import metrics, nbkg, shaping
from .channels import BscConfig, SeedStream

log = logging.getLogger(__name__)

WORKERS_ENV = "OTPSIM_WORKERS"
KINDS = ("nbkg", "keyless", "metrics-table")
FORMATS = ("csv", "jsonl")

GRID_DEFAULTS: dict[str, dict[str, Any]] = {
    "keyless": {
        "lambda": 128,
        "p_e": 0.2,
        "block_length": None,
        "q": 100,
        "legit_crossover": 1e-3,
        "ecc": "repetition-3",
        "state_width": None,
        "t0_through_eve_channel": False,
    },
    "nbkg": {
        "snr_db": 25.0,
        "an_power_fraction": 0.5,
        "theta": nbkg.DEFAULT_THETA,
        "payload_bits": 256,
        "eve_snr_db": None,
        "eve_gains": "rayleigh",
        "key_length": None,
    },
    "metrics-table": {
        "lambda": 128,
        "p_e": 0.2,
    },
}

# Measured columns per kind; the ones listed in RATES also get a "_se" column.
MEASURED = {
    "keyless": [
        "block_length", "state_width", "achieved_dosa", "achieved_dosa_2dp", "coded_dosa",
        "eve_ber_without_shaping", "eve_ber_with_shaping", "legit_ber", "legit_message_ber",
        "shaped_bits",
    ],
    "nbkg": [
        "legit_symbol_ber", "eve_symbol_ber", "key_mismatch_rate", "exchange_block_error_rate",
        "eve_key_distance", "achieved_dosa", "key_length",
    ],
    "metrics-table": [
        "block_length", "min_entropy_bits", "achieved_dosa", "achieved_dosa_2dp",
        "required_error_floor", "eve_success_probability",
    ],
}
RATES = {
    "keyless": ["eve_ber_without_shaping", "eve_ber_with_shaping", "legit_ber", "legit_message_ber"],
    "nbkg": ["legit_symbol_ber", "eve_symbol_ber", "key_mismatch_rate", "exchange_block_error_rate",
             "eve_key_distance", "achieved_dosa"],
    "metrics-table": [],
}
INTEGER_COLUMNS = {"block_length", "shaped_bits", "trial_count", "master_seed", "lambda", "q",
                   "payload_bits", "state_width"}
TRAILER = ["trial_count", "master_seed", "config_hash", "error"]

PRESETS: dict[str, dict[str, Any]] = {
    "table2": {
        "experiment_kind": "keyless",
        "parameter_grid": {"lambda": [128], "p_e": [0.2, 0.3, 0.4, 0.5], "q": [100],
                           "legit_crossover": [1e-3], "ecc": ["repetition-3"]},
        "trial_count": 10,
    },
    "dosa-bullets": {
        "experiment_kind": "keyless",
        "parameter_grid": {"lambda": [128], "p_e": [0.2, 0.3, 0.5], "q": [20]},
        "trial_count": 2,
    },
    "nbkg-sweep": {
        "experiment_kind": "nbkg",
        "parameter_grid": {"snr_db": [10, 15, 20, 25, 30], "an_power_fraction": [0.5],
                           "payload_bits": [256]},
        "trial_count": 200,
    },
}
DEFAULT_SEED = 20230901


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_kind: str
    parameter_grid: dict[str, list]
    trial_count: int = 1
    master_seed: int = DEFAULT_SEED
    output_path: str | None = None
    format: str = "csv"

    def points(self) -> list[dict[str, Any]]:
        names = list(GRID_DEFAULTS[self.experiment_kind])
        values = [self.parameter_grid.get(n, [GRID_DEFAULTS[self.experiment_kind][n]]) for n in names]
        return [dict(zip(names, combo)) for combo in itertools.product(*values)]

    def content_hash(self) -> str:
        body = {
            "experiment_kind": self.experiment_kind,
            "parameter_grid": {k: self.parameter_grid[k] for k in sorted(self.parameter_grid)},
            "trial_count": self.trial_count,
            "master_seed": self.master_seed,
        }
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, **changes) -> "ExperimentConfig":
        data = {
            "experiment_kind": self.experiment_kind,
            "parameter_grid": self.parameter_grid,
            "trial_count": self.trial_count,
            "master_seed": self.master_seed,
            "output_path": self.output_path,
            "format": self.format,
        }
        data.update({k: v for k, v in changes.items() if v is not None})
        return config_from_dict(data)


def _check_point(kind: str, point: dict[str, Any]) -> None:
    """Eagerly validate one grid point; raises ConfigError naming the field."""

    def fail(name, msg):
        raise ConfigError(f"parameter_grid.{name}: {msg} (got {point[name]!r})")

    if kind in ("keyless", "metrics-table"):
        lam, p = point["lambda"], point["p_e"]
        if not isinstance(lam, int) or isinstance(lam, bool) or lam < 1:
            fail("lambda", "must be a positive integer")
        if not isinstance(p, (int, float)) or not 0.0 < p < 1.0:
            fail("p_e", "error_floor must lie in (0, 1)")
        if kind == "keyless":
            if p > 0.5:
                fail("p_e", "error_floor is modeled as a BSC crossover and must be <= 0.5")
            minimum = shaping.required_block_length(lam, p)
            L = point["block_length"]
            if L is not None and (not isinstance(L, int) or L < minimum):
                fail("block_length", f"must be an integer >= required minimum {minimum} "
                                     f"for lambda={lam}, p_e={p}")
            if not isinstance(point["q"], int) or point["q"] < 1:
                fail("q", "must be a positive integer")
            if not 0.0 <= point["legit_crossover"] <= 0.5:
                fail("legit_crossover", "must lie in [0, 0.5]")
            if point["ecc"] not in shaping.ECC_SCHEMES:
                fail("ecc", f"must be one of {shaping.ECC_SCHEMES}")
            w = point["state_width"]
            if w is not None and (not isinstance(w, int) or w < lam):
                fail("state_width", "must be an integer >= lambda")
    elif kind == "nbkg":
        try:
            rot = nbkg.RotationConfig(point["theta"], point["an_power_fraction"])
            nbkg.NbkgConfig(
                payload_bits=point["payload_bits"],
                snr_db=point["snr_db"],
                rotation=rot,
                eve_snr_db=point["eve_snr_db"],
                eve_gains=_gains(point["eve_gains"]),
                key_length=point["key_length"],
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"parameter_grid: {exc} (point {point})") from None


def _gains(value):
    if isinstance(value, str):
        return value
    try:
        (ar, ai), (br, bi) = value
    except (TypeError, ValueError):
        raise ValueError("eve_gains must be 'rayleigh', 'random-phase' or [[re, im], [re, im]]") from None
    return (complex(ar, ai), complex(br, bi))


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {"experiment_kind", "parameter_grid", "trial_count", "master_seed", "output_path", "format"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown top-level field(s): {', '.join(sorted(extra))}")
    kind = data.get("experiment_kind")
    if kind not in KINDS:
        raise ConfigError(f"experiment_kind: must be one of {KINDS}, got {kind!r}")
    grid = data.get("parameter_grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("parameter_grid: must be an object mapping parameter names to lists")
    for name, values in grid.items():
        if name not in GRID_DEFAULTS[kind]:
            raise ConfigError(f"parameter_grid.{name}: unknown parameter for {kind} "
                              f"(expected one of {sorted(GRID_DEFAULTS[kind])})")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"parameter_grid.{name}: must be a nonempty list")
    trials = data.get("trial_count", 1)
    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 1:
        raise ConfigError(f"trial_count: must be an integer >= 1, got {trials!r}")
    seed = data.get("master_seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"master_seed: must be a 64-bit unsigned integer, got {seed!r}")
    fmt = data.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format: must be one of {FORMATS}, got {fmt!r}")
    out = data.get("output_path")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_path: must be a string")

    cfg = ExperimentConfig(kind, {k: list(v) for k, v in grid.items()}, trials, seed, out, fmt)
    for point in cfg.points():
        _check_point(kind, point)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def preset_config(name: str, trials: int | None = None, seed: int | None = None) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    data = json.loads(json.dumps(PRESETS[name]))
    if trials is not None:
        data["trial_count"] = trials
    if seed is not None:
        data["master_seed"] = seed
    return config_from_dict(data)


# --- trials ---------------------------------------------------------------


def _keyless_trial(point: dict[str, Any], seed: SeedStream) -> dict[str, float]:
    lam, p = point["lambda"], point["p_e"]
    L = point["block_length"] or shaping.required_block_length(lam, p)
    cfg = shaping.ShaperConfig(
        metrics.SecurityParams(lam, p, L),
        state_width=point["state_width"],
        ecc=point["ecc"],
        public_seed=seed.stream_label.encode(),
        t0_through_eve_channel=point["t0_through_eve_channel"],
    )
    r = shaping.simulate_keyless(cfg, BscConfig(point["legit_crossover"]), BscConfig(p), point["q"], seed)
    return {
        "block_length": r.block_length,
        "state_width": cfg.state_width,
        "achieved_dosa": r.achieved_dosa,
        "coded_dosa": r.coded_dosa,
        "eve_ber_without_shaping": r.eve_ber_without_shaping,
        "eve_ber_with_shaping": r.eve_ber_with_shaping,
        "legit_ber": r.legit_ber,
        "legit_message_ber": r.legit_message_ber,
        "shaped_bits": r.shaped_bits,
    }


def _nbkg_trial(point: dict[str, Any], seed: SeedStream) -> dict[str, float]:
    cfg = nbkg.NbkgConfig(
        payload_bits=point["payload_bits"],
        snr_db=point["snr_db"],
        rotation=nbkg.RotationConfig(point["theta"], point["an_power_fraction"]),
        eve_snr_db=point["eve_snr_db"],
        eve_gains=_gains(point["eve_gains"]),
        key_length=point["key_length"],
    )
    r = nbkg.run_nbkg(cfg, seed)
    return {
        "legit_symbol_ber": r.legit_symbol_ber,
        "eve_symbol_ber": r.eve_symbol_ber,
        "key_mismatch_rate": float(r.key_mismatch),
        "exchange_block_error_rate": float(r.exchange_block_error),
        "eve_key_distance": r.eve_key_distance,
        "achieved_dosa": r.achieved_dosa,
        "key_length": r.key_length,
    }


def _metrics_trial(point: dict[str, Any], seed: SeedStream) -> dict[str, float]:
    lam, p = point["lambda"], point["p_e"]
    L = shaping.required_block_length(lam, p)
    dosa = lam / L
    return {
        "block_length": L,
        "min_entropy_bits": metrics.min_entropy_bound(p),
        "achieved_dosa": dosa,
        "required_error_floor": metrics.required_error_floor(dosa),
        "eve_success_probability": shaping.error_free_probability(L, p),
    }


TRIAL_FUNCTIONS = {"keyless": _keyless_trial, "nbkg": _nbkg_trial, "metrics-table": _metrics_trial}


def trial_seed(master_seed: int, point_index: int, trial_index: int) -> SeedStream:
    return SeedStream(master_seed, f"point{point_index}/trial{trial_index}")


def _run_task(task):
    kind, point, master_seed, pi, ti = task
    try:
        return TRIAL_FUNCTIONS[kind](point, trial_seed(master_seed, pi, ti)), None
    except Exception as exc:  # recorded as an error row for this grid point
        return None, f"{type(exc).__name__}: {exc}"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


def report_columns(kind: str) -> list[str]:
    cols = list(GRID_DEFAULTS[kind])
    for name in MEASURED[kind]:
        if name in cols:  # a grid default of None is reported as the value used
            continue
        cols.append(name)
        if name in RATES[kind]:
            cols.append(name + "_se")
    return cols + TRAILER


def _aggregate(kind: str, results: list[dict[str, float]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    n = len(results)
    for name in MEASURED[kind]:
        if name == "achieved_dosa_2dp":
            continue
        values = np.array([r[name] for r in results], dtype=np.float64)
        if name == "shaped_bits":
            out[name] = int(values.sum())
        elif name in ("block_length", "state_width"):
            out[name] = int(values[0])
        else:
            out[name] = float(values.mean())
        if name in RATES[kind]:
            out[name + "_se"] = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else None
    if "achieved_dosa_2dp" in MEASURED[kind]:
        out["achieved_dosa_2dp"] = f"{out['achieved_dosa']:.2f}"
    return out


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[dict[str, Any]]:
    """Run every (grid point, trial) and return one aggregated row per point."""
    kind = cfg.experiment_kind
    points = cfg.points()
    trials = 1 if kind == "metrics-table" else cfg.trial_count
    tasks = [(kind, p, cfg.master_seed, pi, ti) for pi, p in enumerate(points) for ti in range(trials)]
    workers = worker_count() if workers is None else workers

    log.info("%s: %d grid point(s) x %d trial(s), %d worker(s)", kind, len(points), trials, workers)
    if workers <= 1 or len(tasks) <= 1:
        outcomes = [_run_task(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))

    config_hash = cfg.content_hash()
    rows = []
    for pi, point in enumerate(points):
        chunk = outcomes[pi * trials:(pi + 1) * trials]
        errors = [e for _, e in chunk if e]
        row: dict[str, Any] = dict(point)
        if errors:
            row["error"] = errors[0]
            log.warning("grid point %d failed: %s", pi, errors[0])
        else:
            row.update(_aggregate(kind, [r for r, _ in chunk]))
            row["error"] = ""
        row.update(trial_count=trials, master_seed=cfg.master_seed, config_hash=config_hash)
        rows.append(row)
        log.info("grid point %d/%d done", pi + 1, len(points))
    return rows


# --- reports --------------------------------------------------------------


def _format_value(name: str, value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)) or (name in INTEGER_COLUMNS and float(value).is_integer()):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    if isinstance(value, (list, tuple)):
        return json.dumps(value)
    return str(value)


def _json_value(name: str, value):
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, (int, np.integer)) or (name in INTEGER_COLUMNS and float(value).is_integer()):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(f"{float(value):.6g}")
    return value


def _render(rows, fmt: str, columns: list[str]) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_value(c, row.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "jsonl":
        lines = [json.dumps({c: _json_value(c, row.get(c)) for c in columns}) for row in rows]
        return "".join(line + "\n" for line in lines)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(rows, path, fmt: str = "csv", columns: list[str] | None = None) -> None:
    """Write rows as CSV (with header) or JSON lines; ``path`` of ``None``/'-' is stdout."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    text = _render(rows, fmt, columns)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report to {path}: {exc.strerror}") from None


def load_report(path) -> list[dict[str, Any]]:
    """Read a JSON-lines report back (for regression diffs)."""
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
