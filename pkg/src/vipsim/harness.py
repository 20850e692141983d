"""Experiment configuration, parameter sweeps over (lambda, W, run) and CSV output."""
from __future__ import annotations

import configparser
import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .metrics import SUMMARY_FIELDS
from .simulation import SimConfig, simulate
from .topology import load_topology

# config file sections; any key may appear in any of them, the split is for readability
SECTIONS = ("experiment", "topology", "traffic", "virtual_plane", "congestion", "actual_plane", "baselines")

CSV_FIELDS = SUMMARY_FIELDS[:6] + ("run",) + SUMMARY_FIELDS[6:] + ("status",)

_SIM_KEYS = set(SimConfig.keys()) - {"algorithm", "slots", "lam", "W", "bias_z"}


def _parse_list(text: str, cast=float) -> list:
    return [cast(x) for x in text.replace(",", " ").split()]


def _parse_bool(key: str, text: str) -> bool:
    if text.strip().lower() in ("1", "true", "yes", "on"):
        return True
    if text.strip().lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{key}: expected a boolean, got {text!r}")


def _parse_value(key: str, text: str):
    """Cast a config string to the type of the SimConfig field ``key``."""
    text = text.strip()
    default = {f.name: f.default for f in fields(SimConfig)}[key]
    if text.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        return _parse_bool(key, text)
    if key in ("requesting_nodes", "sources"):
        return tuple(_parse_list(text, int))
    if isinstance(default, int) and not isinstance(default, bool):
        return int(text)
    if isinstance(default, float) or default is None:
        try:
            return float(text)
        except ValueError:
            return text
    return text


@dataclass
class ExperimentConfig:
    topology: str = "geant"
    algorithm: str = "evip"
    slots: int = 10_000
    runs: int = 10
    seed: int = 0
    lambdas: list = field(default_factory=lambda: [1.0])
    Ws: list = field(default_factory=lambda: [1.0])
    z: float = 1.0
    workers: int | None = None  # None: one per CPU
    check_invariants: bool = False
    sim: dict = field(default_factory=dict)  # remaining SimConfig keys

    def __post_init__(self):
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.lambdas:
            raise ValueError("lambda sweep must not be empty")
        if not self.Ws:
            raise ValueError("W sweep must not be empty")
        bad = set(self.sim) - _SIM_KEYS
        if bad:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(bad))}")
        # fail on bad values before any run starts
        self.sim_config(self.lambdas[0], self.Ws[0])

    def sim_config(self, lam: float, W: float) -> SimConfig:
        return SimConfig(algorithm=self.algorithm, slots=self.slots, lam=lam, W=W, bias_z=self.z,
                         **self.sim)

    def jobs(self) -> list[tuple[int, int, float, float]]:
        """(sweep index, run index, lambda, W) in output order."""
        out = []
        for i, (lam, W) in enumerate((lam, W) for lam in self.lambdas for W in self.Ws):
            out.extend((i, r, lam, W) for r in range(self.runs))
        return out

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with the non-None keyword values replaced."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load_config(path) -> ExperimentConfig:
    """Read an INI-style config file.

    Keys ``lambda`` and ``W`` take whitespace- or comma-separated lists;
    every other key names an ExperimentConfig or SimConfig field.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep "W" upper case
    with open(path) as fh:
        parser.read_file(fh)
    return config_from_mapping({k: v for s in parser.sections() for k, v in _section(parser, s)})


def _section(parser, name):
    if name not in SECTIONS:
        raise ValueError(f"unknown config section [{name}]")
    return parser.items(name)


def config_from_mapping(values: dict) -> ExperimentConfig:
    exp, sim = {}, {}
    for key, text in values.items():
        text = str(text)
        if key == "lambda":
            exp["lambdas"] = _parse_list(text)
        elif key == "W":
            exp["Ws"] = _parse_list(text)
        elif key in ("slots", "runs", "seed", "workers"):
            exp[key] = int(text)
        elif key == "z":
            exp["z"] = float(text)
        elif key == "check_invariants":
            exp[key] = _parse_bool(key, text)
        elif key in ("topology", "algorithm"):
            exp[key] = text.strip()
        elif key in _SIM_KEYS:
            sim[key] = _parse_value(key, text)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return ExperimentConfig(sim=sim, **exp)


def _run_one(args):
    cfg, index, run, lam, W = args
    row = {"algorithm": cfg.algorithm, "topology": Path(cfg.topology).stem, "lambda": lam, "W": W,
           "z": cfg.z, "seed": cfg.seed, "run": run, "slots": cfg.slots}
    try:
        topo = load_topology(cfg.topology)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = simulate(topo, cfg.sim_config(lam, W), seed=cfg.seed, run=run,
                              check_invariants=cfg.check_invariants)
        for key in SUMMARY_FIELDS[7:]:
            row[key] = result.summary[key]
        row["status"] = "empty" if result.summary.get("empty") else "ok"
    except Exception as exc:  # isolate the failure to this row
        for key in SUMMARY_FIELDS[7:]:
            row.setdefault(key, math.nan)
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    return index, run, row


def run_experiment(cfg: ExperimentConfig) -> list[dict]:
    """Run every (lambda, W, run) combination; rows come back in sweep then run order."""
    jobs = [(cfg, i, r, lam, W) for i, r, lam, W in cfg.jobs()]
    workers = cfg.workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        done = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            done = list(pool.map(_run_one, jobs))
    done.sort(key=lambda t: (t[0], t[1]))
    return [row for _, _, row in done]


def _fmt(value) -> str:
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_csv(records, path) -> None:
    """Header plus one row per record; floats at 6 significant digits."""
    records = list(records)
    if not records:
        warnings.warn("no records to write; emitting header only", stacklevel=2)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow([_fmt(rec.get(k, "")) for k in CSV_FIELDS])
