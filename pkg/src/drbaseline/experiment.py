"""Experiment configuration and the end-to-end manipulation pipeline."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

import drbaseline
from drbaseline.baselines import DrProgram, Method
from drbaseline.errors import CapacityError, DataError, ParameterError
from drbaseline.exact_dp import ActionGrid, solve
from drbaseline.mdp import DrChain, State, ZDistribution
from drbaseline.metrics import ManipulationCurve, manipulation_curve
from drbaseline.rollout import (
    LinearHeuristic,
    RolloutConfig,
    default_theta_grid,
    fit_theta,
    rollout_policy,
)
from drbaseline.scenarios import (
    PathBundle,
    ScenarioModel,
    load_history,
    quantize_z,
    select_history,
    synthetic_hourly_history,
    z_from_consumption,
)
from drbaseline.simulate import intrinsic_policy
from drbaseline.utility import UtilityParams, estimate_params

log = logging.getLogger(__name__)

ENV_PREFIX = "DRBASE_"

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "drbaseline experiment config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "csv": {"type": ["string", "null"]},
                "holidays": {"type": ["string", "null"]},
                "hour": {"type": "integer", "minimum": 0, "maximum": 23},
                "n_days": {"type": "integer", "minimum": 1},
                "synthetic_seed": {"type": "integer", "minimum": 0},
            },
        },
        "horizon": {"type": "integer", "minimum": 1},
        "chain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p0": {"type": "number", "minimum": 0, "maximum": 1},
                "p1": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "snr_db": {"type": "number"},
        "program": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": [m.value for m in Method]},
                "Y": {"type": "integer", "minimum": 1},
                "X": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 1}},
                "r": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
        },
        "utility": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "omega": {"type": "number", "exclusiveMinimum": 0},
                "u_check": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "a_hat_factor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_actions": {"type": "integer", "minimum": 2},
                "theta_step": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "z_bins": {"type": "integer", "minimum": 1},
            },
        },
        "paths": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_paths": {"type": "integer", "minimum": 1},
                "n_fit_paths": {"type": "integer", "minimum": 1},
                "n_eval_paths": {"type": "integer", "minimum": 1},
            },
        },
        "solver": {"enum": ["exact", "rollout"]},
        "dp_max_Y": {"type": "integer", "minimum": 1},
        "memory_budget_mb": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
    },
}


@dataclass
class DataConfig:
    csv: str | None = None
    holidays: str | None = None
    hour: int = 9
    n_days: int = 93
    synthetic_seed: int = 0


@dataclass
class ChainConfig:
    p0: float = 0.2
    p1: float = 0.4


@dataclass
class ProgramConfig:
    method: str = "high"
    Y: int = 5
    X: list[int] | None = None
    r: list[float] = field(default_factory=lambda: [0.12])

    def x_values(self) -> list[int]:
        if self.X is not None:
            return list(self.X)
        step = 2 if self.method == Method.MID.value else 1
        start = 2 - self.Y % 2 if self.method == Method.MID.value else 1
        return list(range(start, self.Y + 1, step))


@dataclass
class UtilityConfig:
    omega: float = 0.12
    u_check: float = 0.99
    a_hat_factor: float = 1.5


@dataclass
class GridConfig:
    n_actions: int = 10
    theta_step: float = 0.001
    z_bins: int = 3


@dataclass
class PathConfig:
    n_paths: int = 100
    n_fit_paths: int = 10
    n_eval_paths: int = 1000


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    horizon: int = 93
    chain: ChainConfig = field(default_factory=ChainConfig)
    snr_db: float = 3.0
    program: ProgramConfig = field(default_factory=ProgramConfig)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    grids: GridConfig = field(default_factory=GridConfig)
    paths: PathConfig = field(default_factory=PathConfig)
    solver: str = "exact"
    dp_max_Y: int = 5
    memory_budget_mb: float = 2048
    seed: int = 0
    out: str = "results"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of every setting that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise DataError(f"invalid config: {exc.message}") from exc
        sub = {"data": DataConfig, "chain": ChainConfig, "program": ProgramConfig,
               "utility": UtilityConfig, "grids": GridConfig, "paths": PathConfig}
        kwargs = {}
        for k, v in d.items():
            kwargs[k] = sub[k](**v) if k in sub else v
        cfg = cls(**kwargs)
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "ExperimentConfig":
        if path is None:
            return cls()
        p = Path(path)
        if not p.exists():
            raise DataError(f"config file not found: {p}")
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{p}: not valid JSON ({exc})") from exc
        return cls.from_dict(d)

    def apply_env(self, environ=os.environ) -> "ExperimentConfig":
        """Overrides from DRBASE_SEED, DRBASE_SOLVER, DRBASE_OUT, DRBASE_N_PATHS, DRBASE_HORIZON, DRBASE_Y."""
        conv = {"SEED": ("seed", int), "SOLVER": ("solver", str), "OUT": ("out", str),
                "HORIZON": ("horizon", int)}
        for key, (attr, typ) in conv.items():
            if ENV_PREFIX + key in environ:
                setattr(self, attr, typ(environ[ENV_PREFIX + key]))
        if ENV_PREFIX + "N_PATHS" in environ:
            self.paths.n_paths = int(environ[ENV_PREFIX + "N_PATHS"])
        if ENV_PREFIX + "Y" in environ:
            self.program.Y = int(environ[ENV_PREFIX + "Y"])
            self.program.X = None
        return self

    def check(self) -> None:
        if self.solver not in ("exact", "rollout"):
            raise ParameterError(f"unknown solver {self.solver!r}")
        if self.data.csv is not None and not Path(self.data.csv).exists():
            raise DataError(f"history file not found: {self.data.csv}")
        if self.data.holidays is not None and not Path(self.data.holidays).exists():
            raise DataError(f"holiday file not found: {self.data.holidays}")
        for x in self.program.x_values():
            DrProgram(x, self.program.Y, self.program.r[0], self.program.method)


def history_series(cfg: ExperimentConfig) -> np.ndarray:
    """Consumption at the DR hour: from the CSV, or the built-in synthetic profile."""
    d = cfg.data
    if d.csv is not None:
        recs = load_history(d.csv, d.hour, d.holidays, d.n_days)
    else:
        recs = select_history(synthetic_hourly_history(seed=d.synthetic_seed), d.hour, (), d.n_days)
    if not recs:
        raise DataError("no history records at the selected hour")
    return np.array([r.consumption for r in recs])


@dataclass
class Setup:
    history: np.ndarray
    params: UtilityParams
    model: ScenarioModel
    paths: PathBundle
    z_dist: ZDistribution
    grid: ActionGrid
    chain: DrChain


def build_setup(cfg: ExperimentConfig) -> Setup:
    hist = history_series(cfg)
    if cfg.horizon > hist.size:
        raise DataError(f"horizon {cfg.horizon} exceeds the {hist.size} history days available")
    params = estimate_params(hist, cfg.utility.omega, cfg.utility.u_check,
                             a_hat_factor=cfg.utility.a_hat_factor)
    chain = DrChain(cfg.chain.p0, cfg.chain.p1)
    model = ScenarioModel.from_snr(hist[:cfg.horizon], cfg.snr_db, chain, params)
    paths = model.paths(cfg.paths.n_paths, cfg.seed, warmup_len=cfg.program.Y)
    z_dist = quantize_z(paths.z, cfg.grids.z_bins)
    grid = ActionGrid.uniform(params.a_hat, cfg.grids.n_actions)
    return Setup(hist, params, model, paths, z_dist, grid, chain)


def fit_start_state(setup: Setup, Y: int) -> State:
    """Typical start: element-wise median warm-up window, non-DR, utility scale of day 0's base."""
    window = tuple(np.median(setup.paths.initial_windows(Y), axis=0))
    z0 = float(z_from_consumption(setup.model.base[0], setup.params))
    return State(window, 0, z0)


def strategic_factory(cfg: ExperimentConfig, setup: Setup, thetas: dict):
    """Program -> batch policy for the configured solver; fitted thetas land in ``thetas``."""
    if cfg.solver == "exact":
        if cfg.program.Y > cfg.dp_max_Y:
            raise CapacityError(f"exact DP is capped at Y <= {cfg.dp_max_Y} (got Y={cfg.program.Y}); "
                                "use --solver rollout")

        def make(prog: DrProgram):
            tables = solve(cfg.horizon, prog, setup.params, setup.chain, setup.grid, setup.z_dist,
                           keep_values=False, memory_budget_mb=cfg.memory_budget_mb)
            return tables.overlay_policy()

        return make

    rcfg = RolloutConfig(cfg.paths.n_fit_paths, cfg.paths.n_eval_paths, cfg.seed)
    theta_grid = default_theta_grid(cfg.grids.theta_step)

    def make(prog: DrProgram):
        start = fit_start_state(setup, prog.Y)
        theta = fit_theta(start, setup.model, prog, setup.params, rcfg, theta_grid)
        thetas[(prog.r, prog.X)] = theta
        log.info("X=%d r=%g theta*=%.3f", prog.X, prog.r, theta)
        return rollout_policy(LinearHeuristic(theta), setup.model, prog, setup.params, rcfg,
                              setup.grid)

    return make


def curve_filename(Y: int, r: float, solver: str, method: str = "high") -> str:
    return f"manipulation_{method}_Y{Y}_r{r:g}_{solver}.csv"


def run_curves(cfg: ExperimentConfig, setup: Setup | None = None
               ) -> tuple[dict[float, ManipulationCurve], dict]:
    """Manipulation curve per rebate price, plus run metadata."""
    setup = build_setup(cfg) if setup is None else setup
    thetas: dict = {}
    make = strategic_factory(cfg, setup, thetas)
    curves = {}
    for r in cfg.program.r:
        programs = [DrProgram(x, cfg.program.Y, r, cfg.program.method)
                    for x in cfg.program.x_values()]
        curves[r] = manipulation_curve(programs, make, intrinsic_policy(setup.params),
                                       setup.paths, setup.params)
    meta = {
        "params": setup.params.to_dict(),
        "z_support": list(setup.z_dist.values),
        "z_probs": list(setup.z_dist.probs),
        "action_grid": list(setup.grid.points),
        "thetas": {f"r={r:g},X={x}": t for (r, x), t in sorted(thetas.items())},
    }
    return curves, meta


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: ExperimentConfig) -> dict:
    """Full pipeline; writes curve CSVs and ``manifest.json`` under ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    curves, meta = run_curves(cfg)
    files = {}
    for r, curve in curves.items():
        p = out / curve_filename(cfg.program.Y, r, cfg.solver, cfg.program.method)
        curve.to_csv(p)
        files[p.name] = _sha256(p)
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": {"drbaseline": drbaseline.__version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "outputs": files,
        **meta,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
