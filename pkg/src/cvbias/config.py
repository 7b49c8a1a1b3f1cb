"""Experiment configuration: a single JSON document with four sections.

    {
      "dgp":        { "mean_kind": {...}, "errors": {...}, "burn_in": ... },
      "models":     [ { "id": ..., "columns": [...], "intercept": ... }, ... ],
      "schemes":    [ { "kind": ... , ... }, ... ],
      "experiment": { "reps": ..., "seed": ..., "T": ..., "T_grid": [...],
                      "max_lag": ..., "rho_grid": [...],
                      "crosscheck": ..., "allow_unreliable": ... }
    }

Unknown keys anywhere are errors, not warnings. ``models`` defaults to an
empty list and ``schemes`` to leave-one-out; commands validate what they
actually need.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

from .cv import CvScheme
from .dgp import DgpSpec
from .estimators import ModelSpec
from .exceptions import ConfigError
from .mc import McConfig

_EXPERIMENT_KEYS = (
    "reps", "seed", "T", "T_grid", "max_lag", "rho_grid", "crosscheck", "allow_unreliable",
)


@dataclass(frozen=True)
class ExperimentSpec:
    reps: int
    seed: int
    T: int | None = None
    T_grid: tuple | None = None
    max_lag: int | None = None
    rho_grid: tuple | None = None
    crosscheck: bool = False
    allow_unreliable: bool = False

    def __post_init__(self):
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError(f"experiment.reps must be an integer >= 1, got {self.reps!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"experiment.seed must be a non-negative integer, got {self.seed!r}")
        if self.T is not None and (not isinstance(self.T, int) or self.T < 1):
            raise ConfigError(f"experiment.T must be a positive integer, got {self.T!r}")
        if self.T_grid is not None:
            grid = tuple(self.T_grid)
            if any(not isinstance(t, int) or t < 1 for t in grid):
                raise ConfigError(f"experiment.T_grid must hold positive integers, got {grid!r}")
            object.__setattr__(self, "T_grid", grid)
        if self.max_lag is not None and (not isinstance(self.max_lag, int) or self.max_lag < 0):
            raise ConfigError(f"experiment.max_lag must be an integer >= 0, got {self.max_lag!r}")
        if self.rho_grid is not None:
            object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "T": self.T,
            "T_grid": list(self.T_grid) if self.T_grid is not None else None,
            "max_lag": self.max_lag,
            "rho_grid": list(self.rho_grid) if self.rho_grid is not None else None,
            "crosscheck": self.crosscheck,
            "allow_unreliable": self.allow_unreliable,
        }

    @classmethod
    def from_dict(cls, d: dict, where: str = "experiment") -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object")
        unknown = sorted(set(d) - set(_EXPERIMENT_KEYS))
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")
        if "reps" not in d or "seed" not in d:
            raise ConfigError(f"{where}: requires 'reps' and 'seed'")
        raw = {k: v for k, v in d.items() if v is not None}
        return cls(**raw)


@dataclass(frozen=True)
class RunConfig:
    dgp: DgpSpec
    models: tuple
    schemes: tuple
    experiment: ExperimentSpec

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if len({m.id for m in self.models}) != len(self.models):
            raise ConfigError("models: ids must be unique")

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp.to_dict(),
            "models": [m.to_dict() for m in self.models],
            "schemes": [s.to_dict() for s in self.schemes],
            "experiment": self.experiment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = sorted(set(d) - {"dgp", "models", "schemes", "experiment"})
        if unknown:
            raise ConfigError(f"config: unknown section(s) {', '.join(map(repr, unknown))}")
        if "dgp" not in d or "experiment" not in d:
            raise ConfigError("config: requires 'dgp' and 'experiment' sections")
        models_raw = d.get("models", [])
        if not isinstance(models_raw, list):
            raise ConfigError("models: expected a list")
        schemes_raw = d.get("schemes", [{"kind": "loo"}])
        if not isinstance(schemes_raw, list) or not schemes_raw:
            raise ConfigError("schemes: expected a non-empty list")
        return cls(
            dgp=DgpSpec.from_dict(d["dgp"]),
            models=tuple(
                ModelSpec.from_dict(m, f"models[{i}]") for i, m in enumerate(models_raw)
            ),
            schemes=tuple(
                CvScheme.from_dict(s, f"schemes[{i}]") for i, s in enumerate(schemes_raw)
            ),
            experiment=ExperimentSpec.from_dict(d["experiment"]),
        )

    def first_T(self) -> int:
        """The single sample size commands like simulate/decompose work at."""
        if self.experiment.T is not None:
            return self.experiment.T
        if self.experiment.T_grid:
            return self.experiment.T_grid[0]
        raise ConfigError("experiment: requires 'T' (or a non-empty 'T_grid')")

    def simulate_max_lag(self) -> int:
        """Regressor depth for path-level commands: explicit, else model-derived."""
        if self.experiment.max_lag is not None:
            return self.experiment.max_lag
        need = max((max(m.columns) + 1 for m in self.models if m.columns), default=0)
        if self.dgp.mean_kind.kind == "iid_regression":
            return 0
        k = self.dgp.mean_kind.n_series
        lags = -(-need // k) if need else 0
        return max(lags, self.dgp.mean_kind.order)

    def mc_config(self, T_grid=None) -> McConfig:
        if not self.models:
            raise ConfigError("this command requires at least one entry in 'models'")
        if T_grid is None:
            if self.experiment.T_grid:
                T_grid = self.experiment.T_grid
            else:
                T_grid = (self.first_T(),)
        return McConfig(
            dgp=self.dgp,
            models=self.models,
            schemes=self.schemes,
            T_grid=tuple(T_grid),
            reps=self.experiment.reps,
            seed=self.experiment.seed,
            max_lag=self.experiment.max_lag,
            crosscheck=self.experiment.crosscheck,
            allow_unreliable=self.experiment.allow_unreliable,
        )

    def with_experiment(self, **changes) -> "RunConfig":
        return replace(self, experiment=replace(self.experiment, **changes))


def canonical_json(d: dict) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    """sha256 of the resolved, canonically serialized configuration."""
    return hashlib.sha256(canonical_json(config.to_dict()).encode()).hexdigest()


def load_config(path) -> RunConfig:
    """Parse a JSON config file with line/field diagnostics on failure."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return RunConfig.from_dict(data)
