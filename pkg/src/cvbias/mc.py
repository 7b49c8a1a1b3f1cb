"""Monte Carlo engine: bias, MASE, bias-variance, and selection frequencies.

The quantity under study is the cross-term E[(1/T) sum_i mu_cv_i * eps_i]:
zero would make CV selection unbiased, and the engine estimates it per
index and pooled, with standard errors, across replications of a known
DGP. Replications are independent units of work: per-replication seeds are
derived by counter from the master seed, results land in replication-index
order, and block-structured reductions are fixed regardless of thread
count, so any thread count reproduces the single-threaded output
bit-for-bit.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import _seeding
from ._backend import backend_name
from ._backend import kernels as _k
from .cv import CvScheme, _check_training_sizes, _scheme_residuals, expanding_mask
from .dgp import DgpSpec, simulate
from .estimators import ModelSpec, ols_fit
from .exceptions import (
    ConfigError,
    InternalConsistencyError,
    NumericalError,
    ReliabilityError,
    SizeError,
)

# replication block size; fixed so reductions are invariant to thread count
REP_BLOCK = 512
# cells with more than this fraction of failed replications are unreliable
FAIL_LIMIT = 0.01
# tolerance for the exact sample-moment identity of the error decomposition
IDENTITY_RTOL = 1e-10


class Estimate(NamedTuple):
    """Monte Carlo estimate with its standard error and replication count."""

    value: float
    se: float
    n: int


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo experiment: DGP, candidates, schemes, sizes, seed."""

    dgp: DgpSpec
    models: tuple
    schemes: tuple
    T_grid: tuple
    reps: int
    seed: int
    max_lag: int | None = None
    crosscheck: bool = False
    allow_unreliable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "T_grid", tuple(int(t) for t in self.T_grid))
        if not self.models:
            raise ConfigError("McConfig requires at least one candidate model")
        if len({m.id for m in self.models}) != len(self.models):
            raise ConfigError("candidate model ids must be unique")
        if not self.schemes:
            raise ConfigError("McConfig requires at least one CV scheme")
        if not self.T_grid:
            raise ConfigError("McConfig requires a non-empty T_grid")
        if not isinstance(self.reps, int) or self.reps < 2:
            raise SizeError(f"reps must be an integer >= 2, got {self.reps!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.dgp.mean_kind.n_series > 1:
            raise ConfigError(
                "Monte Carlo experiments are per-equation: simulate VAR paths and "
                "evaluate equation views, or use a univariate DGP"
            )
        max_lag = self.resolved_max_lag()
        order = self.dgp.mean_kind.order
        for T in self.T_grid:
            if T < max_lag + order + 2:
                raise SizeError(
                    f"T={T} is too small for max_lag={max_lag} and DGP order {order}"
                )
            for m in self.models:
                if m.n_params >= T - 1:
                    raise SizeError(
                        f"model {m.id!r} has {m.n_params} parameters; too many for T={T}"
                    )

    def resolved_max_lag(self) -> int:
        """Regressor-matrix depth: explicit, or derived from the candidates."""
        need = max((max(m.columns) + 1 for m in self.models if m.columns), default=0)
        mean = self.dgp.mean_kind
        if mean.kind == "iid_regression":
            width = len(mean.beta)
            if need > width:
                raise ConfigError(
                    f"models reference regressor column {need - 1} but the DGP provides {width}"
                )
            return 0
        k = mean.n_series
        lags = -(-need // k) if need else 0
        if self.max_lag is not None:
            if not isinstance(self.max_lag, int) or self.max_lag < lags:
                raise ConfigError(
                    f"max_lag={self.max_lag!r} does not cover the deepest model lag {lags}"
                )
            return self.max_lag
        return lags


@dataclass
class CellReport:
    """Aggregates for one (model, scheme, T) cell."""

    model_id: str
    scheme_label: str
    T: int
    n_reps: int
    n_failed: int
    unreliable: bool
    mask: np.ndarray
    index_n: np.ndarray
    bias_by_index: np.ndarray
    bias_by_index_se: np.ndarray
    bias_pooled: Estimate
    bias_pooled_excl_last: Estimate
    mase_loo: Estimate
    mase_full: Estimate
    cv_mse_mean: Estimate
    err_mse: np.ndarray
    err_variance: np.ndarray
    err_sq_bias: np.ndarray


@dataclass
class SelectionCell:
    """Selection frequencies for one (scheme, T) across the candidate set."""

    scheme_label: str
    T: int
    n_reps: int
    n_effective: int
    selection_freq: dict
    min_ase_agreement: float
    excluded_counts: dict


@dataclass
class McReport:
    """All Monte Carlo aggregates of a run, keyed by cell."""

    cells: dict
    selection: dict
    seed: int
    reps: int
    backend: str
    threads: int
    wall_time: float

    def cell(self, model_id: str, scheme, T: int) -> CellReport:
        label = scheme.label if isinstance(scheme, CvScheme) else str(scheme)
        return self.cells[(model_id, label, int(T))]


def _estimate(values: np.ndarray) -> Estimate:
    n = values.size
    if n == 0:
        return Estimate(float("nan"), float("nan"), 0)
    if n == 1:
        return Estimate(float(values[0]), float("nan"), 1)
    return Estimate(float(values.mean()), float(values.std(ddof=1) / np.sqrt(n)), n)


def run_mc(config: McConfig, threads: int = 1) -> McReport:
    """Run the full experiment and aggregate every cell.

    Deterministic for a fixed config seed at any thread count.
    """
    start = time.perf_counter()
    threads = max(1, int(threads))
    max_lag = config.resolved_max_lag()
    cells: dict = {}
    selection: dict = {}
    for T in config.T_grid:
        t_cells, t_sel = _run_single_T(config, T, max_lag, threads)
        cells.update(t_cells)
        selection.update(t_sel)
    return McReport(
        cells=cells,
        selection=selection,
        seed=config.seed,
        reps=config.reps,
        backend=backend_name(),
        threads=threads,
        wall_time=time.perf_counter() - start,
    )


def _run_single_T(config: McConfig, T: int, max_lag: int, threads: int):
    R = config.reps
    models = config.models
    schemes = config.schemes
    M, S = len(models), len(schemes)

    # fail fast on scheme/sample mismatches before burning replications
    for scheme in schemes:
        for model in models:
            _check_training_sizes(scheme, T, model.n_params, model.id)

    masks = np.ones((S, M, T), dtype=bool)
    for s, scheme in enumerate(schemes):
        if scheme.kind == "expanding_window":
            for m, model in enumerate(models):
                masks[s, m] = expanding_mask(scheme, T, model.n_params)

    # per-index accumulators: [prod, prod^2, err, err^2] per (scheme, model)
    sums = np.zeros((S, M, 4, T))
    # per-replication scalars: [pooled, pooled_excl_last, ase_cv, ase_full, cv_mse]
    stats = np.full((S, R, M, 5), np.nan)
    ok = np.zeros((S, R, M), dtype=bool)

    design_seed = None
    if config.dgp.mean_kind.kind == "iid_regression" and config.dgp.mean_kind.fixed_design:
        design_seed = _seeding.derive_seed(config.seed, _seeding.NS_DESIGN, T)

    def run_block(b0: int, b1: int) -> np.ndarray:
        local = np.zeros((S, M, 4, T))
        for r in range(b0, b1):
            rep_seed = _seeding.derive_seed(config.seed, _seeding.NS_REP, T, r)
            try:
                path = simulate(config.dgp, T, max_lag, rep_seed, design_seed=design_seed)
            except NumericalError:
                continue
            y = path.y
            mu_t = path.mu_true
            eps_t = path.eps_true
            for m, model in enumerate(models):
                try:
                    x = model.design(path.x_full)
                    full = ols_fit(x, y, model_id=model.id)
                except NumericalError:
                    continue
                mu_hat = x @ full.beta if x.shape[1] else np.zeros(T)
                for s, scheme in enumerate(schemes):
                    try:
                        res = _scheme_residuals(
                            x, y, full, scheme, model.id, crosscheck=config.crosscheck
                        )
                    except NumericalError:
                        continue
                    stats[s, r, m] = _k.accumulate_rep(
                        local[s, m], res.mu, res.eps, mu_t, eps_t, mu_hat, res.mask
                    )
                    ok[s, r, m] = True
        return local

    blocks = [(b, min(b + REP_BLOCK, R)) for b in range(0, R, REP_BLOCK)]
    if threads <= 1:
        for b0, b1 in blocks:
            sums += run_block(b0, b1)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_block, b0, b1) for b0, b1 in blocks]
            # reduce in block order, not completion order
            for fut in futures:
                sums += fut.result()

    cells = {}
    for s, scheme in enumerate(schemes):
        for m, model in enumerate(models):
            cells[(model.id, scheme.label, T)] = _aggregate_cell(
                config, model, scheme, T, masks[s, m], sums[s, m],
                stats[s, :, m, :], ok[s, :, m],
            )

    selection = {}
    for s, scheme in enumerate(schemes):
        selection[(scheme.label, T)] = _aggregate_selection(
            models, scheme, T, stats[s, :, :, 4], stats[s, :, :, 2], ok[s]
        )
    return cells, selection


def _aggregate_cell(config, model, scheme, T, mask, sums, stats, ok) -> CellReport:
    R = config.reps
    n_ok = int(ok.sum())
    n_failed = R - n_ok
    unreliable = n_failed > FAIL_LIMIT * R
    where = f"cell (model={model.id!r}, scheme={scheme.label}, T={T})"
    if unreliable and not config.allow_unreliable:
        raise ReliabilityError(
            f"{where}: {n_failed}/{R} replications failed (> {FAIL_LIMIT:.0%}); "
            "rerun with allow_unreliable to keep the cell"
        )
    if n_ok < 2:
        raise ReliabilityError(f"{where}: fewer than 2 usable replications")

    index_n = np.where(mask, n_ok, 0)
    mean_prod = np.full(T, np.nan)
    se_prod = np.full(T, np.nan)
    err_mse = np.full(T, np.nan)
    err_var = np.full(T, np.nan)
    err_sqb = np.full(T, np.nan)

    mm = mask
    mean_prod[mm] = sums[0, mm] / n_ok
    var_prod = (sums[1, mm] - n_ok * mean_prod[mm] ** 2) / (n_ok - 1)
    se_prod[mm] = np.sqrt(np.maximum(var_prod, 0.0) / n_ok)

    err_mse[mm] = sums[3, mm] / n_ok
    mean_err = sums[2, mm] / n_ok
    err_sqb[mm] = mean_err ** 2
    err_var[mm] = err_mse[mm] - err_sqb[mm]
    gap = np.abs(err_mse[mm] - (err_var[mm] + err_sqb[mm]))
    rel = gap / np.maximum(err_mse[mm], 1e-300)
    if rel.size and rel.max() >= IDENTITY_RTOL:
        raise InternalConsistencyError(
            f"{where}: bias-variance sample-moment identity violated "
            f"(max relative gap {rel.max():.3g})"
        )

    pooled = stats[:, 0]
    pooled_lt = stats[:, 1]
    return CellReport(
        model_id=model.id,
        scheme_label=scheme.label,
        T=T,
        n_reps=R,
        n_failed=n_failed,
        unreliable=unreliable,
        mask=mask.copy(),
        index_n=index_n,
        bias_by_index=mean_prod,
        bias_by_index_se=se_prod,
        bias_pooled=_estimate(pooled[ok]),
        bias_pooled_excl_last=_estimate(pooled_lt[ok & ~np.isnan(pooled_lt)]),
        mase_loo=_estimate(stats[:, 2][ok]),
        mase_full=_estimate(stats[:, 3][ok]),
        cv_mse_mean=_estimate(stats[:, 4][ok]),
        err_mse=err_mse,
        err_variance=err_var,
        err_sq_bias=err_sqb,
    )


def _aggregate_selection(models, scheme, T, cvm, ase_cv, ok) -> SelectionCell:
    R, M = cvm.shape
    # scan order encodes the tie-break: fewer parameters, then lower id
    order = sorted(range(M), key=lambda m: (models[m].n_params, models[m].id))
    C = cvm[:, order]
    A = ase_cv[:, order]
    valid = ~np.isnan(C).all(axis=1)
    n_eff = int(valid.sum())
    counts = dict.fromkeys((models[m].id for m in order), 0)
    agreement = float("nan")
    if n_eff:
        sel = np.nanargmin(C[valid], axis=1)
        ids = [models[order[j]].id for j in sel]
        for mid in ids:
            counts[mid] += 1
        valid_a = ~np.isnan(A[valid]).all(axis=1)
        if valid_a.any():
            sel_a = np.nanargmin(A[valid][valid_a], axis=1)
            agreement = float(np.mean(sel[valid_a] == sel_a))
    freq = {mid: (c / n_eff if n_eff else float("nan")) for mid, c in counts.items()}
    return SelectionCell(
        scheme_label=scheme.label,
        T=T,
        n_reps=R,
        n_effective=n_eff,
        selection_freq=freq,
        min_ase_agreement=agreement,
        excluded_counts={models[m].id: int(R - ok[:, m].sum()) for m in range(M)},
    )


def mc_bias_estimate(config: McConfig, threads: int = 1) -> McReport:
    """Estimate the bias term per index and pooled, with standard errors.

    bias_by_index[i] is the MC mean of mu_cv_i * eps_i across replications;
    bias_pooled averages over indices first, then replications (its SE is
    the across-replication standard error of that per-replication mean).
    bias_pooled_excl_last drops the final index, where the bias vanishes
    for autoregressive DGPs under leave-one-out.
    """
    return run_mc(config, threads=threads)


def mc_mase(config: McConfig, threads: int = 1) -> McReport:
    """Estimate the held-out and full-sample mean average squared errors."""
    return run_mc(config, threads=threads)


def mc_selection(config: McConfig, threads: int = 1) -> McReport:
    """Selection frequencies per scheme plus agreement with the min-ASE pick."""
    return run_mc(config, threads=threads)


def mc_bias_variance(
    config: McConfig, model: ModelSpec, scheme: CvScheme, T: int, threads: int = 1
) -> CellReport:
    """Per-index variance and squared-bias of the held-out mean estimates.

    Computed replication-wise on the error mu_cv_i - mu_i (both vary per
    replication for time-series DGPs): the variance component is the
    across-replication variance of that error, the squared-bias component
    the square of its mean, and the two sum to the MC estimate of
    E[(mu_i - mu_cv_i)^2] as an exact sample-moment identity.
    """
    narrowed = replace(config, models=(model,), schemes=(scheme,), T_grid=(int(T),))
    report = run_mc(narrowed, threads=threads)
    return report.cells[(model.id, scheme.label, int(T))]
