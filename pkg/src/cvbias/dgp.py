"""Data-generating processes with known conditional means and errors.

Every simulated path stores the dependent values together with the exact
conditional means and errors used in the recursion, so downstream code can
decompose held-out squared errors against the truth instead of estimating
it. Supported conditional means: a stationary AR(1), a stationary VAR(p),
and an i.i.d. regression with exogenous Gaussian regressors. Supported
error processes: i.i.d. Gaussian and ARCH(1) — the latter is the canonical
process whose errors are a martingale difference sequence (zero conditional
mean) while remaining serially dependent through their squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _seeding
from ._backend import kernels as _k
from .exceptions import ConfigError, SizeError, StationarityError

ERROR_KINDS = ("iid_gaussian", "arch1")
MEAN_KINDS = ("ar1", "var_p", "iid_regression")

# relative tolerance for the arch1 variance-consistency invariant
_ARCH_VAR_RTOL = 1e-8


def _as_nested_tuple(a):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return tuple(_as_nested_tuple(row) for row in arr)


def _reject_unknown(d: dict, allowed, where: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")


@dataclass(frozen=True)
class ErrorSpec:
    """Error-process description.

    kind is 'iid_gaussian' or 'arch1'; sigma2 is the unconditional error
    variance in both cases. For arch1 the recursion parameters must satisfy
    arch_omega / (1 - arch_alpha) == sigma2. ``zero_noise`` is a test-only
    switch that emits identically-zero errors while keeping the declared
    variance for bookkeeping.
    """

    kind: str
    sigma2: float
    arch_omega: float | None = None
    arch_alpha: float | None = None
    zero_noise: bool = False

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise ConfigError(f"errors.kind must be one of {ERROR_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ConfigError(f"errors.sigma2 must be finite and > 0, got {self.sigma2!r}")
        if self.kind == "iid_gaussian":
            if self.arch_omega is not None or self.arch_alpha is not None:
                raise ConfigError("errors: arch_omega/arch_alpha are only valid for kind 'arch1'")
        else:
            if self.arch_omega is None or self.arch_alpha is None:
                raise ConfigError("errors: arch1 requires arch_omega and arch_alpha")
            if not (math.isfinite(self.arch_omega) and self.arch_omega > 0):
                raise ConfigError(f"errors.arch_omega must be > 0, got {self.arch_omega!r}")
            if not (0.0 <= self.arch_alpha < 1.0):
                raise ConfigError(f"errors.arch_alpha must lie in [0, 1), got {self.arch_alpha!r}")
            implied = self.arch_omega / (1.0 - self.arch_alpha)
            if abs(implied - self.sigma2) > _ARCH_VAR_RTOL * self.sigma2:
                raise ConfigError(
                    "errors: arch_omega/(1-arch_alpha) must equal sigma2 "
                    f"(implied {implied!r}, declared {self.sigma2!r})"
                )

    @classmethod
    def gaussian(cls, sigma2: float = 1.0) -> "ErrorSpec":
        return cls(kind="iid_gaussian", sigma2=float(sigma2))

    @classmethod
    def arch(cls, sigma2: float, alpha: float) -> "ErrorSpec":
        """ARCH(1) errors with the stated unconditional variance."""
        return cls(
            kind="arch1",
            sigma2=float(sigma2),
            arch_omega=float(sigma2) * (1.0 - float(alpha)),
            arch_alpha=float(alpha),
        )

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "sigma2": self.sigma2, "zero_noise": self.zero_noise}
        if self.kind == "arch1":
            d["arch_omega"] = self.arch_omega
            d["arch_alpha"] = self.arch_alpha
        return d

    @classmethod
    def from_dict(cls, d: dict, where: str = "errors") -> "ErrorSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object")
        _reject_unknown(d, ("kind", "sigma2", "arch_omega", "arch_alpha", "zero_noise"), where)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class MeanSpec:
    """Conditional-mean description (the 'mean_kind' of a DGP).

    ar1:            y_i = rho * y_{i-1} + e_i, |rho| < 1.
    var_p:          y_i = sum_l A[l] y_{i-l} + e_i with a stable companion matrix.
    iid_regression: y_i = x_i beta + e_i with x_i ~ N(0, regressor_cov), drawn
                    independently of the errors. ``fixed_design`` lets callers
                    pin the regressor draw across replications (see simulate's
                    design_seed).
    """

    kind: str
    rho: float | None = None
    A: tuple | None = None
    k: int | None = None
    p: int | None = None
    beta: tuple | None = None
    regressor_cov: tuple | None = None
    fixed_design: bool = False

    def __post_init__(self):
        if self.kind not in MEAN_KINDS:
            raise ConfigError(f"mean_kind.kind must be one of {MEAN_KINDS}, got {self.kind!r}")
        if self.kind == "ar1":
            if self.rho is None or not math.isfinite(self.rho):
                raise ConfigError("mean_kind: ar1 requires a finite rho")
            if abs(self.rho) >= 1.0:
                raise StationarityError(f"ar1 requires |rho| < 1, got rho={self.rho!r}")
        elif self.kind == "var_p":
            if self.A is None:
                raise ConfigError("mean_kind: var_p requires coefficient matrices A")
            a = np.asarray(self.A, dtype=float)
            if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[0] < 1:
                raise ConfigError("mean_kind: A must have shape (p, k, k)")
            object.__setattr__(self, "A", _as_nested_tuple(a))
            p, k, _ = a.shape
            if self.p is None:
                object.__setattr__(self, "p", p)
            if self.k is None:
                object.__setattr__(self, "k", k)
            if self.p != p or self.k != k:
                raise ConfigError(
                    f"mean_kind: declared (k={self.k}, p={self.p}) conflicts with A shape {a.shape}"
                )
            radius = max(abs(np.linalg.eigvals(_companion(a))))
            if not radius < 1.0:
                raise StationarityError(
                    f"var_p companion spectral radius must be < 1, got {radius:.6g}"
                )
        else:
            if self.beta is None or self.regressor_cov is None:
                raise ConfigError("mean_kind: iid_regression requires beta and regressor_cov")
            b = np.asarray(self.beta, dtype=float)
            c = np.asarray(self.regressor_cov, dtype=float)
            if b.ndim != 1 or b.size < 1:
                raise ConfigError("mean_kind: beta must be a non-empty vector")
            if c.shape != (b.size, b.size):
                raise ConfigError(
                    f"mean_kind: regressor_cov shape {c.shape} does not match beta length {b.size}"
                )
            if not np.allclose(c, c.T, rtol=0, atol=1e-12 * max(1.0, np.abs(c).max())):
                raise ConfigError("mean_kind: regressor_cov must be symmetric")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError as exc:
                raise ConfigError("mean_kind: regressor_cov must be positive definite") from exc
            object.__setattr__(self, "beta", _as_nested_tuple(b))
            object.__setattr__(self, "regressor_cov", _as_nested_tuple(c))

    @classmethod
    def ar1(cls, rho: float) -> "MeanSpec":
        return cls(kind="ar1", rho=float(rho))

    @classmethod
    def var_p(cls, A, k: int | None = None, p: int | None = None) -> "MeanSpec":
        return cls(kind="var_p", A=_as_nested_tuple(A), k=k, p=p)

    @classmethod
    def iid_regression(cls, beta, regressor_cov, fixed_design: bool = False) -> "MeanSpec":
        return cls(
            kind="iid_regression",
            beta=_as_nested_tuple(beta),
            regressor_cov=_as_nested_tuple(regressor_cov),
            fixed_design=fixed_design,
        )

    @property
    def order(self) -> int:
        """Lag order of the recursion (0 for iid_regression)."""
        if self.kind == "ar1":
            return 1
        if self.kind == "var_p":
            return self.p
        return 0

    @property
    def n_series(self) -> int:
        return self.k if self.kind == "var_p" else 1

    def regressor_width(self, max_lag: int) -> int:
        """Number of columns the regressor matrix will carry."""
        if self.kind == "iid_regression":
            return len(self.beta)
        return self.n_series * max_lag

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "ar1":
            d["rho"] = self.rho
        elif self.kind == "var_p":
            d["A"] = [[list(row) for row in mat] for mat in self.A]
            d["k"] = self.k
            d["p"] = self.p
        else:
            d["beta"] = list(self.beta)
            d["regressor_cov"] = [list(row) for row in self.regressor_cov]
            d["fixed_design"] = self.fixed_design
        return d

    @classmethod
    def from_dict(cls, d: dict, where: str = "mean_kind") -> "MeanSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object")
        _reject_unknown(
            d, ("kind", "rho", "A", "k", "p", "beta", "regressor_cov", "fixed_design"), where
        )
        raw = dict(d)
        for key in ("A", "beta", "regressor_cov"):
            if raw.get(key) is not None:
                raw[key] = _as_nested_tuple(raw[key])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from exc


def _companion(a: np.ndarray) -> np.ndarray:
    p, k, _ = a.shape
    comp = np.zeros((k * p, k * p))
    comp[:k, :] = np.concatenate([a[l] for l in range(p)], axis=1)
    if p > 1:
        comp[k:, : k * (p - 1)] = np.eye(k * (p - 1))
    return comp


@dataclass(frozen=True)
class DgpSpec:
    """Full data-generating process: conditional mean plus error process."""

    mean_kind: MeanSpec
    errors: ErrorSpec
    burn_in: int = 1000

    def __post_init__(self):
        if not isinstance(self.burn_in, int) or self.burn_in < 0:
            raise ConfigError(f"burn_in must be a non-negative integer, got {self.burn_in!r}")
        if self.errors.kind == "arch1" and self.mean_kind.n_series > 1:
            raise ConfigError("arch1 errors are univariate; multivariate ARCH is unsupported")

    def to_dict(self) -> dict:
        return {
            "mean_kind": self.mean_kind.to_dict(),
            "errors": self.errors.to_dict(),
            "burn_in": self.burn_in,
        }

    @classmethod
    def from_dict(cls, d: dict, where: str = "dgp") -> "DgpSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object")
        _reject_unknown(d, ("mean_kind", "errors", "burn_in"), where)
        if "mean_kind" not in d or "errors" not in d:
            raise ConfigError(f"{where}: requires 'mean_kind' and 'errors'")
        return cls(
            mean_kind=MeanSpec.from_dict(d["mean_kind"], f"{where}.mean_kind"),
            errors=ErrorSpec.from_dict(d["errors"], f"{where}.errors"),
            burn_in=d.get("burn_in", 1000),
        )


@dataclass
class SimulatedPath:
    """One realized sample with its exact decomposition y = mu_true + eps_true.

    x_full holds everything any candidate model may use at time i: for
    time-series DGPs, row i carries the lags y_{i-1} .. y_{i-max_lag}
    (lag-major, series-minor for VAR); for iid_regression it carries the
    drawn regressors. All three of y, mu_true and eps_true are stored at
    generation time, so y - mu_true - eps_true is exactly zero.
    """

    T: int
    y: np.ndarray
    x_full: np.ndarray
    mu_true: np.ndarray
    eps_true: np.ndarray
    n_series: int = 1
    regressor_names: tuple = ()

    def equation(self, j: int) -> "SimulatedPath":
        """Univariate view of equation j of a VAR path (shares x_full)."""
        if self.y.ndim == 1:
            raise ConfigError("equation() is only meaningful for multivariate paths")
        if not 0 <= j < self.n_series:
            raise ConfigError(f"equation index {j} out of range for k={self.n_series}")
        return SimulatedPath(
            T=self.T,
            y=self.y[:, j],
            x_full=self.x_full,
            mu_true=self.mu_true[:, j],
            eps_true=self.eps_true[:, j],
            n_series=1,
            regressor_names=self.regressor_names,
        )


def _sample_errors(spec: ErrorSpec, n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if spec.zero_noise:
        return np.zeros(n) if k == 1 else np.zeros((n, k))
    sd = math.sqrt(spec.sigma2)
    if spec.kind == "iid_gaussian":
        z = rng.standard_normal(n if k == 1 else (n, k))
        return sd * z
    z = rng.standard_normal(n)
    return _k.arch1_errors(z, spec.arch_omega, spec.arch_alpha, spec.sigma2)


def sample_error_process(spec: ErrorSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` errors from the process (exposed for tests).

    iid_gaussian: independent N(0, sigma2) draws. arch1: eps_i = s_i * z_i
    with s_i^2 = arch_omega + arch_alpha * eps_{i-1}^2, the recursion
    initialized at the unconditional variance.
    """
    if not isinstance(n, int) or n < 1:
        raise SizeError(f"n must be a positive integer, got {n!r}")
    return _sample_errors(spec, n, 1, _seeding.stream(seed, _seeding.ERRORS))


def simulate(
    spec: DgpSpec,
    T: int,
    max_lag: int,
    seed: int,
    *,
    design_seed: int | None = None,
) -> SimulatedPath:
    """Simulate one path of length T with max_lag regressor columns available.

    The recursion starts from a zero state and discards ``spec.burn_in``
    observations, which approximates a draw from the stationary
    distribution. Deterministic for fixed (spec, T, max_lag, seed).

    Parameters
    ----------
    spec : DgpSpec
        Validated process description (nonstationary specs never get here).
    T : int
        Number of usable rows returned after burn-in and lag alignment.
    max_lag : int
        Lag depth of x_full for time-series DGPs (ignored for
        iid_regression, where x_full holds the drawn regressors).
    seed : int
        64-bit seed; one independent substream per purpose (errors,
        regressors) is derived from it.
    design_seed : int, optional
        For iid_regression only: draw the regressors from a stream keyed by
        this seed instead, so many replications can share one fixed design.
    """
    if not isinstance(T, int) or not isinstance(max_lag, int) or max_lag < 0:
        raise SizeError(f"T and max_lag must be integers with max_lag >= 0, got {T!r}, {max_lag!r}")
    mean = spec.mean_kind
    if T < max_lag + mean.order + 2:
        raise SizeError(
            f"T={T} is too small: need at least max_lag + order + 2 = {max_lag + mean.order + 2}"
        )

    if mean.kind == "iid_regression":
        p = len(mean.beta)
        reg_seed = seed if design_seed is None else design_seed
        rng_x = _seeding.stream(reg_seed, _seeding.REGRESSORS)
        chol = np.linalg.cholesky(np.asarray(mean.regressor_cov, dtype=float))
        x = rng_x.standard_normal((T, p)) @ chol.T
        # error-process warm-up still applies (arch1 has its own dynamics)
        eps_star = _sample_errors(
            spec.errors, spec.burn_in + T, 1, _seeding.stream(seed, _seeding.ERRORS)
        )[spec.burn_in :]
        mu = x @ np.asarray(mean.beta, dtype=float)
        y = mu + eps_star
        return SimulatedPath(
            T=T,
            y=y,
            x_full=x,
            mu_true=mu,
            eps_true=y - mu,
            n_series=1,
            regressor_names=tuple(f"x_{j + 1}" for j in range(p)),
        )

    if spec.burn_in < max(1, max_lag):
        raise SizeError(
            f"burn_in={spec.burn_in} must be at least max(1, max_lag)={max(1, max_lag)} "
            "for time-series DGPs"
        )
    k = mean.n_series
    n_total = spec.burn_in + T
    eps_star = _sample_errors(spec.errors, n_total, k, _seeding.stream(seed, _seeding.ERRORS))
    if mean.kind == "ar1":
        y_full, mu_full, resid_full = _k.ar1_path(eps_star, mean.rho)
    else:
        y_full, mu_full, resid_full = _k.var_path(
            eps_star.reshape(n_total, k), np.asarray(mean.A, dtype=float)
        )
    b = spec.burn_in
    y2d = y_full.reshape(n_total, k) if k == 1 else y_full
    x = np.empty((T, k * max_lag))
    for lag in range(1, max_lag + 1):
        x[:, (lag - 1) * k : lag * k] = y2d[b - lag : b - lag + T]
    if k == 1:
        names = tuple(f"lag_{lag}" for lag in range(1, max_lag + 1))
    else:
        names = tuple(
            f"lag_{lag}_s{s + 1}" for lag in range(1, max_lag + 1) for s in range(k)
        )
    return SimulatedPath(
        T=T,
        y=y_full[b:],
        x_full=x,
        mu_true=mu_full[b:],
        eps_true=resid_full[b:],
        n_series=k,
        regressor_names=names,
    )
