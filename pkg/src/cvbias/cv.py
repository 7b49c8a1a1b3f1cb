"""Cross-validation schemes, the CV MSE, and its exact decomposition.

The central identity: with y = mu + eps and held-out estimates mu_cv,

    mean(eps_cv^2) = mean(eps^2) + 2 mean(mu eps) - 2 mean(mu_cv eps)
                     + mean((mu - mu_cv)^2)

holds exactly, term by term, when the true mu and eps are known. Every
decomposition computed here verifies it to 1e-10 relative tolerance and
treats a violation as an internal fault, not a warning. The
2*mean(mu_cv*eps) cross-term is the bias carrier: its expectation is zero
for i.i.d. data with exogenous regressors but not, in general, for
dependent data, which is what the Monte Carlo engine measures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._backend import kernels as _k
from .estimators import FitResult, ModelSpec, _loo_from_fit, ols_fit
from .exceptions import (
    ConfigError,
    InternalConsistencyError,
    NumericalError,
    SingularityError,
    SizeError,
)

SCHEME_KINDS = ("loo", "h_block", "k_fold", "expanding_window")

# relative tolerance for the decomposition identity
IDENTITY_RTOL = 1e-10


@dataclass(frozen=True)
class CvScheme:
    """Cross-validation scheme description.

    loo:              training set excludes only the test index.
    h_block:          training set excludes all j with |j - i| <= h;
                      h=None resolves to ceil(T^(1/4)) at evaluation time,
                      and h=0 is identical to loo by construction.
    k_fold:           k folds, contiguous blocks or strided (i mod k).
    expanding_window: index i is predicted from observations before it
                      (training rows 1 .. i-horizon, one-based); indices
                      with fewer than min_train training rows are masked
                      out and reported, never silently averaged over.
    """

    kind: str
    h: int | None = None
    k: int | None = None
    contiguous: bool = True
    min_train: int | None = None
    horizon: int = 1

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ConfigError(f"scheme kind must be one of {SCHEME_KINDS}, got {self.kind!r}")
        if self.kind == "h_block" and self.h is not None and (not isinstance(self.h, int) or self.h < 0):
            raise ConfigError(f"h_block: h must be an integer >= 0, got {self.h!r}")
        if self.kind == "k_fold":
            if not isinstance(self.k, int) or self.k < 2:
                raise ConfigError(f"k_fold: k must be an integer >= 2, got {self.k!r}")
        if self.kind == "expanding_window":
            if not isinstance(self.min_train, int) or self.min_train < 1:
                raise ConfigError(
                    f"expanding_window: min_train must be an integer >= 1, got {self.min_train!r}"
                )
            if not isinstance(self.horizon, int) or self.horizon < 1:
                raise ConfigError(
                    f"expanding_window: horizon must be an integer >= 1, got {self.horizon!r}"
                )

    @classmethod
    def loo(cls) -> "CvScheme":
        return cls(kind="loo")

    @classmethod
    def h_block(cls, h: int | None = None) -> "CvScheme":
        return cls(kind="h_block", h=h)

    @classmethod
    def k_fold(cls, k: int, contiguous: bool = True) -> "CvScheme":
        return cls(kind="k_fold", k=k, contiguous=contiguous)

    @classmethod
    def expanding_window(cls, min_train: int, horizon: int = 1) -> "CvScheme":
        return cls(kind="expanding_window", min_train=min_train, horizon=horizon)

    def effective_h(self, T: int) -> int:
        """Exclusion half-width for h_block; default scales as ceil(T^(1/4))."""
        if self.h is not None:
            return self.h
        return int(math.ceil(T ** 0.25))

    @property
    def label(self) -> str:
        if self.kind == "loo":
            return "loo"
        if self.kind == "h_block":
            return f"h_block({'auto' if self.h is None else self.h})"
        if self.kind == "k_fold":
            return f"k_fold({self.k},{'contiguous' if self.contiguous else 'strided'})"
        return f"expanding_window({self.min_train},{self.horizon})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "h_block":
            d["h"] = self.h
        elif self.kind == "k_fold":
            d["k"] = self.k
            d["contiguous"] = self.contiguous
        elif self.kind == "expanding_window":
            d["min_train"] = self.min_train
            d["horizon"] = self.horizon
        return d

    @classmethod
    def from_dict(cls, d: dict, where: str = "scheme") -> "CvScheme":
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object")
        unknown = sorted(set(d) - {"kind", "h", "k", "contiguous", "min_train", "horizon"})
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from exc


class CvResiduals(NamedTuple):
    eps: np.ndarray
    mu: np.ndarray
    mask: np.ndarray


def expanding_mask(scheme: CvScheme, T: int, n_params: int) -> np.ndarray:
    """Evaluated indices for an expanding window: enough history to fit."""
    need = max(scheme.min_train, n_params + 1)
    start = need + scheme.horizon - 1
    mask = np.zeros(T, dtype=bool)
    mask[start:] = True
    return mask


def _check_training_sizes(scheme: CvScheme, T: int, p: int, model_id: str) -> None:
    if p >= T - 1:
        raise SizeError(
            f"model {model_id!r} with {p} parameters cannot be cross-validated on T={T}"
        )
    if scheme.kind == "h_block":
        h = scheme.effective_h(T)
        smallest = T - (2 * h + 1)
        if smallest <= 0:
            raise SizeError(
                f"h_block(h={h}) leaves an empty training set for interior indices at T={T}"
            )
        if smallest <= p:
            raise SizeError(
                f"h_block(h={h}) leaves only {smallest} training rows for {p} parameters at T={T}"
            )
    elif scheme.kind == "k_fold":
        if scheme.k > T:
            raise SizeError(f"k_fold: k={scheme.k} exceeds T={T}")
        largest_fold = -(-T // scheme.k)
        if T - largest_fold <= p:
            raise SizeError(
                f"k_fold(k={scheme.k}) leaves too few training rows for {p} parameters at T={T}"
            )
    elif scheme.kind == "expanding_window":
        if not expanding_mask(scheme, T, p).any():
            raise SizeError(
                f"expanding_window(min_train={scheme.min_train}, horizon={scheme.horizon}) "
                f"evaluates no indices at T={T}"
            )


def _kfold_residuals(x, y, full: FitResult, scheme: CvScheme, model_id: str):
    T, p = x.shape
    mu = np.empty(T)
    if scheme.contiguous:
        folds = np.array_split(np.arange(T), scheme.k)
    else:
        idx = np.arange(T)
        folds = [idx[idx % scheme.k == f] for f in range(scheme.k)]
    for fold in folds:
        if fold.size == 0:
            continue
        xf = x[fold]
        a = full.gram - xf.T @ xf
        b = full.xty - xf.T @ y[fold]
        s = np.linalg.svd(a, compute_uv=False)
        if s[0] <= 0 or s[-1] / s[0] <= _k.PIVOT_RTOL:
            raise SingularityError(
                "training set is numerically singular",
                model_id=model_id,
                index=int(fold[0]),
            )
        beta = np.linalg.solve(a, b)
        mu[fold] = xf @ beta
    eps = y - mu
    return mu, eps


def _scheme_residuals(
    x: np.ndarray,
    y: np.ndarray,
    full: FitResult,
    scheme: CvScheme,
    model_id: str,
    crosscheck: bool = False,
) -> CvResiduals:
    """Held-out predictions for an assembled design matrix and cached full fit."""
    T, p = x.shape
    _check_training_sizes(scheme, T, p, model_id)
    kind = scheme.kind
    h = scheme.effective_h(T) if kind == "h_block" else None
    if kind == "loo" or (kind == "h_block" and h == 0):
        if p == 0:
            mu = np.zeros(T)
            eps = y.copy()
        else:
            mu, eps = _loo_from_fit(x, y, full, model_id, crosscheck=crosscheck)
        return CvResiduals(eps=eps, mu=mu, mask=np.ones(T, dtype=bool))
    if p == 0:
        mu = np.zeros(T)
        eps = y.copy()
        mask = expanding_mask(scheme, T, 0) if kind == "expanding_window" else np.ones(T, dtype=bool)
        return CvResiduals(eps=eps, mu=mu, mask=mask)
    if kind == "h_block":
        mu, eps, bad = _k.hblock_arrays(x, y, full.gram, full.xty, h)
        if bad >= 0:
            raise SingularityError(
                f"training set for scheme {scheme.label} is numerically singular",
                model_id=model_id,
                index=int(bad),
            )
        return CvResiduals(eps=eps, mu=mu, mask=np.ones(T, dtype=bool))
    if kind == "k_fold":
        mu, eps = _kfold_residuals(x, y, full, scheme, model_id)
        return CvResiduals(eps=eps, mu=mu, mask=np.ones(T, dtype=bool))
    mask = expanding_mask(scheme, T, p)
    start = int(np.argmax(mask))
    mu, eps, bad = _k.expanding_arrays(x, y, start, scheme.horizon)
    if bad >= 0:
        raise SingularityError(
            f"training set for scheme {scheme.label} is numerically singular",
            model_id=model_id,
            index=int(bad),
        )
    return CvResiduals(eps=eps, mu=mu, mask=mask)


def cv_residuals(path, model: ModelSpec, scheme: CvScheme, crosscheck: bool = False) -> CvResiduals:
    """Held-out residuals and conditional-mean estimates for one candidate.

    Returns vectors aligned to the path plus the mask of evaluated indices
    (all True except under expanding_window). For multivariate paths use
    ``path.equation(j)`` first.
    """
    y = np.asarray(path.y, dtype=float)
    if y.ndim != 1:
        raise ConfigError("cv_residuals needs a univariate path; use path.equation(j)")
    x = model.design(np.asarray(path.x_full, dtype=float))
    full = ols_fit(x, y, model_id=model.id)
    return _scheme_residuals(x, y, full, scheme, model.id, crosscheck=crosscheck)


def cv_mse(eps: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean squared held-out residual over the evaluated indices."""
    eps = np.asarray(eps, dtype=float)
    if mask is not None:
        eps = eps[np.asarray(mask, dtype=bool)]
    if eps.size == 0:
        raise SizeError("no evaluated indices: cannot compute a CV MSE")
    return float(np.mean(eps * eps))


@dataclass
class CvDecomposition:
    """The CV MSE and its four independently computed terms.

    cv_mse = term_eps2 + term_mu_eps - term_muhat_eps + term_ase, verified
    to IDENTITY_RTOL at construction time. term_muhat_eps is stored with a
    positive sign and subtracted in the identity.
    """

    term_eps2: float
    term_mu_eps: float
    term_muhat_eps: float
    term_ase: float
    cv_mse: float
    n_evaluated: int

    @property
    def identity_gap(self) -> float:
        total = self.term_eps2 + self.term_mu_eps - self.term_muhat_eps + self.term_ase
        return abs(self.cv_mse - total) / max(self.cv_mse, 1e-300)


def decompose_cv_mse(
    path,
    model: ModelSpec,
    scheme: CvScheme,
    crosscheck: bool = False,
    use_full_sample: bool = False,
) -> CvDecomposition:
    """Decompose the CV MSE against the path's true means and errors.

    Each term is computed from the stored mu_true/eps_true, not by
    algebraic rearrangement, so the identity check has teeth. With
    ``use_full_sample`` the full-sample fitted values replace the held-out
    ones (the same decomposition applies to full-sample residuals).
    """
    y = np.asarray(path.y, dtype=float)
    if use_full_sample:
        x = model.design(np.asarray(path.x_full, dtype=float))
        full = ols_fit(x, y, model_id=model.id)
        mu = x @ full.beta if x.shape[1] else np.zeros(y.shape[0])
        res = CvResiduals(eps=y - mu, mu=mu, mask=np.ones(y.shape[0], dtype=bool))
    else:
        res = cv_residuals(path, model, scheme, crosscheck=crosscheck)
    m = res.mask
    n = int(m.sum())
    if n == 0:
        raise SizeError("no evaluated indices: cannot decompose")
    eps_t = path.eps_true[m]
    mu_t = path.mu_true[m]
    mu_cv = res.mu[m]
    eps_cv = res.eps[m]
    out = CvDecomposition(
        term_eps2=float(np.mean(eps_t * eps_t)),
        term_mu_eps=float(2.0 * np.mean(mu_t * eps_t)),
        term_muhat_eps=float(2.0 * np.mean(mu_cv * eps_t)),
        term_ase=float(np.mean((mu_t - mu_cv) ** 2)),
        cv_mse=float(np.mean(eps_cv * eps_cv)),
        n_evaluated=n,
    )
    if out.identity_gap >= IDENTITY_RTOL:
        raise InternalConsistencyError(
            f"CV MSE decomposition identity violated: relative gap {out.identity_gap:.3g} "
            f"(model {model.id!r}, scheme {scheme.label})"
        )
    return out


@dataclass
class AseReport:
    """Realized average squared errors of the held-out and full-sample fits."""

    ase_loo: float
    ase_full: float
    n_evaluated: int


def ase(path, model: ModelSpec, scheme: CvScheme) -> AseReport:
    """Average squared distance between true and estimated conditional means.

    ase_loo uses the scheme's held-out estimates; ase_full the full-sample
    fit. Both average over the scheme's evaluated indices so the two are
    comparable under masking schemes.
    """
    y = np.asarray(path.y, dtype=float)
    res = cv_residuals(path, model, scheme)
    x = model.design(np.asarray(path.x_full, dtype=float))
    full = ols_fit(x, y, model_id=model.id)
    mu_hat = x @ full.beta if x.shape[1] else np.zeros(y.shape[0])
    m = res.mask
    return AseReport(
        ase_loo=float(np.mean((path.mu_true[m] - res.mu[m]) ** 2)),
        ase_full=float(np.mean((path.mu_true[m] - mu_hat[m]) ** 2)),
        n_evaluated=int(m.sum()),
    )


@dataclass
class ModelScore:
    model_id: str
    n_params: int
    cv_mse: float | None
    n_evaluated: int
    error: str | None = None


@dataclass
class SelectionResult:
    selected: str
    table: list
    excluded: list


def rank_key(score: ModelScore):
    """Deterministic ordering: smallest CV MSE, then fewer parameters, then id."""
    return (score.cv_mse, score.n_params, score.model_id)


def select(models, path, scheme: CvScheme) -> SelectionResult:
    """Pick the candidate with the smallest CV MSE.

    Candidates that fail to fit are excluded and flagged; selection
    proceeds over the rest. Ties break toward fewer parameters, then
    lower id.
    """
    models = list(models)
    if len(models) < 2:
        raise SizeError("select requires at least 2 candidate models")
    if len({m.id for m in models}) != len(models):
        raise ConfigError("select: candidate model ids must be unique")
    table = []
    for model in models:
        try:
            res = cv_residuals(path, model, scheme)
            score = ModelScore(
                model_id=model.id,
                n_params=model.n_params,
                cv_mse=cv_mse(res.eps, res.mask),
                n_evaluated=int(res.mask.sum()),
            )
        except (NumericalError, SizeError) as exc:
            score = ModelScore(
                model_id=model.id, n_params=model.n_params, cv_mse=None, n_evaluated=0,
                error=str(exc),
            )
        table.append(score)
    usable = [s for s in table if s.cv_mse is not None]
    excluded = [s for s in table if s.cv_mse is None]
    if not usable:
        raise SingularityError("all candidate models failed to fit")
    best = min(usable, key=rank_key)
    return SelectionResult(selected=best.model_id, table=table, excluded=excluded)
