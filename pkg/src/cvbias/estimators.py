"""Ordinary least squares and leave-one-out refitting for candidate models.

The leave-one-out path is a rank-one downdate of the full-sample fit
(O(p^2) per observation) and can be cross-checked against brute-force
refits. Near-singular Gram matrices are rejected deterministically rather
than silently pseudo-inverted: in a bias study, tiny numerical artifacts
would contaminate the very cross-moments under measurement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels as _k
from .exceptions import ConfigError, InternalConsistencyError, LeverageError, SingularityError, SizeError

# reciprocal condition estimate below this is treated as singular
RCOND_LIMIT = 1e-12
# leverage at or above this makes an observation determine its own fit
LEVERAGE_LIMIT = 1.0 - 1e-10
# downdate-vs-refit agreement tolerance (relative to 1 + |beta|)
CROSSCHECK_TOL = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    """A candidate linear model: which regressor columns it uses.

    ``columns`` index into a path's x_full; the intercept, when present, is
    an explicit constant column appended after them, so columns plus the
    flag fully determine the design matrix.
    """

    id: str
    columns: tuple[int, ...]
    intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        if len(set(self.columns)) != len(self.columns):
            raise ConfigError(f"model {self.id!r}: columns must be distinct, got {self.columns}")
        if any(c < 0 for c in self.columns):
            raise ConfigError(f"model {self.id!r}: columns must be non-negative")
        if not isinstance(self.id, str) or not self.id:
            raise ConfigError("model id must be a non-empty string")

    @property
    def n_params(self) -> int:
        return len(self.columns) + int(self.intercept)

    def design(self, x_full: np.ndarray) -> np.ndarray:
        """Assemble this candidate's design matrix from the shared regressors."""
        if self.columns and max(self.columns) >= x_full.shape[1]:
            raise ConfigError(
                f"model {self.id!r}: column {max(self.columns)} out of range "
                f"for x_full with {x_full.shape[1]} columns"
            )
        T = x_full.shape[0]
        out = np.empty((T, self.n_params))
        for j, c in enumerate(self.columns):
            out[:, j] = x_full[:, c]
        if self.intercept:
            out[:, -1] = 1.0
        return out

    def to_dict(self) -> dict:
        return {"id": self.id, "columns": list(self.columns), "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d: dict, where: str = "model") -> "ModelSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object")
        unknown = sorted(set(d) - {"id", "columns", "intercept"})
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")
        if "id" not in d or "columns" not in d:
            raise ConfigError(f"{where}: requires 'id' and 'columns'")
        return cls(id=d["id"], columns=tuple(d["columns"]), intercept=d.get("intercept", False))


@dataclass
class FitResult:
    """OLS fit with the cached pieces the rank-one downdate needs."""

    beta: np.ndarray
    gram_condition: float
    gram: np.ndarray
    gram_inv: np.ndarray
    xty: np.ndarray


def ols_fit(x: np.ndarray, y: np.ndarray, model_id: str | None = None) -> FitResult:
    """Full-sample least squares via the normal equations.

    Raises SingularityError when the reciprocal condition estimate of the
    Gram matrix falls below RCOND_LIMIT.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    T, p = x.shape
    if p == 0:
        return FitResult(
            beta=np.empty(0),
            gram_condition=1.0,
            gram=np.empty((0, 0)),
            gram_inv=np.empty((0, 0)),
            xty=np.empty(0),
        )
    if T <= p:
        # the Gram matrix is rank-deficient by construction
        raise SingularityError(
            f"underdetermined system: T={T} observations for p={p} parameters",
            model_id=model_id,
        )
    gram = x.T @ x
    xty = x.T @ y
    # 2-norm condition estimate via the (symmetric PSD) eigenvalue ratio
    w = np.linalg.eigvalsh(gram)
    if not (w[0] > 0.0 and np.isfinite(w[-1])) or w[0] <= RCOND_LIMIT * w[-1]:
        cond = float("inf") if w[0] <= 0 else float(w[-1] / w[0])
        raise SingularityError(
            f"Gram matrix is numerically singular (condition estimate {cond:.3g})",
            model_id=model_id,
        )
    cond = float(w[-1] / w[0])
    beta = np.linalg.solve(gram, xty)
    return FitResult(
        beta=beta,
        gram_condition=cond,
        gram=gram,
        gram_inv=np.linalg.inv(gram),
        xty=xty,
    )


def loo_fit_refit(x: np.ndarray, y: np.ndarray, i: int, model_id: str | None = None) -> FitResult:
    """Leave-one-out fit by brute force: OLS on the T-1 rows excluding row i."""
    T = x.shape[0]
    if not 0 <= i < T:
        raise SizeError(f"index {i} out of range for T={T}")
    mask = np.ones(T, dtype=bool)
    mask[i] = False
    try:
        return ols_fit(x[mask], y[mask], model_id=model_id)
    except SingularityError as exc:
        raise SingularityError(
            f"removing observation makes the system singular: {exc}",
            model_id=model_id,
            index=i,
        ) from exc


def loo_fit_downdate(
    x: np.ndarray, y: np.ndarray, i: int, full: FitResult, model_id: str | None = None
) -> FitResult:
    """Leave-one-out fit via a rank-one downdate of the cached full fit.

    O(p^2) instead of O(T p^2); agrees with loo_fit_refit to within
    CROSSCHECK_TOL whenever the full Gram matrix is acceptably conditioned.
    """
    T = x.shape[0]
    if not 0 <= i < T:
        raise SizeError(f"index {i} out of range for T={T}")
    if x.shape[1] == 0:
        return full
    xi = x[i]
    u = full.gram_inv @ xi
    h = float(xi @ u)
    if h >= LEVERAGE_LIMIT:
        raise LeverageError(
            f"observation has leverage {h:.12g}; it fully determines its own fit",
            model_id=model_id,
            index=i,
        )
    beta = full.beta - u * ((y[i] - xi @ full.beta) / (1.0 - h))
    gram_down = full.gram - np.outer(xi, xi)
    gram_inv_down = full.gram_inv + np.outer(u, u) / (1.0 - h)
    return FitResult(
        beta=beta,
        gram_condition=float(np.linalg.cond(gram_down)),
        gram=gram_down,
        gram_inv=gram_inv_down,
        xty=full.xty - xi * y[i],
    )


def leverages(x: np.ndarray, full: FitResult) -> np.ndarray:
    """Diagonal of the hat matrix: h_i = x_i (X'X)^{-1} x_i'."""
    u = x @ full.gram_inv
    return np.einsum("tp,tp->t", u, x)


def _loo_from_fit(
    x: np.ndarray,
    y: np.ndarray,
    full: FitResult,
    model_id: str | None,
    crosscheck: bool = False,
):
    """Leave-one-out predictions/residuals for every index, given the full fit.

    Uses the downdate kernel; observations the downdate flags as
    leverage-degenerate fall back to a brute-force refit, and fail only if
    the refit is itself singular.
    """
    T, p = x.shape
    if p == 0:
        return np.zeros(T), y.copy()
    mu, eps, h, bad = _k.loo_arrays(x, y, full.gram_inv, full.beta)
    if bad >= 0:
        for i in np.flatnonzero(h >= LEVERAGE_LIMIT):
            i = int(i)
            try:
                refit = loo_fit_refit(x, y, i, model_id=model_id)
            except SingularityError as exc:
                raise LeverageError(
                    f"leverage-degenerate observation and refit failed: {exc}",
                    model_id=model_id,
                    index=i,
                ) from exc
            mu[i] = x[i] @ refit.beta
            eps[i] = y[i] - mu[i]
    if crosscheck:
        scale = CROSSCHECK_TOL * (1.0 + np.abs(full.beta).max(initial=0.0))
        for i in range(T):
            refit = loo_fit_refit(x, y, i, model_id=model_id)
            down = loo_fit_downdate(x, y, i, full, model_id=model_id)
            gap = np.abs(down.beta - refit.beta).max(initial=0.0)
            if gap > scale:
                raise InternalConsistencyError(
                    f"downdate/refit disagreement {gap:.3g} at index {i}"
                    + (f" (model {model_id!r})" if model_id else "")
                )
    return mu, eps


def loo_mu(x_full: np.ndarray, y: np.ndarray, model: ModelSpec, crosscheck: bool = False):
    """Leave-one-out conditional-mean estimates and residuals for a candidate.

    Returns (mu_loo, eps_loo) aligned to the sample; eps_loo is computed as
    y - mu_loo, never re-derived. With ``crosscheck`` every downdate is
    verified against a brute-force refit (slow; correctness insurance).
    """
    x = model.design(np.asarray(x_full, dtype=float))
    y = np.asarray(y, dtype=float)
    T = x.shape[0]
    if model.n_params >= T - 1:
        raise SizeError(
            f"model {model.id!r} with {model.n_params} parameters cannot be "
            f"leave-one-out fit on T={T} observations"
        )
    full = ols_fit(x, y, model_id=model.id)
    return _loo_from_fit(x, y, full, model.id, crosscheck=crosscheck)
