"""Nuisance learners and the cross-fitting driver.

Three conditional-mean functions enter the scores: the outcome regression
g(z, x) = E(Y | Z=z, X=x), the treatment regression r(z, x) = E(A | Z=z, X=x)
and the instrument propensity m(x) = P(Z=1 | X=x).  Each unit's prediction
is produced by a model fitted on the units outside its fold, and the
per-unit predictions from all folds are pooled before any moments are
taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import Dataset, FoldAssignment
from .errors import DegenerateFoldError, InvalidConfigError

G_LEARNERS = ("ols_linear", "cell_mean")
R_LEARNERS = ("logistic", "cell_mean")
M_LEARNERS = ("logistic", "known_constant", "known_function")


@dataclass(frozen=True)
class LearnerSpec:
    """Configuration of the nuisance learners and the cross-fitting split.

    ``m_value`` is used only with ``m_learner="known_constant"`` and
    ``m_function`` (a callable mapping an (n, p) covariate matrix to n
    propensities) only with ``m_learner="known_function"``.
    """

    g_learner: str = "ols_linear"
    r_learner: str = "logistic"
    m_learner: str = "logistic"
    m_value: float = 0.5
    m_function: Optional[Callable[[np.ndarray], np.ndarray]] = None
    K: int = 5
    clip_eps: float = 0.01

    def __post_init__(self) -> None:
        if self.g_learner not in G_LEARNERS:
            raise InvalidConfigError(f"unknown g learner {self.g_learner!r}")
        if self.r_learner not in R_LEARNERS:
            raise InvalidConfigError(f"unknown r learner {self.r_learner!r}")
        if self.m_learner not in M_LEARNERS:
            raise InvalidConfigError(f"unknown m learner {self.m_learner!r}")
        if not 0.0 < self.clip_eps < 0.5:
            raise InvalidConfigError(f"clip_eps must lie in (0, 0.5), got {self.clip_eps}")
        if self.K < 2:
            raise InvalidConfigError(f"fold count must be at least 2, got {self.K}")
        if self.m_learner == "known_constant" and not 0.0 < self.m_value < 1.0:
            raise InvalidConfigError(f"known propensity must lie in (0, 1), got {self.m_value}")
        if self.m_learner == "known_function" and self.m_function is None:
            raise InvalidConfigError("m_learner='known_function' requires m_function")


@dataclass(frozen=True)
class NuisancePredictions:
    """Pooled out-of-fold predictions for every unit.

    g1/g0 are outcome predictions at z=1/z=0, r1/r0 the treatment
    probabilities at z=1/z=0, and m1 the (clipped) probability of z=1.
    """

    g1: np.ndarray
    g0: np.ndarray
    r1: np.ndarray
    r0: np.ndarray
    m1: np.ndarray

    def __post_init__(self) -> None:
        n = self.g1.shape[0]
        for name in ("g1", "g0", "r1", "r0", "m1"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise InvalidConfigError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise InvalidConfigError(f"{name} contains non-finite predictions")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("r1", "r0"):
            arr = getattr(self, name)
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise InvalidConfigError(f"{name} has entries outside [0, 1]")
        if self.m1.min() <= 0.0 or self.m1.max() >= 1.0:
            raise InvalidConfigError("m1 has entries outside (0, 1)")

    @property
    def n(self) -> int:
        return self.g1.shape[0]


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _with_intercept(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    return np.column_stack([np.ones(features.shape[0]), features])


@dataclass(frozen=True)
class LinearModel:
    """Least-squares fit; ``ridge_fallback`` marks a rank-deficient design."""

    intercept: float
    slopes: np.ndarray
    ridge_fallback: bool = False

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        return self.intercept + features @ self.slopes


def fit_ols(features: np.ndarray, targets: np.ndarray) -> LinearModel:
    """Fit least squares with intercept via the normal equations.

    A rank-deficient Gram matrix is regularized with a trace-scaled ridge
    penalty (1e-8 * trace/dim) instead of failing, with the fallback flag
    set, so degenerate folds cannot crash a Monte Carlo run.
    """
    targets = np.asarray(targets, dtype=float)
    design = _with_intercept(features)
    if design.shape[0] < 1:
        raise InvalidConfigError("fit_ols needs at least one row")
    gram = design.T @ design
    moment = design.T @ targets
    d = gram.shape[0]
    fallback = np.linalg.matrix_rank(gram) < d
    if fallback:
        gram = gram + (1e-8 * np.trace(gram) / d) * np.eye(d)
    try:
        coef = np.linalg.solve(gram, moment)
    except np.linalg.LinAlgError:
        fallback = True
        gram = gram + (1e-8 * max(np.trace(gram), 1.0) / d) * np.eye(d)
        coef = np.linalg.solve(gram, moment)
    return LinearModel(intercept=float(coef[0]), slopes=coef[1:], ridge_fallback=fallback)


@dataclass(frozen=True)
class LogisticModel:
    """Logistic fit; constant-probability fallback when labels are pure.

    ``warning`` marks an untrustworthy likelihood optimum: either IRLS
    hit its iteration cap or the fitted linear predictor saturated (the
    perfect-separation signature, where the MLE does not exist).
    Predictions are clipped away from exact 0/1 either way.
    """

    intercept: float
    slopes: np.ndarray
    constant: Optional[float] = None
    converged: bool = True
    warning: bool = False

    _PRED_CLIP = 1e-12

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if self.constant is not None:
            p = np.full(features.shape[0], self.constant)
        else:
            p = _sigmoid(self.intercept + features @ self.slopes)
        return np.clip(p, self._PRED_CLIP, 1.0 - self._PRED_CLIP)


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    max_iter: int = 100,
    grad_tol: float = 1e-8,
) -> LogisticModel:
    """Maximum-likelihood logistic regression via IRLS.

    Labels of a single class yield a constant-probability model.  Under
    perfect separation the iteration cap stops the divergence and the
    model is returned with ``converged=False``.
    """
    labels = np.asarray(labels, dtype=float)
    design = _with_intercept(features)
    n, d = design.shape
    if labels.min() == labels.max():
        return LogisticModel(intercept=0.0, slopes=np.zeros(d - 1), constant=float(labels[0]))
    beta = np.zeros(d)
    converged = False
    for _ in range(max_iter):
        p = _sigmoid(design @ beta)
        p = np.clip(p, 1e-10, 1.0 - 1e-10)
        grad = design.T @ (labels - p) / n
        if np.max(np.abs(grad)) <= grad_tol:
            converged = True
            break
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None]) / n
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            hess = hess + (1e-10 * max(np.trace(hess), 1.0) / d) * np.eye(d)
            step = np.linalg.solve(hess, grad)
        beta = beta + step
    saturated = bool(np.max(np.abs(design @ beta)) > 30.0)
    return LogisticModel(
        intercept=float(beta[0]),
        slopes=beta[1:],
        converged=converged,
        warning=(not converged) or saturated,
    )


@dataclass(frozen=True)
class CellMeanModel:
    """Empirical means per (z, x1 > 0) cell with a marginal-mean fallback.

    Exactly correct for data whose conditional means depend on the
    covariates only through the sign of the first one.
    """

    cell_means: np.ndarray  # shape (2, 2): [z, indicator(x1 > 0)]
    marginal: float

    def predict(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        z = np.broadcast_to(np.asarray(z, dtype=int), (x.shape[0],))
        pos = (x[:, 0] > 0).astype(int)
        out = self.cell_means[z, pos]
        return np.where(np.isnan(out), self.marginal, out)


def fit_cell_mean(z: np.ndarray, x: np.ndarray, values: np.ndarray) -> CellMeanModel:
    """Tabulate mean(values) in each (z, x1 > 0) cell of a data slice."""
    z = np.asarray(z, dtype=int)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 1:
        raise InvalidConfigError("fit_cell_mean needs a non-empty slice")
    pos = (x[:, 0] > 0).astype(int)
    means = np.full((2, 2), np.nan)
    for zi in (0, 1):
        for pi in (0, 1):
            mask = (z == zi) & (pos == pi)
            if mask.any():
                means[zi, pi] = values[mask].mean()
    return CellMeanModel(cell_means=means, marginal=float(values.mean()))


def _fit_predict_g(spec, data, train, test):
    if spec.g_learner == "cell_mean":
        model = fit_cell_mean(data.z[train], data.x[train], data.y[train])
        return model.predict(1, data.x[test]), model.predict(0, data.x[test])
    features = np.column_stack([data.z[train], data.x[train]])
    model = fit_ols(features, data.y[train])
    x_test = data.x[test]
    ones = np.ones(x_test.shape[0])
    g1 = model.predict(np.column_stack([ones, x_test]))
    g0 = model.predict(np.column_stack([0.0 * ones, x_test]))
    return g1, g0


def _fit_predict_r(spec, data, train, test):
    if spec.r_learner == "cell_mean":
        model = fit_cell_mean(data.z[train], data.x[train], data.a[train])
        return model.predict(1, data.x[test]), model.predict(0, data.x[test])
    features = np.column_stack([data.z[train], data.x[train]])
    model = fit_logistic(features, data.a[train])
    x_test = data.x[test]
    ones = np.ones(x_test.shape[0])
    r1 = model.predict_proba(np.column_stack([ones, x_test]))
    r0 = model.predict_proba(np.column_stack([0.0 * ones, x_test]))
    return r1, r0


def cross_fit(data: Dataset, spec: LearnerSpec, folds: FoldAssignment) -> NuisancePredictions:
    """Produce out-of-fold nuisance predictions for every unit.

    For each fold the learners are fitted on its complement and used to
    predict inside the fold; g and r are predicted at both instrument
    levels by switching the z feature (or cell).  In the known-propensity
    modes m1 is filled directly with no fitting.  All propensities are
    clipped to [clip_eps, 1 - clip_eps].
    """
    if folds.n != data.n:
        raise InvalidConfigError(f"folds cover {folds.n} units but the data has {data.n}")
    n = data.n
    g1 = np.empty(n)
    g0 = np.empty(n)
    r1 = np.empty(n)
    r0 = np.empty(n)

    if spec.m_learner == "known_constant":
        m1 = np.full(n, spec.m_value)
    elif spec.m_learner == "known_function":
        m1 = np.asarray(spec.m_function(data.x), dtype=float).reshape(n)
    else:
        m1 = np.empty(n)

    for k in range(folds.K):
        train = folds.complement(k)
        test = folds.members(k)
        z_train = data.z[train]
        if z_train.min() == z_train.max():
            raise DegenerateFoldError(
                f"training complement of fold {k} contains only instrument level {int(z_train[0])}"
            )
        g1[test], g0[test] = _fit_predict_g(spec, data, train, test)
        r1[test], r0[test] = _fit_predict_r(spec, data, train, test)
        if spec.m_learner == "logistic":
            model = fit_logistic(data.x[train], z_train)
            m1[test] = model.predict_proba(data.x[test])

    m1 = np.clip(m1, spec.clip_eps, 1.0 - spec.clip_eps)
    return NuisancePredictions(g1=g1, g0=g0, r1=r1, r0=r0, m1=m1)
