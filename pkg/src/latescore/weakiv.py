"""Sampler and calibration for the weak-instrument limit of the ratio estimator.

Under laws drifting to zero instrument strength at the 1/sqrt(n) rate,
with sqrt(n)*E[psi_a] = c_a and sqrt(n)*E[psi_b] = c_b, the scaled score
means sqrt(n)*(mean(psi_a), mean(psi_b)) converge to (c_a + N_a,
c_b + N_b) with (N_a, N_b) bivariate normal, mean zero, covariance
Sigma_ab.  The estimation error of the ratio estimator therefore
converges in distribution to

    (c_b + N_b) / (c_a + N_a) - c_b / c_a
        = (c_a * N_b - c_b * N_a) / (c_a^2 + c_a * N_a).

The limit has no finite mean (Cauchy-like tails), which is what breaks
Wald inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError, InvalidConfigError
from .simulation import DgpParams, oracle_scores


def _cholesky_2x2(sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular square root of a symmetric PSD 2x2 matrix."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (2, 2):
        raise DecompositionError(f"covariance must be 2x2, got shape {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise DecompositionError("covariance contains non-finite entries")
    s11, s12, s21, s22 = sigma[0, 0], sigma[0, 1], sigma[1, 0], sigma[1, 1]
    scale = max(abs(s11), abs(s22), abs(s12), 1.0)
    if abs(s12 - s21) > 1e-12 * scale:
        raise DecompositionError(f"covariance is not symmetric: {s12} vs {s21}")
    if s11 < 0.0 or s22 < 0.0 or s11 * s22 - s12 * s12 < -1e-12 * scale * scale:
        raise DecompositionError("covariance is not positive semidefinite")
    if s11 == 0.0:
        if s12 != 0.0:
            raise DecompositionError("covariance is not positive semidefinite")
        return np.array([[0.0, 0.0], [0.0, math.sqrt(s22)]])
    l11 = math.sqrt(s11)
    l21 = s12 / l11
    l22 = math.sqrt(max(s22 - l21 * l21, 0.0))
    return np.array([[l11, 0.0], [l21, l22]])


@dataclass(frozen=True)
class WeakIVConfig:
    """Limit parameters (c_a, c_b, Sigma_ab); c_a must be nonzero."""

    c_a: float
    c_b: float
    sigma_ab: np.ndarray

    def __post_init__(self) -> None:
        if self.c_a == 0.0:
            raise InvalidConfigError("c_a must be nonzero")
        sigma = np.asarray(self.sigma_ab, dtype=float)
        _cholesky_2x2(sigma)  # validates symmetry and PSD
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma_ab", sigma)


def sample_bivariate_normal(
    sigma_ab: np.ndarray, rng: np.random.Generator, size: int | None = None
):
    """Draw (N_a, N_b) ~ N(0, Sigma_ab) via the triangular square root."""
    chol = _cholesky_2x2(sigma_ab)
    m = 1 if size is None else size
    e = rng.standard_normal((m, 2))
    draws = e @ chol.T
    if size is None:
        return float(draws[0, 0]), float(draws[0, 1])
    return draws[:, 0], draws[:, 1]


def sample_weak_limit(
    cfg: WeakIVConfig, rng: np.random.Generator, size: int | None = None
):
    """Draw from (c_a*N_b - c_b*N_a) / (c_a^2 + c_a*N_a).

    An exactly-zero denominator (a probability-zero event) triggers a
    redraw, which leaves the distribution unchanged.
    """
    m = 1 if size is None else size
    na, nb = sample_bivariate_normal(cfg.sigma_ab, rng, size=m)
    num = cfg.c_a * nb - cfg.c_b * na
    den = cfg.c_a * cfg.c_a + cfg.c_a * na
    bad = den == 0.0
    while np.any(bad):
        na2, nb2 = sample_bivariate_normal(cfg.sigma_ab, rng, size=int(bad.sum()))
        num[bad] = cfg.c_a * nb2 - cfg.c_b * na2
        den[bad] = cfg.c_a * cfg.c_a + cfg.c_a * na2
        bad = den == 0.0
    draws = num / den
    if size is None:
        return float(draws[0])
    return draws


@dataclass(frozen=True)
class WeakIVCalibration:
    """Monte-Carlo estimates of the limit parameters, with diagnostics.

    ``ca_violated``/``cb_violated`` flag estimates within 3 standard
    errors of zero, for which the drifting-law premise (nonzero c_a, c_b)
    fails.
    """

    c_a: float
    c_b: float
    sigma_ab: np.ndarray
    ca_se: float
    cb_se: float
    ca_violated: bool
    cb_violated: bool
    draws: int

    def config(self) -> WeakIVConfig:
        return WeakIVConfig(c_a=self.c_a, c_b=self.c_b, sigma_ab=self.sigma_ab)


def estimate_weakiv_config(
    params: DgpParams,
    oracle_draws: int,
    seed: int = 0,
    batch: int = 1_000_000,
) -> WeakIVCalibration:
    """Calibrate (c_a, c_b, Sigma_ab) for a law by oracle Monte Carlo.

    Scores are drawn with the true nuisance functions plugged in.  The
    means are estimated from the conditional-mean contrasts (exact
    conditional expectations of the scores given X), whose variance is
    orders of magnitude below that of the raw scores -- essential here,
    since c_a itself is O(1) while sqrt(n) * sd(psi_a) is O(sqrt(n)).
    The covariance uses the raw score draws.
    """
    if oracle_draws < 2:
        raise InvalidConfigError(f"oracle_draws must be at least 2, got {oracle_draws}")
    rng = np.random.Generator(np.random.PCG64(seed))
    total = 0
    sum_ca = 0.0
    sum_ca2 = 0.0
    sum_cb = 0.0
    sum_cb2 = 0.0
    sums = np.zeros(5)  # psi_a, psi_b, psi_a^2, psi_b^2, psi_a*psi_b
    while total < oracle_draws:
        m = min(batch, oracle_draws - total)
        psi_a, psi_b, contrast_a, contrast_b = oracle_scores(params, rng, m)
        sum_ca += contrast_a.sum()
        sum_ca2 += (contrast_a * contrast_a).sum()
        sum_cb += contrast_b.sum()
        sum_cb2 += (contrast_b * contrast_b).sum()
        sums += (
            psi_a.sum(),
            psi_b.sum(),
            (psi_a * psi_a).sum(),
            (psi_b * psi_b).sum(),
            (psi_a * psi_b).sum(),
        )
        total += m
    root_n = math.sqrt(params.n)
    mean_a = sum_ca / total
    mean_b = sum_cb / total
    var_a = max(sum_ca2 / total - mean_a * mean_a, 0.0)
    var_b = max(sum_cb2 / total - mean_b * mean_b, 0.0)
    c_a = root_n * mean_a
    c_b = root_n * mean_b
    ca_se = root_n * math.sqrt(var_a / total)
    cb_se = root_n * math.sqrt(var_b / total)
    mu_a, mu_b = sums[0] / total, sums[1] / total
    cov = np.array(
        [
            [sums[2] / total - mu_a * mu_a, sums[4] / total - mu_a * mu_b],
            [sums[4] / total - mu_a * mu_b, sums[3] / total - mu_b * mu_b],
        ]
    )
    return WeakIVCalibration(
        c_a=c_a,
        c_b=c_b,
        sigma_ab=cov,
        ca_se=ca_se,
        cb_se=cb_se,
        ca_violated=abs(c_a) <= 3.0 * ca_se,
        cb_violated=abs(c_b) <= 3.0 * cb_se,
        draws=total,
    )


def ks_distance(sample1: np.ndarray, sample2: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F1 - F2|."""
    s1 = np.sort(np.asarray(sample1, dtype=float))
    s2 = np.sort(np.asarray(sample2, dtype=float))
    if s1.size == 0 or s2.size == 0:
        raise InvalidConfigError("both samples must be non-empty")
    merged = np.concatenate([s1, s2])
    cdf1 = np.searchsorted(s1, merged, side="right") / s1.size
    cdf2 = np.searchsorted(s2, merged, side="right") / s2.size
    return float(np.max(np.abs(cdf1 - cdf2)))
