"""Synthetic data-generating process, replication engine and metrics.

One law in the family is parametrized by the instrument strength pi and
the sample size n:

    U ~ N(0,1),  X ~ N(0,1),  Z ~ Bernoulli(0.5),
    A = 1{pi * Z * 1{X > 0} + U > 0},
    Y = 2 * sign(U) + treatment_shift * A,

with sign(0) = 0.  The default treatment_shift of 0 makes the target
ratio zero.  The weak-instrument regime uses pi = 0.15 / sqrt(n), the
strong regime pi = 5.

Replications are independent tasks keyed by (master seed, n, rep_id)
through a splitmix64 mixer, so results do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import Dataset, make_folds
from .errors import InvalidConfigError, LatescoreError
from .inference import dn_statistic, drml_estimate, score_confidence_set
from .nuisance import LearnerSpec, NuisancePredictions, cross_fit
from .scores import compute_scores, functional_oracle

_MASK64 = (1 << 64) - 1

WEAK_KAPPA = 0.15
STRONG_PI = 5.0


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replication_seed(master_seed: int, n: int, rep_id: int) -> int:
    """64-bit seed for one replication, collision-free over a study grid."""
    h = _splitmix64(master_seed & _MASK64)
    h = _splitmix64(h ^ (n & _MASK64))
    h = _splitmix64(h ^ (rep_id & _MASK64))
    return h


@dataclass(frozen=True)
class DgpParams:
    """Parameters of one law: instrument strength, sample size, true effect."""

    pi: float
    n: int
    treatment_shift: float = 0.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidConfigError(f"sample size must be at least 2, got {self.n}")
        if not np.isfinite(self.pi):
            raise InvalidConfigError(f"pi must be finite, got {self.pi}")


def dgp_generate(params: DgpParams, seed: int) -> Dataset:
    """Draw one sample from the law, deterministically in the seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = params.n
    u = rng.standard_normal(n)
    x = rng.standard_normal(n)
    z = (rng.random(n) < 0.5).astype(int)
    a = (params.pi * z * (x > 0) + u > 0).astype(int)
    y = 2.0 * np.sign(u) + params.treatment_shift * a
    return Dataset(y=y, a=a, z=z, x=x.reshape(-1, 1))


def _norm_cdf(t: float) -> float:
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


def oracle_nuisances(params: DgpParams, x: np.ndarray) -> NuisancePredictions:
    """Exact conditional means of the law, evaluated at covariates x.

    r(1, x) = Phi(pi) for x > 0 and 0.5 otherwise, r(0, x) = 0.5,
    g(z, x) = treatment_shift * r(z, x), m = 0.5.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    pos = x > 0
    r1 = np.where(pos, _norm_cdf(params.pi), 0.5)
    r0 = np.full_like(r1, 0.5)
    g1 = params.treatment_shift * r1
    g0 = params.treatment_shift * r0
    m1 = np.full_like(r1, 0.5)
    return NuisancePredictions(g1=g1, g0=g0, r1=r1, r0=r0, m1=m1)


def oracle_scores(params: DgpParams, rng: np.random.Generator, size: int):
    """Draw (psi_a, psi_b) pairs with the true nuisances plugged in.

    Also returns the conditional-mean contrasts r(1,X)-r(0,X) and
    g(1,X)-g(0,X), whose sample means are exact (Rao-Blackwellized)
    estimates of E[psi_a] and E[psi_b].
    """
    u = rng.standard_normal(size)
    x = rng.standard_normal(size)
    z = (rng.random(size) < 0.5).astype(int)
    a = (params.pi * z * (x > 0) + u > 0).astype(float)
    y = 2.0 * np.sign(u) + params.treatment_shift * a
    pos = x > 0
    phi_pi = _norm_cdf(params.pi)
    r1 = np.where(pos, phi_pi, 0.5)
    r0 = 0.5
    g1 = params.treatment_shift * r1
    g0 = params.treatment_shift * r0
    sign = 2.0 * z - 1.0
    r_z = np.where(z == 1, r1, r0)
    g_z = np.where(z == 1, g1, g0)
    psi_a = sign / 0.5 * (a - r_z) + r1 - r0
    psi_b = sign / 0.5 * (y - g_z) + g1 - g0
    return psi_a, psi_b, r1 - r0, g1 - g0


@dataclass(frozen=True)
class ReplicationResult:
    """Outcome of one replication: coverage, diameters, diagnostics."""

    rep_id: int
    covered_score: bool
    covered_wald: bool
    diam_score: float
    diam_wald: float
    set_tag: str
    dn0: float
    phi_hat: float


@dataclass(frozen=True)
class StudySpec:
    """Study grid: instrument regime, sample sizes, replication budget."""

    setting: str = "strong"
    n_grid: tuple[int, ...] = (1500, 4500, 7500, 10500, 12000)
    reps: int = 1000
    alpha: float = 0.05
    seed: int = 0
    learner: LearnerSpec = field(
        default_factory=lambda: LearnerSpec(
            g_learner="cell_mean", r_learner="cell_mean", m_learner="known_constant", m_value=0.5
        )
    )
    pi: Optional[float] = None  # required for setting="custom"

    def __post_init__(self) -> None:
        if self.setting not in ("weak", "strong", "custom"):
            raise InvalidConfigError(f"unknown setting {self.setting!r}")
        if self.setting == "custom" and self.pi is None:
            raise InvalidConfigError("setting='custom' requires pi")
        if self.reps < 1:
            raise InvalidConfigError(f"replication count must be at least 1, got {self.reps}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if len(self.n_grid) == 0 or any(n < 2 for n in self.n_grid):
            raise InvalidConfigError("n_grid must list sample sizes of at least 2")

    def pi_for(self, n: int) -> float:
        if self.setting == "weak":
            return WEAK_KAPPA / math.sqrt(n)
        if self.setting == "strong":
            return STRONG_PI
        return float(self.pi)


def run_replication(params: DgpParams, spec: StudySpec, rep_id: int) -> ReplicationResult:
    """Generate, cross-fit, score and test a single replication."""
    rep_seed = replication_seed(spec.seed, params.n, rep_id)
    fold_seed = _splitmix64(rep_seed)
    data = dgp_generate(params, rep_seed)
    folds = make_folds(params.n, spec.learner.K, fold_seed)
    preds = cross_fit(data, spec.learner, folds)
    scores = compute_scores(data, preds)
    truth = functional_oracle(params.pi, params.treatment_shift)
    cset = score_confidence_set(scores, spec.alpha)
    drml = drml_estimate(scores, spec.alpha)
    dn0 = dn_statistic(scores.psi_a, 0.0)
    return ReplicationResult(
        rep_id=rep_id,
        covered_score=cset.contains(truth),
        covered_wald=drml.contains(truth),
        diam_score=cset.diameter(),
        diam_wald=drml.diameter(),
        set_tag=cset.tag,
        dn0=dn0,
        phi_hat=drml.phi_hat,
    )


@dataclass
class StudyCell:
    """All replications for one (setting, n) grid point."""

    setting: str
    pi: float
    n: int
    results: list[ReplicationResult]
    failures: list[tuple[int, str]]


def run_study(
    spec: StudySpec,
    order: Optional[Sequence[int]] = None,
    progress=None,
) -> list[StudyCell]:
    """Run the full grid.  ``order`` permutes replication execution (the
    collected results are identical for any order); per-replication
    degenerate-data failures are recorded, not raised."""
    cells = []
    rep_ids = list(order) if order is not None else list(range(spec.reps))
    if sorted(rep_ids) != list(range(spec.reps)):
        raise InvalidConfigError("order must be a permutation of range(reps)")
    for n in spec.n_grid:
        params = DgpParams(pi=spec.pi_for(n), n=n)
        results = []
        failures = []
        for rep_id in rep_ids:
            try:
                results.append(run_replication(params, spec, rep_id))
            except LatescoreError as exc:
                failures.append((rep_id, str(exc)))
            if progress is not None:
                progress(n, rep_id)
        results.sort(key=lambda r: r.rep_id)
        failures.sort()
        cells.append(StudyCell(setting=spec.setting, pi=params.pi, n=n, results=results, failures=failures))
    return cells


@dataclass(frozen=True)
class CellSummary:
    """Coverage and diameter metrics aggregated over one grid point."""

    n_reps: int
    coverage_score: float
    coverage_wald: float
    se_score: float
    se_wald: float
    median_diam_score: float
    median_diam_wald: float
    frac_infinite: float
    median_ratio: float


def aggregate(results: Sequence[ReplicationResult]) -> CellSummary:
    """Collapse one grid point's replications into coverage/length metrics.

    Medians are taken over the extended reals (+inf sorts above every
    finite value); the diameter ratio uses only replications where both
    sets are bounded.
    """
    if len(results) == 0:
        raise InvalidConfigError("cannot aggregate an empty result list")
    reps = len(results)
    cov_s = np.array([r.covered_score for r in results], dtype=float)
    cov_w = np.array([r.covered_wald for r in results], dtype=float)
    diam_s = np.array([r.diam_score for r in results], dtype=float)
    diam_w = np.array([r.diam_wald for r in results], dtype=float)
    both_finite = np.isfinite(diam_s) & np.isfinite(diam_w) & (diam_w > 0)
    ratios = diam_s[both_finite] / diam_w[both_finite]
    return CellSummary(
        n_reps=reps,
        coverage_score=float(cov_s.mean()),
        coverage_wald=float(cov_w.mean()),
        se_score=float(np.sqrt(cov_s.mean() * (1.0 - cov_s.mean()) / reps)),
        se_wald=float(np.sqrt(cov_w.mean() * (1.0 - cov_w.mean()) / reps)),
        median_diam_score=float(np.median(diam_s)),
        median_diam_wald=float(np.median(diam_w)),
        frac_infinite=float(np.mean(~np.isfinite(diam_s))),
        median_ratio=float(np.median(ratios)) if ratios.size else float("nan"),
    )


REPLICATION_COLUMNS = (
    "setting,n,rep_id,covered_score,covered_wald,diam_score,diam_wald,set_tag,dn0,phi_hat"
)
SUMMARY_COLUMNS = (
    "setting,n,coverage_score,coverage_wald,se_score,se_wald,"
    "median_diam_score,median_diam_wald,frac_infinite,median_ratio"
)


def write_replications_csv(cells: Iterable[StudyCell], path: str) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(REPLICATION_COLUMNS + "\n")
        for cell in cells:
            for r in cell.results:
                handle.write(
                    f"{cell.setting},{cell.n},{r.rep_id},{int(r.covered_score)},"
                    f"{int(r.covered_wald)},{r.diam_score!r},{r.diam_wald!r},"
                    f"{r.set_tag},{r.dn0!r},{r.phi_hat!r}\n"
                )


def write_summary_csv(cells: Iterable[StudyCell], path: str) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(SUMMARY_COLUMNS + "\n")
        for cell in cells:
            s = aggregate(cell.results)
            handle.write(
                f"{cell.setting},{cell.n},{s.coverage_score!r},{s.coverage_wald!r},"
                f"{s.se_score!r},{s.se_wald!r},{s.median_diam_score!r},"
                f"{s.median_diam_wald!r},{s.frac_infinite!r},{s.median_ratio!r}\n"
            )
