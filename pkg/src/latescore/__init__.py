"""Weak-instrument-robust inference for the local average treatment effect.

The package computes per-unit influence-function scores from cross-fitted
nuisance estimates, inverts the studentized score test in closed form
(the solution set of a quadratic inequality, which can be a finite
interval, rays, a point, the empty set or the whole line), and compares
the result against the Wald interval of the doubly robust ratio
estimator.  A replication engine and a sampler for the weak-instrument
limiting distribution support coverage and distributional studies.
"""

from .data import CsvSchema, Dataset, FoldAssignment, ObservedUnit, load_csv, make_folds, write_csv
from .errors import (
    CsvParseError,
    DecompositionError,
    DegenerateDataError,
    DegenerateFoldError,
    InvalidConfigError,
    LatescoreError,
    PositivityError,
    WeakDenominatorError,
)
from .inference import (
    ConfidenceSet,
    DrmlResult,
    EmptySet,
    FiniteInterval,
    LeftRay,
    Point,
    QuadCoefficients,
    RightRay,
    TwoRays,
    WholeLine,
    dn_statistic,
    drml_estimate,
    instrument_is_weak,
    invert_score_test,
    normal_quantile,
    quad_coefficients,
    score_confidence_set,
    score_statistic,
)
from .nuisance import (
    CellMeanModel,
    LearnerSpec,
    LinearModel,
    LogisticModel,
    NuisancePredictions,
    cross_fit,
    fit_cell_mean,
    fit_logistic,
    fit_ols,
)
from .scores import ScoreSample, compute_scores, functional_oracle
from .simulation import (
    CellSummary,
    DgpParams,
    ReplicationResult,
    StudyCell,
    StudySpec,
    aggregate,
    dgp_generate,
    oracle_nuisances,
    oracle_scores,
    replication_seed,
    run_replication,
    run_study,
    write_replications_csv,
    write_summary_csv,
)
from .weakiv import (
    WeakIVCalibration,
    WeakIVConfig,
    estimate_weakiv_config,
    ks_distance,
    sample_bivariate_normal,
    sample_weak_limit,
)

__version__ = "0.1.0"
