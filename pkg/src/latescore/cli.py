"""Command-line front end.

Four subcommands: ``analyze`` runs the full inference pipeline on a CSV
file, ``simulate`` runs the replication study and writes plot-ready
tables, ``scan`` cross-checks the closed-form set against the test
statistic on a theta grid, and ``weakiv-limit`` samples the
weak-instrument limiting distribution.

Exit statuses are a stable contract: 0 success, 2 configuration or parse
error, 3 degenerate data.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .data import CsvSchema, load_csv, make_folds
from .errors import (
    CsvParseError,
    DecompositionError,
    DegenerateDataError,
    DegenerateFoldError,
    InvalidConfigError,
    PositivityError,
)
from .inference import (
    dn_statistic,
    drml_estimate,
    invert_score_test,
    quad_coefficients,
    zero_tolerances,
)
from .nuisance import LearnerSpec, cross_fit
from .scores import compute_scores
from .simulation import StudySpec, run_study, write_replications_csv, write_summary_csv
from .weakiv import WeakIVConfig, sample_weak_limit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3

_G_NAMES = {"ols": "ols_linear", "cellmean": "cell_mean"}
_R_NAMES = {"logit": "logistic", "cellmean": "cell_mean"}


def _learner_spec(args, default_propensity: str) -> LearnerSpec:
    propensity = getattr(args, "propensity", default_propensity)
    if propensity == "logit":
        m_learner, m_value = "logistic", 0.5
    elif propensity.startswith("known:"):
        m_learner = "known_constant"
        try:
            m_value = float(propensity.split(":", 1)[1])
        except ValueError:
            raise InvalidConfigError(f"bad propensity value in {propensity!r}") from None
    else:
        raise InvalidConfigError(f"propensity must be 'logit' or 'known:VALUE', got {propensity!r}")
    return LearnerSpec(
        g_learner=_G_NAMES[args.g],
        r_learner=_R_NAMES[args.r],
        m_learner=m_learner,
        m_value=m_value,
        K=args.folds,
        clip_eps=args.clip_eps,
    )


def _schema(args) -> CsvSchema:
    return CsvSchema(
        outcome=args.outcome,
        treatment=args.treatment,
        instrument=args.instrument,
        covariates=tuple(c for c in args.covariates.split(",") if c),
    )


def _add_data_flags(sub) -> None:
    sub.add_argument("--data", required=True, help="input CSV path")
    sub.add_argument("--outcome", default="y")
    sub.add_argument("--treatment", default="a")
    sub.add_argument("--instrument", default="z")
    sub.add_argument("--covariates", default="x1", help="comma-separated column names")
    sub.add_argument("--propensity", default="logit", help="'logit' or 'known:VALUE'")
    sub.add_argument("--g", default="ols", choices=sorted(_G_NAMES))
    sub.add_argument("--r", default="logit", choices=sorted(_R_NAMES))
    sub.add_argument("--alpha", type=float, default=0.05)
    sub.add_argument("--folds", type=int, default=5)
    sub.add_argument("--clip-eps", type=float, default=0.01, dest="clip_eps")
    sub.add_argument("--seed", type=int, default=0)


def _fit_scores(args):
    data = load_csv(args.data, _schema(args))
    spec = _learner_spec(args, default_propensity="logit")
    folds = make_folds(data.n, spec.K, args.seed)
    preds = cross_fit(data, spec, folds)
    return data, compute_scores(data, preds)


def cmd_analyze(args) -> int:
    data, scores = _fit_scores(args)
    coeffs = quad_coefficients(scores, args.alpha)
    if coeffs.degenerate:
        raise DegenerateDataError("both score vectors are identically zero")
    cset = invert_score_test(coeffs)
    tol_a, tol_delta = zero_tolerances(coeffs)
    drml = drml_estimate(scores, args.alpha)
    dn0 = dn_statistic(scores.psi_a, 0.0)
    z = coeffs.z_crit
    weak = dn0 <= z * z
    diam_s = cset.diameter()
    diam_w = drml.diameter()
    ratio = diam_s / diam_w if math.isfinite(diam_s) and math.isfinite(diam_w) and diam_w > 0 else float("nan")

    print(f"n = {data.n}, covariates = {data.p}, alpha = {args.alpha}")
    print(f"point estimate   : {drml.phi_hat:.6g}")
    print(f"sigma_hat        : {math.sqrt(drml.sigma2_hat):.6g}")
    print(f"wald interval    : [{drml.wald_lo:.6g}, {drml.wald_hi:.6g}]")
    print(f"score set        : {cset.tag} {cset}")
    print(f"D_n(0)           : {dn0:.6g}  (z^2 = {z * z:.6g})")
    print(f"weak instrument  : {'yes' if weak else 'no'}")
    print(
        f"quadratic        : a={coeffs.a:.6g} b={coeffs.b:.6g} c={coeffs.c:.6g} "
        f"delta={coeffs.delta:.6g} (zero tolerances {tol_a:.3g}, {tol_delta:.3g})"
    )
    if math.isfinite(ratio):
        print(f"diameter ratio   : {ratio:.6g}")
    if args.out:
        e = cset.endpoints()
        e1 = repr(e[0]) if len(e) > 0 else ""
        e2 = repr(e[1]) if len(e) > 1 else ""
        with open(args.out, "w", newline="") as handle:
            handle.write(
                "n,alpha,phi_hat,sigma2_hat,wald_lo,wald_hi,set_tag,set_e1,set_e2,"
                "dn0,weak_instrument,a,b,c,delta,zero_tol_a,zero_tol_delta,"
                "diam_score,diam_wald,diam_ratio\n"
            )
            handle.write(
                f"{data.n},{args.alpha!r},{drml.phi_hat!r},{drml.sigma2_hat!r},"
                f"{drml.wald_lo!r},{drml.wald_hi!r},{cset.tag},{e1},{e2},"
                f"{dn0!r},{int(weak)},{coeffs.a!r},{coeffs.b!r},{coeffs.c!r},"
                f"{coeffs.delta!r},{tol_a!r},{tol_delta!r},"
                f"{diam_s!r},{diam_w!r},{ratio!r}\n"
            )
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        n_grid = tuple(int(v) for v in args.n.split(","))
    except ValueError:
        raise InvalidConfigError(f"bad --n list {args.n!r}") from None
    spec = StudySpec(
        setting=args.setting,
        pi=args.pi,
        n_grid=n_grid,
        reps=args.reps,
        alpha=args.alpha,
        seed=args.seed,
        learner=LearnerSpec(
            g_learner=_G_NAMES[args.g],
            r_learner=_R_NAMES[args.r],
            m_learner="known_constant",
            m_value=0.5,
        ),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    cells = run_study(spec)
    for cell in cells:
        print(
            f"setting={cell.setting} n={cell.n} pi={cell.pi:.6g}: "
            f"{len(cell.results)} replications done, {len(cell.failures)} failed"
        )
    rep_path = os.path.join(args.out_dir, "replications.csv")
    sum_path = os.path.join(args.out_dir, "summary.csv")
    write_replications_csv(cells, rep_path)
    write_summary_csv(cells, sum_path)
    print(f"wrote {rep_path}")
    print(f"wrote {sum_path}")
    return EXIT_OK


def cmd_scan(args) -> int:
    if not (math.isfinite(args.theta_min) and math.isfinite(args.theta_max)):
        raise InvalidConfigError("grid bounds must be finite")
    if args.theta_min >= args.theta_max:
        raise InvalidConfigError("--theta-min must be below --theta-max")
    if args.grid_points < 2:
        raise InvalidConfigError("--grid-points must be at least 2")
    data, scores = _fit_scores(args)
    coeffs = quad_coefficients(scores, args.alpha)
    if coeffs.degenerate:
        raise DegenerateDataError("both score vectors are identically zero")
    cset = invert_score_test(coeffs)
    z = coeffs.z_crit
    n = scores.n
    ma = float(np.mean(scores.psi_a))
    mb = float(np.mean(scores.psi_b))
    maa = float(np.mean(scores.psi_a**2))
    mbb = float(np.mean(scores.psi_b**2))
    mab = float(np.mean(scores.psi_a * scores.psi_b))
    thetas = np.linspace(args.theta_min, args.theta_max, args.grid_points)
    mismatches = 0
    with open(args.out, "w", newline="") as handle:
        handle.write("theta,s_n,member_by_quadratic,member_by_statistic\n")
        for theta in (float(t) for t in thetas):
            second = mbb - 2.0 * theta * mab + theta * theta * maa
            quad = coeffs.a * theta * theta + coeffs.b * theta + coeffs.c
            band = 1e-6 * (
                abs(coeffs.a) * theta * theta + abs(coeffs.b) * abs(theta) + abs(coeffs.c) + 1.0
            )
            by_quad = cset.contains(theta)
            if second > 0.0:
                s = math.sqrt(n) * (mb - theta * ma) / math.sqrt(second)
                by_stat = abs(s) <= z
                if by_quad != by_stat and abs(quad) > band:
                    mismatches += 1
                s_text = repr(s)
                stat_text = str(int(by_stat))
            else:
                s_text = "nan"
                stat_text = ""
            handle.write(f"{theta!r},{s_text},{int(by_quad)},{stat_text}\n")
    print(f"score set: {cset.tag} {cset}")
    print(f"mismatches outside boundary band: {mismatches}")
    if args.dump_scores:
        scores_path = args.out + ".scores.csv"
        with open(scores_path, "w", newline="") as handle:
            handle.write("psi_a,psi_b\n")
            for va, vb in zip(scores.psi_a, scores.psi_b):
                handle.write(f"{va!r},{vb!r}\n")
        print(f"wrote {scores_path}")
    return EXIT_OK


def cmd_weakiv_limit(args) -> int:
    if args.samples < 1:
        raise InvalidConfigError("--samples must be at least 1")
    try:
        cfg = WeakIVConfig(
            c_a=args.ca,
            c_b=args.cb,
            sigma_ab=np.array([[args.s11, args.s12], [args.s12, args.s22]]),
        )
    except DecompositionError as exc:
        raise InvalidConfigError(str(exc)) from None
    rng = np.random.Generator(np.random.PCG64(args.seed))
    draws = sample_weak_limit(cfg, rng, size=args.samples)
    with open(args.out, "w", newline="") as handle:
        handle.write("draw\n")
        for v in draws:
            handle.write(f"{float(v)!r}\n")
    print(f"wrote {args.samples} draws to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latescore",
        description="Score confidence sets and Wald intervals for the local average treatment effect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="run the full inference pipeline on a CSV file")
    _add_data_flags(analyze)
    analyze.add_argument("--out", default="", help="write a machine-readable CSV row here")
    analyze.set_defaults(func=cmd_analyze)

    simulate = sub.add_parser("simulate", help="run the replication study")
    simulate.add_argument("--setting", default="strong", choices=("weak", "strong", "custom"))
    simulate.add_argument("--pi", type=float, default=None, help="instrument strength (custom only)")
    simulate.add_argument("--n", default="1500,4500,7500,10500,12000", help="comma-separated sample sizes")
    simulate.add_argument("--reps", type=int, default=1000)
    simulate.add_argument("--alpha", type=float, default=0.05)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--g", default="cellmean", choices=sorted(_G_NAMES))
    simulate.add_argument("--r", default="cellmean", choices=sorted(_R_NAMES))
    simulate.add_argument("--out-dir", required=True, dest="out_dir")
    simulate.set_defaults(func=cmd_simulate)

    scan = sub.add_parser("scan", help="compare the set against the statistic on a theta grid")
    _add_data_flags(scan)
    scan.add_argument("--theta-min", type=float, required=True, dest="theta_min")
    scan.add_argument("--theta-max", type=float, required=True, dest="theta_max")
    scan.add_argument("--grid-points", type=int, default=2001, dest="grid_points")
    scan.add_argument("--dump-scores", action="store_true", dest="dump_scores")
    scan.add_argument("--out", required=True)
    scan.set_defaults(func=cmd_scan)

    weakiv = sub.add_parser("weakiv-limit", help="sample the weak-instrument limit distribution")
    weakiv.add_argument("--ca", type=float, required=True)
    weakiv.add_argument("--cb", type=float, required=True)
    weakiv.add_argument("--s11", type=float, required=True)
    weakiv.add_argument("--s12", type=float, required=True)
    weakiv.add_argument("--s22", type=float, required=True)
    weakiv.add_argument("--samples", type=int, default=100000)
    weakiv.add_argument("--seed", type=int, default=0)
    weakiv.add_argument("--out", required=True)
    weakiv.set_defaults(func=cmd_weakiv_limit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (InvalidConfigError, CsvParseError, DecompositionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateDataError, DegenerateFoldError, PositivityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    raise SystemExit(main())
