"""Score-test inversion, the ratio estimator and its Wald interval.

The level 1-alpha confidence set is {theta : |S_n(theta)| <= z} with

    S_n(theta) = sqrt(n) * mean(psi_b - theta*psi_a)
                 / sqrt(mean((psi_b - theta*psi_a)^2))

and z the 1-alpha/2 standard-normal quantile.  Membership is equivalent
to the quadratic inequality a*theta^2 + b*theta + c <= 0, whose solution
set is one of seven forms: a finite interval, a union of two rays, the
empty set, the whole line, a left or right ray, or a single point.

The denominator of S_n is the raw (uncentered) second moment, and the
variance estimate of the ratio estimator uses the uncentered residual
second moment; both choices are deliberate and load-bearing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidConfigError, WeakDenominatorError
from .scores import ScoreSample

#: Relative tolerance for treating a or delta as zero when classifying
#: the quadratic; the matching absolute tolerances are exposed through
#: :func:`zero_tolerances` for auditing.
DEFAULT_ZERO_TOL = 1e-12


def normal_quantile(p: float) -> float:
    """Standard-normal quantile via the AS 241 rational approximation.

    Implemented internally (double-precision PPND16 scheme); absolute
    error is far below 1e-12 over (0, 1).
    """
    if not 0.0 < p < 1.0:
        raise InvalidConfigError(f"quantile argument must lie in (0, 1), got {p}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    value = num / den
    return -value if q < 0 else value


def score_statistic(scores: ScoreSample, theta: float) -> float:
    """Studentized score statistic S_n(theta)."""
    d = scores.psi_b - theta * scores.psi_a
    second = float(np.mean(d * d))
    if second <= 0.0:
        raise DegenerateDataError(
            f"second moment of psi_b - theta*psi_a is zero at theta={theta}"
        )
    return math.sqrt(scores.n) * float(np.mean(d)) / math.sqrt(second)


@dataclass(frozen=True)
class QuadCoefficients:
    """Coefficients of the membership inequality a*t^2 + b*t + c <= 0.

    ``a_scale`` is the magnitude of the two cancelling terms in a and is
    the reference against which a is treated as zero; ``degenerate``
    marks identically-zero score data, for which no set is meaningful.
    """

    a: float
    b: float
    c: float
    delta: float
    n: int
    z_crit: float
    a_scale: float = 1.0
    degenerate: bool = False


def quad_coefficients(scores: ScoreSample, alpha: float) -> QuadCoefficients:
    """Assemble the quadratic from the empirical score moments."""
    if not 0.0 < alpha < 1.0:
        raise InvalidConfigError(f"alpha must lie in (0, 1), got {alpha}")
    n = scores.n
    if n < 2:
        raise InvalidConfigError(f"need at least 2 score pairs, got {n}")
    z = normal_quantile(1.0 - alpha / 2.0)
    z2 = z * z
    ma = float(np.mean(scores.psi_a))
    mb = float(np.mean(scores.psi_b))
    maa = float(np.mean(scores.psi_a * scores.psi_a))
    mbb = float(np.mean(scores.psi_b * scores.psi_b))
    mab = float(np.mean(scores.psi_a * scores.psi_b))
    a = n * ma * ma - z2 * maa
    b = -2.0 * n * ma * mb + 2.0 * z2 * mab
    c = n * mb * mb - z2 * mbb
    return QuadCoefficients(
        a=a,
        b=b,
        c=c,
        delta=b * b - 4.0 * a * c,
        n=n,
        z_crit=z,
        a_scale=max(n * ma * ma, z2 * maa, 1.0),
        degenerate=(maa == 0.0 and mbb == 0.0),
    )


class ConfidenceSet:
    """Base of the seven set forms; see the concrete subclasses."""

    tag: str = ""

    def contains(self, theta: float) -> bool:
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def endpoints(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class FiniteInterval(ConfidenceSet):
    lo: float
    hi: float
    tag = "finite_interval"

    def __post_init__(self) -> None:
        if not self.lo <= self.hi:
            raise InvalidConfigError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")

    def contains(self, theta: float) -> bool:
        return self.lo <= theta <= self.hi

    def diameter(self) -> float:
        return self.hi - self.lo

    def endpoints(self) -> tuple[float, ...]:
        return (self.lo, self.hi)

    def __str__(self) -> str:
        return f"[{self.lo:.6g}, {self.hi:.6g}]"


@dataclass(frozen=True)
class TwoRays(ConfidenceSet):
    """(-inf, left_hi] union [right_lo, inf)."""

    left_hi: float
    right_lo: float
    tag = "two_rays"

    def contains(self, theta: float) -> bool:
        return theta <= self.left_hi or theta >= self.right_lo

    def diameter(self) -> float:
        return math.inf

    def endpoints(self) -> tuple[float, ...]:
        return (self.left_hi, self.right_lo)

    def __str__(self) -> str:
        return f"(-inf, {self.left_hi:.6g}] U [{self.right_lo:.6g}, inf)"


@dataclass(frozen=True)
class EmptySet(ConfidenceSet):
    tag = "empty"

    def contains(self, theta: float) -> bool:
        return False

    def diameter(self) -> float:
        return 0.0

    def __str__(self) -> str:
        return "{}"


@dataclass(frozen=True)
class WholeLine(ConfidenceSet):
    tag = "whole_line"

    def contains(self, theta: float) -> bool:
        return True

    def diameter(self) -> float:
        return math.inf

    def __str__(self) -> str:
        return "(-inf, inf)"


@dataclass(frozen=True)
class LeftRay(ConfidenceSet):
    """(-inf, hi]."""

    hi: float
    tag = "left_ray"

    def contains(self, theta: float) -> bool:
        return theta <= self.hi

    def diameter(self) -> float:
        return math.inf

    def endpoints(self) -> tuple[float, ...]:
        return (self.hi,)

    def __str__(self) -> str:
        return f"(-inf, {self.hi:.6g}]"


@dataclass(frozen=True)
class RightRay(ConfidenceSet):
    """[lo, inf)."""

    lo: float
    tag = "right_ray"

    def contains(self, theta: float) -> bool:
        return theta >= self.lo

    def diameter(self) -> float:
        return math.inf

    def endpoints(self) -> tuple[float, ...]:
        return (self.lo,)

    def __str__(self) -> str:
        return f"[{self.lo:.6g}, inf)"


@dataclass(frozen=True)
class Point(ConfidenceSet):
    value: float
    tag = "point"

    def contains(self, theta: float) -> bool:
        return theta == self.value

    def diameter(self) -> float:
        return 0.0

    def endpoints(self) -> tuple[float, ...]:
        return (self.value,)

    def __str__(self) -> str:
        return f"{{{self.value:.6g}}}"


def zero_tolerances(coeffs: QuadCoefficients, tol: float = DEFAULT_ZERO_TOL) -> tuple[float, float]:
    """Absolute thresholds below which a and delta are classified as zero."""
    tol_a = tol * coeffs.a_scale
    tol_delta = tol * max(coeffs.b * coeffs.b, 4.0 * abs(coeffs.a * coeffs.c), 1.0)
    return tol_a, tol_delta


def invert_score_test(coeffs: QuadCoefficients, tol: float = DEFAULT_ZERO_TOL) -> ConfidenceSet:
    """Solve a*theta^2 + b*theta + c <= 0 exactly, by case analysis.

    Classification of the signs of a and delta uses the banded zero
    tests from :func:`zero_tolerances`.  Every input maps to a set:

    - delta > 0, a > 0: [r1, r2]
    - delta > 0, a < 0: (-inf, r2] U [r1, inf)   (r2 <= r1 here)
    - delta < 0, a > 0: empty set
    - delta < 0, a < 0: whole line
    - delta != 0, a = 0: (-inf, -c/b] if b > 0 else [-c/b, inf)
    - delta = 0, a > 0: the point {-b / (2a)}
    - delta = 0, a < 0: whole line
    - delta = 0, a = 0: whole line if c <= 0 else empty set

    with r1 = (-b - sqrt(delta)) / (2a) and r2 = (-b + sqrt(delta)) / (2a).
    At delta = 0 the quadratic is a*(theta + b/(2a))^2; for a < 0 this
    is a downward parabola with maximum zero, so the inequality holds
    everywhere and only a > 0 pins the set to the vertex.  That branch
    is not a theoretical corner: whenever the instrument moves no
    treatment decision in the realized sample, psi_b can be an exact
    multiple of psi_a and delta vanishes identically.
    """
    a, b, c, delta = coeffs.a, coeffs.b, coeffs.c, coeffs.delta
    tol_a, tol_delta = zero_tolerances(coeffs, tol)
    a_zero = abs(a) <= tol_a
    delta_zero = abs(delta) <= tol_delta

    if a_zero and delta_zero:
        return WholeLine() if c <= 0.0 else EmptySet()
    if a_zero:
        if b > 0.0:
            return LeftRay(hi=-c / b)
        if b < 0.0:
            return RightRay(lo=-c / b)
        # b is exactly zero yet delta escaped the band: a and b are both
        # negligible, so the inequality reduces to c <= 0.
        return WholeLine() if c <= 0.0 else EmptySet()
    if delta_zero:
        return Point(value=-b / (2.0 * a)) if a > 0.0 else WholeLine()
    if delta > 0.0:
        root = math.sqrt(delta)
        r1 = (-b - root) / (2.0 * a)
        r2 = (-b + root) / (2.0 * a)
        if a > 0.0:
            return FiniteInterval(lo=r1, hi=r2)
        return TwoRays(left_hi=r2, right_lo=r1)
    return EmptySet() if a > 0.0 else WholeLine()


def score_confidence_set(
    scores: ScoreSample, alpha: float, tol: float = DEFAULT_ZERO_TOL
) -> ConfidenceSet:
    """Convenience wrapper: coefficients plus inversion in one call."""
    coeffs = quad_coefficients(scores, alpha)
    if coeffs.degenerate:
        raise DegenerateDataError("both score vectors are identically zero")
    return invert_score_test(coeffs, tol)


@dataclass(frozen=True)
class DrmlResult:
    """Ratio estimate, variance estimate and Wald interval."""

    phi_hat: float
    sigma2_hat: float
    wald_lo: float
    wald_hi: float
    alpha: float

    def diameter(self) -> float:
        return self.wald_hi - self.wald_lo

    def contains(self, theta: float) -> bool:
        return self.wald_lo <= theta <= self.wald_hi


def drml_estimate(
    scores: ScoreSample, alpha: float, tol: float = DEFAULT_ZERO_TOL
) -> DrmlResult:
    """Point estimate mean(psi_b)/mean(psi_a) with its Wald interval.

    The variance estimate is mean((psi_b - phi_hat*psi_a)^2) divided by
    mean(psi_a)^2; the interval is phi_hat -/+ z * sigma_hat / sqrt(n).
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidConfigError(f"alpha must lie in (0, 1), got {alpha}")
    n = scores.n
    ma = float(np.mean(scores.psi_a))
    maa = float(np.mean(scores.psi_a * scores.psi_a))
    if abs(ma) <= tol * max(math.sqrt(maa), 1.0):
        raise WeakDenominatorError(
            "mean(psi_a) is numerically zero; the ratio estimator is undefined "
            "and the score confidence set should be used instead"
        )
    phi_hat = float(np.mean(scores.psi_b)) / ma
    resid = scores.psi_b - phi_hat * scores.psi_a
    sigma2 = float(np.mean(resid * resid)) / (ma * ma)
    z = normal_quantile(1.0 - alpha / 2.0)
    half = z * math.sqrt(sigma2 / n)
    return DrmlResult(
        phi_hat=phi_hat,
        sigma2_hat=sigma2,
        wald_lo=phi_hat - half,
        wald_hi=phi_hat + half,
        alpha=alpha,
    )


def dn_statistic(psi_a: np.ndarray, theta: float) -> float:
    """Instrument-strength statistic n*(mean(psi_a)-theta)^2 / mean((psi_a-theta)^2).

    A zero numerator yields 0 outright (this covers the constant
    psi_a = theta sample, where the ratio is formally 0/0); a zero
    denominator with a nonzero numerator cannot occur in exact
    arithmetic and is reported as degenerate data.
    """
    psi_a = np.asarray(psi_a, dtype=float)
    n = psi_a.shape[0]
    m = float(np.mean(psi_a)) - theta
    if m == 0.0:
        return 0.0
    d = psi_a - theta
    second = float(np.mean(d * d))
    if second <= 0.0:
        raise DegenerateDataError(f"second moment of psi_a - theta is zero at theta={theta}")
    return n * m * m / second


def instrument_is_weak(psi_a: np.ndarray, alpha: float) -> tuple[float, bool]:
    """D_n(0) and the flag D_n(0) <= z^2, marking an uninformative instrument.

    The score confidence set has infinite diameter exactly when the flag
    is set (apart from the degenerate all-zero-coefficient corner).
    """
    dn0 = dn_statistic(psi_a, 0.0)
    z = normal_quantile(1.0 - alpha / 2.0)
    return dn0, dn0 <= z * z
