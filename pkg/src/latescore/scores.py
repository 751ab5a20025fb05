"""Per-unit influence-function scores.

For nuisances (m, r, g) the two score components of unit i are

    psi_b = (2z - 1) / m(z | x) * (y - g(z, x)) + g(1, x) - g(0, x)
    psi_a = (2z - 1) / m(z | x) * (a - r(z, x)) + r(1, x) - r(0, x)

with m(1 | x) stored once and m(0 | x) = 1 - m(1 | x).  The target ratio
equals E[psi_b] / E[psi_a], so every downstream statistic is a function
of empirical moments of these two vectors.  No trimming or winsorizing is
applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InvalidConfigError, PositivityError
from .nuisance import NuisancePredictions


@dataclass(frozen=True)
class ScoreSample:
    """The paired per-unit score vectors (psi_a, psi_b)."""

    psi_a: np.ndarray
    psi_b: np.ndarray

    def __post_init__(self) -> None:
        psi_a = np.asarray(self.psi_a, dtype=float)
        psi_b = np.asarray(self.psi_b, dtype=float)
        if psi_a.shape != psi_b.shape or psi_a.ndim != 1:
            raise InvalidConfigError(
                f"score vectors must be 1-d and equal length, got {psi_a.shape} and {psi_b.shape}"
            )
        if not (np.all(np.isfinite(psi_a)) and np.all(np.isfinite(psi_b))):
            raise InvalidConfigError("scores must be finite")
        psi_a.setflags(write=False)
        psi_b.setflags(write=False)
        object.__setattr__(self, "psi_a", psi_a)
        object.__setattr__(self, "psi_b", psi_b)

    @property
    def n(self) -> int:
        return self.psi_a.shape[0]


def compute_scores(data: Dataset, preds: NuisancePredictions) -> ScoreSample:
    """Plug nuisance predictions into the score formulas, unit by unit."""
    if preds.n != data.n:
        raise InvalidConfigError(f"predictions cover {preds.n} units but the data has {data.n}")
    if preds.m1.min() <= 0.0 or preds.m1.max() >= 1.0:
        raise PositivityError("m1 must lie strictly inside (0, 1)")
    z = data.z
    sign = 2.0 * z - 1.0
    m_z = np.where(z == 1, preds.m1, 1.0 - preds.m1)
    g_z = np.where(z == 1, preds.g1, preds.g0)
    r_z = np.where(z == 1, preds.r1, preds.r0)
    psi_b = sign / m_z * (data.y - g_z) + preds.g1 - preds.g0
    psi_a = sign / m_z * (data.a - r_z) + preds.r1 - preds.r0
    return ScoreSample(psi_a=psi_a, psi_b=psi_b)


def functional_oracle(pi: float, treatment_shift: float = 0.0) -> float:
    """True target ratio for the simulated family of laws.

    In that family Y = 2*sign(U) + treatment_shift*A with U independent of
    (Z, X), so the intent-to-treat contrast of Y equals treatment_shift
    times the contrast of A and the ratio is treatment_shift exactly.
    With pi = 0 the instrument has no effect on treatment and the ratio
    is undefined.
    """
    if pi == 0.0:
        raise InvalidConfigError(
            "the target ratio is undefined at pi=0 (zero instrument effect on treatment)"
        )
    return treatment_shift
