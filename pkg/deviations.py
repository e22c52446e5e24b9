"""
Deviation Tables and Asymptotic Test for QuotaScan
Compares the observed number of departments with exactly z minority members
against the Poisson-binomial expectation, overall and per discipline.
"""

import logging
import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ingest import Dataset, Stratum
from poisson_binomial import z_pmf_matrix

logger = logging.getLogger(__name__)

DEFAULT_Z_MAX = 10
OVERALL_SCOPE = "overall"


class Sidedness(str, Enum):
    TWO_SIDED = "two_sided"
    ONE_SIDED = "one_sided_directional"


class DeviationRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    z: int
    observed: int
    expected: float
    variance: float
    deviation: float
    # None when the variance is zero
    statistic: Optional[float] = None
    p_value: Optional[float] = None


class DeviationTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: Tuple[DeviationRow, ...]
    residual_count: int
    total_departments: int
    scope: str = OVERALL_SCOPE
    sidedness: Sidedness = Sidedness.TWO_SIDED
    excluded_strata: Tuple[str, ...] = ()

    @property
    def z_max(self) -> int:
        return len(self.rows) - 1

    def row(self, z: int) -> DeviationRow:
        return self.rows[z]


def normal_cdf(x: float) -> float:
    """Standard normal CDF via erf near the centre and erfc in the tails."""
    t = x / math.sqrt(2.0)
    if abs(t) < 1.0 / math.sqrt(2.0):
        return 0.5 + 0.5 * math.erf(t)
    tail = 0.5 * math.erfc(abs(t))
    return 1.0 - tail if t > 0 else tail


def normal_p_value(statistic: float, sidedness: Sidedness = Sidedness.TWO_SIDED) -> float:
    if math.isnan(statistic):
        raise ValueError("statistic is NaN")
    if Sidedness(sidedness) is Sidedness.TWO_SIDED:
        return min(1.0, 2.0 * normal_cdf(-abs(statistic)))
    return normal_cdf(-statistic)


def observed_count(stratum: Stratum, z: int) -> int:
    """H_z: number of departments with exactly z minority members."""
    return sum(1 for m in stratum.minorities if m == z)


def stratum_columns(stratum: Stratum, z_max: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Observed counts, expectations and variances for z = 0..z_max, plus the residual count."""
    minorities = np.asarray(stratum.minorities, dtype=np.int64)
    observed = np.bincount(minorities[minorities <= z_max], minlength=z_max + 1)
    probs = z_pmf_matrix(stratum.sizes, stratum.share_float, z_max)
    expected = np.array([math.fsum(col) for col in probs.T])
    variance = np.array([math.fsum(col) for col in (probs * (1.0 - probs)).T])
    residual = int(np.sum(minorities > z_max))
    return observed, expected, variance, residual


def _rows(observed, expected, variance, sidedness: Sidedness) -> Tuple[DeviationRow, ...]:
    rows = []
    for z, (obs, exp, var) in enumerate(zip(observed, expected, variance)):
        deviation = float(obs) - float(exp)
        statistic = p_value = None
        if var > 0.0:
            statistic = deviation / math.sqrt(var)
            p_value = normal_p_value(statistic, sidedness)
        rows.append(
            DeviationRow(
                z=z,
                observed=int(obs),
                expected=float(exp),
                variance=float(var),
                deviation=deviation,
                statistic=statistic,
                p_value=p_value,
            )
        )
    return tuple(rows)


def _validate(dataset: Dataset, z_max: int) -> List[Stratum]:
    if z_max < 0:
        raise ValueError(f"z_max must be non-negative, got {z_max}")
    active = dataset.active_strata
    if not active:
        raise ValueError("all strata are degenerate (share 0 or 1); nothing to test")
    return active


def deviation_table(
    dataset: Dataset,
    z_max: int = DEFAULT_Z_MAX,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
) -> DeviationTable:
    """Observed minus expected counts summed over non-degenerate strata, with normal p-values.

    The statistic sqrt(S)(mean_s H_zs - E H_zs) / sqrt(sum_s Var H_zs / S) reduces to
    (sum_s H_zs - sum_s f_zs) / sqrt(sum_s Var H_zs) after cancelling S.
    Sums use math.fsum so the result does not depend on stratum order.
    """
    sidedness = Sidedness(sidedness)
    active = _validate(dataset, z_max)

    columns = [stratum_columns(s, z_max) for s in active]
    observed = np.sum([c[0] for c in columns], axis=0)
    expected = [math.fsum(values) for values in zip(*(c[1] for c in columns))]
    variance = [math.fsum(values) for values in zip(*(c[2] for c in columns))]
    residual = sum(c[3] for c in columns)

    excluded = tuple(dataset.degenerate_strata)
    if excluded:
        logger.info(f"Excluded {len(excluded)} degenerate strata from the deviation table")

    return DeviationTable(
        rows=_rows(observed, expected, variance, sidedness),
        residual_count=residual,
        total_departments=sum(s.n_units for s in active),
        scope=OVERALL_SCOPE,
        sidedness=sidedness,
        excluded_strata=excluded,
    )


def per_stratum_tables(
    dataset: Dataset,
    z_max: int = DEFAULT_Z_MAX,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
) -> List[DeviationTable]:
    """One deviation table per non-degenerate stratum, in stratum order."""
    sidedness = Sidedness(sidedness)
    tables = []
    for stratum in _validate(dataset, z_max):
        observed, expected, variance, residual = stratum_columns(stratum, z_max)
        tables.append(
            DeviationTable(
                rows=_rows(observed, expected, variance, sidedness),
                residual_count=residual,
                total_departments=stratum.n_units,
                scope=stratum.key,
                sidedness=sidedness,
            )
        )
    return tables
