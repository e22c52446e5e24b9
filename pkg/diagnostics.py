"""
Diagnostics for QuotaScan
Leave-one-out share dispersion (independence check), correlations used to
interpret deviations, the deviation-sign test and per-discipline descriptives.
"""

import logging
import math
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats
from statsmodels.stats.proportion import proportions_ztest

from deviations import DeviationTable
from ingest import Dataset, DataValidationError, Stratum

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
TRUE_WORDS = {"true", "t", "yes", "y", "1"}
FALSE_WORDS = {"false", "f", "no", "n", "0"}


class CorrelationKind(str, Enum):
    DEVIATION_SIGN_VS_SHARE = "deviation_sign_vs_share"
    SIZE_VS_SHARE = "size_vs_share"
    ATTRIBUTE_VS_DEVIATION = "attribute_vs_deviation"


class CorrelationStatus(str, Enum):
    OK = "ok"
    # a variable is constant; no correlation exists
    UNDEFINED = "undefined"
    # |rho| = 1; p-value 0 and a zero-width interval
    DEGENERATE = "degenerate"


class LooReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    stratum_key: str
    share: float
    loo_counts: Tuple[Tuple[int, int], ...]
    loo_shares: Tuple[float, ...]
    std_dev: float
    reject_fraction: float
    alpha: float
    std_kind: str = "population"

    @property
    def loo_fractions(self) -> List[Fraction]:
        return [Fraction(w, n) for w, n in self.loo_counts]

    @property
    def pooled_share(self) -> Fraction:
        """sum_d (W - y_d) / sum_d (N - n_d); equals the stratum share."""
        return Fraction(sum(w for w, _ in self.loo_counts), sum(n for _, n in self.loo_counts))


class CorrelationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: CorrelationKind
    z: Optional[int] = None
    n: int
    status: CorrelationStatus
    rho: Optional[float] = None
    p_value: Optional[float] = None
    ci_95: Optional[Tuple[float, float]] = None
    attribute: Optional[str] = None


class SignReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    z: int
    n_strata: int
    n_negative: int
    n_zero: int
    fraction_negative: Optional[float] = None
    p_value: Optional[float] = None


class StratumSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    discipline: str
    departments: int
    total_size: int
    total_minority: int
    share: float
    mean_size: float
    degenerate: bool
    attributes: Dict[str, str] = {}


def leave_one_out(stratum: Stratum, alpha: float = DEFAULT_ALPHA) -> LooReport:
    """Share of the stratum pool with each department's own members removed.

    Each leave-one-out share (W - y_d)/(N - n_d) is compared with the full share W/N by a
    pooled two-proportion z-test; the fraction of departments where it rejects at `alpha`
    is reported.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    total, women = stratum.total_size, stratum.total_minority
    counts = []
    for department in stratum.departments:
        rest = total - department.size
        if rest <= 0:
            raise DataValidationError(
                f"department {department.unit_key} is the whole of stratum {stratum.key}"
            )
        counts.append((women - department.minority, rest))

    shares = np.array([w / n for w, n in counts])
    rejections = 0
    for w, n in counts:
        pooled = (w + women) / (n + total)
        if pooled in (0.0, 1.0):
            continue
        _, p_value = proportions_ztest(np.array([w, women]), np.array([n, total]))
        if p_value < alpha:
            rejections += 1

    return LooReport(
        stratum_key=stratum.key,
        share=stratum.share_float,
        loo_counts=tuple(counts),
        loo_shares=tuple(float(Fraction(w, n)) for w, n in counts),
        std_dev=float(np.std(shares)),
        reject_fraction=rejections / len(counts),
        alpha=alpha,
    )


def _pearson(
    x: Sequence[float],
    y: Sequence[float],
    kind: CorrelationKind,
    z: Optional[int] = None,
    attribute: Optional[str] = None,
) -> CorrelationReport:
    """Pearson correlation with a t-test p-value and a Fisher-z 95% interval."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    n = len(x)
    base = dict(kind=kind, z=z, n=n, attribute=attribute)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        logger.warning(f"Correlation {kind.value} undefined: a variable is constant across {n} strata")
        return CorrelationReport(status=CorrelationStatus.UNDEFINED, **base)

    rho = float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))
    if abs(rho) > 1.0 - 1e-12:
        rho = math.copysign(1.0, rho)
        return CorrelationReport(status=CorrelationStatus.DEGENERATE, rho=rho, p_value=0.0, ci_95=(rho, rho), **base)

    t = rho * math.sqrt((n - 2) / (1.0 - rho**2))
    p_value = float(2.0 * stats.t.sf(abs(t), n - 2))
    if n > 3:
        half_width = stats.norm.ppf(0.975) / math.sqrt(n - 3)
        centre = math.atanh(rho)
        ci = (math.tanh(centre - half_width), math.tanh(centre + half_width))
    else:
        ci = (-1.0, 1.0)
    return CorrelationReport(status=CorrelationStatus.OK, rho=rho, p_value=p_value, ci_95=ci, **base)


def _deviations_at(tables: Sequence[DeviationTable], z: int) -> Dict[str, float]:
    deviations = {}
    for table in tables:
        if z > table.z_max:
            raise ValueError(f"z={z} beyond the tables' z_max={table.z_max}")
        deviations[table.scope] = table.row(z).deviation
    return deviations


def deviation_sign_correlation(
    dataset: Dataset, per_stratum_tables: Sequence[DeviationTable], z: int
) -> CorrelationReport:
    """Correlation across strata between {deviation_zs < 0} and the share p_s."""
    deviations = _deviations_at(per_stratum_tables, z)
    strata = [s for s in dataset.strata if s.key in deviations]
    if len(strata) < 3:
        raise ValueError(f"need at least 3 strata with deviations at z={z}, got {len(strata)}")
    negative = [1.0 if deviations[s.key] < 0.0 else 0.0 for s in strata]
    shares = [s.share_float for s in strata]
    return _pearson(negative, shares, CorrelationKind.DEVIATION_SIGN_VS_SHARE, z=z)


def size_share_correlation(dataset: Dataset) -> CorrelationReport:
    """Correlation across strata between mean department size and the share."""
    if dataset.n_strata < 3:
        raise ValueError(f"need at least 3 strata, got {dataset.n_strata}")
    sizes = [s.mean_size for s in dataset.strata]
    shares = [s.share_float for s in dataset.strata]
    return _pearson(sizes, shares, CorrelationKind.SIZE_VS_SHARE)


def attribute_value(raw: str) -> Optional[float]:
    """Numeric code for an attribute: boolean words map to 1/0, otherwise a float."""
    word = raw.strip().lower()
    if word in TRUE_WORDS:
        return 1.0
    if word in FALSE_WORDS:
        return 0.0
    try:
        return float(word)
    except ValueError:
        return None


def attribute_correlation(
    dataset: Dataset, per_stratum_tables: Sequence[DeviationTable], z: int, key: str
) -> CorrelationReport:
    """Correlation across strata between a stratum attribute and deviation_zs."""
    deviations = _deviations_at(per_stratum_tables, z)
    pairs = []
    for stratum in dataset.strata:
        if stratum.key not in deviations or key not in stratum.attributes:
            continue
        value = attribute_value(stratum.attributes[key])
        if value is None:
            logger.warning(f"Attribute {key}={stratum.attributes[key]!r} of {stratum.key} is not numeric; skipped")
            continue
        pairs.append((value, deviations[stratum.key]))

    if len(pairs) < 3:
        logger.warning(f"Attribute {key!r} carried by {len(pairs)} strata; correlation undefined")
        return CorrelationReport(
            kind=CorrelationKind.ATTRIBUTE_VS_DEVIATION,
            z=z,
            n=len(pairs),
            status=CorrelationStatus.UNDEFINED,
            attribute=key,
        )
    values, devs = zip(*pairs)
    return _pearson(values, devs, CorrelationKind.ATTRIBUTE_VS_DEVIATION, z=z, attribute=key)


def deviation_sign_test(per_stratum_tables: Sequence[DeviationTable], z: int) -> SignReport:
    """Exact binomial test that negative and positive deviations at z are equally likely."""
    deviations = list(_deviations_at(per_stratum_tables, z).values())
    n_zero = sum(1 for d in deviations if d == 0.0)
    n_negative = sum(1 for d in deviations if d < 0.0)
    n = len(deviations) - n_zero
    if n == 0:
        return SignReport(z=z, n_strata=0, n_negative=0, n_zero=n_zero)
    return SignReport(
        z=z,
        n_strata=n,
        n_negative=n_negative,
        n_zero=n_zero,
        fraction_negative=n_negative / n,
        p_value=float(stats.binomtest(n_negative, n, 0.5).pvalue),
    )


def describe_strata(dataset: Dataset) -> List[StratumSummary]:
    return [
        StratumSummary(
            discipline=s.key,
            departments=s.n_units,
            total_size=s.total_size,
            total_minority=s.total_minority,
            share=s.share_float,
            mean_size=s.mean_size,
            degenerate=s.degenerate,
            attributes=dict(s.attributes),
        )
        for s in dataset.strata
    ]
