"""
Counterfactual Quota Simulation for QuotaScan
Replaces every department's minority count by min(q, n_ds) and reports the
discipline shares such a fixed per-department quota would produce.
"""

import logging
import math
from fractions import Fraction
from typing import Dict, List, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict

from ingest import Dataset

logger = logging.getLogger(__name__)

DEFAULT_QUOTA = 2


class QuotaScenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    quota: int
    weighted: bool = False
    stratum_keys: Tuple[str, ...]
    per_stratum_shares: Dict[str, float]
    actual_shares: Dict[str, float]
    mean_share_sim: float
    mean_share_actual: float
    per_department_counts: Dict[str, Tuple[int, ...]]


def _mean(shares: List[Fraction], weights: List[int], weighted: bool) -> float:
    if weighted:
        return float(sum(s * w for s, w in zip(shares, weights)) / sum(weights))
    return math.fsum(float(s) for s in shares) / len(shares)


def apply_quota(dataset: Dataset, q: int, weighted: bool = False) -> QuotaScenario:
    """Counterfactual where every department holds exactly min(q, n_ds) minority members."""
    if q < 0:
        raise ValueError(f"quota must be non-negative, got {q}")

    counts: Dict[str, Tuple[int, ...]] = {}
    simulated: List[Fraction] = []
    actual: List[Fraction] = []
    for stratum in dataset.strata:
        capped = tuple(min(q, size) for size in stratum.sizes)
        counts[stratum.key] = capped
        simulated.append(Fraction(sum(capped), stratum.total_size))
        actual.append(stratum.share)

    weights = [s.total_size for s in dataset.strata]
    scenario = QuotaScenario(
        quota=q,
        weighted=weighted,
        stratum_keys=tuple(s.key for s in dataset.strata),
        per_stratum_shares={s.key: float(share) for s, share in zip(dataset.strata, simulated)},
        actual_shares={s.key: float(share) for s, share in zip(dataset.strata, actual)},
        mean_share_sim=_mean(simulated, weights, weighted),
        mean_share_actual=_mean(actual, weights, weighted),
        per_department_counts=counts,
    )
    logger.info(
        f"Quota {q}: mean share {scenario.mean_share_sim:.4f} simulated vs {scenario.mean_share_actual:.4f} actual"
    )
    return scenario


def share_vectors(dataset: Dataset, scenario: QuotaScenario) -> Tuple[List[float], List[float]]:
    """Actual and simulated shares aligned in stratum order."""
    keys = tuple(s.key for s in dataset.strata)
    if keys != scenario.stratum_keys:
        raise ValueError("quota scenario was built from a different dataset")
    actual = [s.share_float for s in dataset.strata]
    simulated = [scenario.per_stratum_shares[key] for key in keys]
    return actual, simulated


def shares_frame(dataset: Dataset, scenario: QuotaScenario) -> pd.DataFrame:
    actual, simulated = share_vectors(dataset, scenario)
    return pd.DataFrame(
        {"discipline": list(scenario.stratum_keys), "actual_share": actual, "simulated_share": simulated}
    )


def export_shares(dataset: Dataset, scenario: QuotaScenario, path: str) -> None:
    shares_frame(dataset, scenario).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"Wrote quota shares for {len(scenario.stratum_keys)} disciplines to {path}")
