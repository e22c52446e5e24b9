"""
Synthetic Corpora for QuotaScan
Generates null-world (random hiring) and quota-world corpora, plus the
single-discipline example corpus, deterministically from a seed.
"""

import logging
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ingest import DEFAULT_MIN_SIZE, Dataset, DepartmentRecord, build_dataset

logger = logging.getLogger(__name__)

# span of discipline shares seen in national faculty rosters
FULL_SCALE_SHARE_RANGE = (0.07, 0.49)
FULL_SCALE_SIZE_RANGE = (5, 40)
FULL_SCALE_STRATA = 50
FULL_SCALE_DEPARTMENTS = (30, 40)

# first six sizes are fixed; the rest fill out 20 departments
EXAMPLE_SIZES = [20, 23, 30, 34, 32, 36, 25, 28, 19, 31, 27, 22, 35, 24, 29, 33, 21, 26, 38, 30]
EXAMPLE_SHARE = 0.2


class Regime(str, Enum):
    NULL_RANDOM = "null_random"
    HARD_QUOTA = "hard_quota"
    SOFT_QUOTA = "soft_quota"


class CorpusSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_strata: int = Field(default=FULL_SCALE_STRATA, ge=1)
    departments_per_stratum: Union[int, Tuple[int, int]] = FULL_SCALE_DEPARTMENTS
    size_range: Tuple[int, int] = FULL_SCALE_SIZE_RANGE
    share_range: Tuple[float, float] = FULL_SCALE_SHARE_RANGE
    regime: Regime = Regime.NULL_RANDOM
    quota: int = Field(default=2, ge=0)
    # probability that a department escapes the quota and is drawn at random
    leak: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)
    min_size: int = Field(default=DEFAULT_MIN_SIZE, ge=0)
    # explicit department sizes, used for every stratum when given
    sizes: Optional[List[int]] = None

    @model_validator(mode="after")
    def _check_feasible(self):
        lo, hi = self.size_range
        if lo > hi:
            raise ValueError(f"size range {self.size_range} is not ordered")
        if lo < self.min_size:
            raise ValueError(f"size range starts below the minimum department size {self.min_size}")
        share_lo, share_hi = self.share_range
        if not 0.0 <= share_lo <= share_hi <= 1.0:
            raise ValueError(f"share range {self.share_range} must be ordered within [0, 1]")
        if isinstance(self.departments_per_stratum, tuple):
            d_lo, d_hi = self.departments_per_stratum
            if not 1 <= d_lo <= d_hi:
                raise ValueError(f"departments per stratum {self.departments_per_stratum} must be ordered and >= 1")
        elif self.departments_per_stratum < 1:
            raise ValueError("departments per stratum must be >= 1")
        if self.sizes is not None:
            if not self.sizes:
                raise ValueError("explicit sizes must not be empty")
            if min(self.sizes) < self.min_size:
                raise ValueError("explicit sizes fall below the minimum department size")
        return self


def example_spec(seed: int = 0) -> CorpusSpec:
    """One discipline, 20 departments, share 0.2."""
    return CorpusSpec(
        n_strata=1,
        sizes=EXAMPLE_SIZES,
        share_range=(EXAMPLE_SHARE, EXAMPLE_SHARE),
        regime=Regime.NULL_RANDOM,
        seed=seed,
    )


def full_scale_spec(regime: Regime = Regime.NULL_RANDOM, seed: int = 0, quota: int = 2, leak: float = 0.0) -> CorpusSpec:
    """50 disciplines of 30-40 departments sized 5-40, shares 0.07-0.49."""
    return CorpusSpec(regime=regime, seed=seed, quota=quota, leak=leak)


def _counts(spec: CorpusSpec, sizes: np.ndarray, share: float, rng: np.random.Generator) -> np.ndarray:
    if spec.regime is Regime.NULL_RANDOM:
        return rng.binomial(sizes, share)
    capped = np.minimum(spec.quota, sizes)
    if spec.regime is Regime.HARD_QUOTA:
        return capped
    leaked = rng.random(len(sizes)) < spec.leak
    drawn = rng.binomial(sizes, share)
    return np.where(leaked, drawn, capped)


def generate_records(spec: CorpusSpec) -> List[DepartmentRecord]:
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    stratum_width = max(2, len(str(spec.n_strata)))

    records = []
    for s in range(spec.n_strata):
        if spec.sizes is not None:
            sizes = np.asarray(spec.sizes, dtype=np.int64)
        else:
            if isinstance(spec.departments_per_stratum, tuple):
                n_units = int(rng.integers(spec.departments_per_stratum[0], spec.departments_per_stratum[1] + 1))
            else:
                n_units = spec.departments_per_stratum
            sizes = rng.integers(spec.size_range[0], spec.size_range[1] + 1, size=n_units)
        share = float(rng.uniform(*spec.share_range))
        counts = _counts(spec, sizes, share, rng)

        stratum_key = f"s{s + 1:0{stratum_width}d}"
        unit_width = max(3, len(str(len(sizes))))
        records.extend(
            DepartmentRecord(stratum_key=stratum_key, unit_key=f"u{d + 1:0{unit_width}d}", size=int(n), minority=int(y))
            for d, (n, y) in enumerate(zip(sizes, counts))
        )
    return records


def generate(spec: CorpusSpec) -> Dataset:
    """Build a synthetic dataset; identical specs give identical datasets."""
    records = generate_records(spec)
    logger.info(f"Generated {spec.regime.value} corpus: {spec.n_strata} strata, {len(records)} departments")
    return build_dataset(records, min_size=spec.min_size)
