"""
Poisson-Binomial Kernels for QuotaScan
Binomial pmf in log space, the moments and exact pmf of the number of
departments with exactly z minority members, and seeded samplers.
"""

import logging
import math
from functools import lru_cache
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import xlog1py, xlogy

from ingest import Stratum

logger = logging.getLogger(__name__)

# exp() of anything below this is flushed to exactly 0
UNDERFLOW_LOG = -745.0
DEFAULT_EXACT_CAP = 10_000
# a pmf must sum to one within this
PMF_SUM_TOLERANCE = 1e-12

# numpy PCG64 seeded through SeedSequence(seed, spawn_key=(replication,)); within a
# replication draws are taken in (stratum index, department index) order.
STREAM_SCHEME = "pcg64-seedsequence-v1"


class CountDistribution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    probs: np.ndarray
    support_max: int

    @model_validator(mode="after")
    def _check_pmf(self):
        if self.probs.shape != (self.support_max + 1,):
            raise ValueError(f"pmf over 0..{self.support_max} needs {self.support_max + 1} entries")
        if np.any(np.isnan(self.probs)) or np.any(self.probs < 0.0) or np.any(self.probs > 1.0):
            raise ValueError("pmf entries must lie in [0, 1]")
        if abs(float(np.sum(self.probs)) - 1.0) > PMF_SUM_TOLERANCE:
            raise ValueError(f"pmf sums to {float(np.sum(self.probs))!r}, not 1")
        return self

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.support_max + 1), self.probs))

    @property
    def variance(self) -> float:
        support = np.arange(self.support_max + 1)
        return float(np.dot((support - self.mean) ** 2, self.probs))


class ZMoment(BaseModel):
    model_config = ConfigDict(frozen=True)

    z: int
    mean: float
    variance: float


def _check_probability(p) -> None:
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError(f"probability outside [0, 1]: {p}")


@lru_cache(maxsize=65536)
def log_binomial_coefficient(n: int, z: int) -> float:
    """log C(n, z) from the exact integer coefficient."""
    return math.log(math.comb(n, z))


def binomial_pmf(n: int, z: int, p: float) -> float:
    """P(Y = z) for Y ~ Binomial(n, p); exactly 0 outside 0..n."""
    if n < 0:
        raise ValueError(f"negative trial count: {n}")
    _check_probability(p)
    if z < 0 or z > n:
        return 0.0
    log_pmf = log_binomial_coefficient(int(n), int(z)) + float(xlogy(z, p)) + float(xlog1py(n - z, -p))
    if log_pmf < UNDERFLOW_LOG:
        return 0.0
    return math.exp(log_pmf)


def z_pmf_matrix(sizes: Sequence[int], p: float, z_max: int) -> np.ndarray:
    """Matrix of p_d(z) with one row per department and one column per z = 0..z_max."""
    _check_probability(p)
    if z_max < 0:
        raise ValueError(f"z_max must be non-negative, got {z_max}")
    sizes = np.asarray(sizes, dtype=np.int64)
    if np.any(sizes < 0):
        raise ValueError("department sizes must be non-negative")

    matrix = np.zeros((len(sizes), z_max + 1))
    for size in np.unique(sizes):
        size = int(size)
        z = np.arange(min(size, z_max) + 1)
        log_coef = np.array([log_binomial_coefficient(size, int(k)) for k in z])
        with np.errstate(divide="ignore"):
            log_pmf = log_coef + xlogy(z, p) + xlog1py(size - z, -p)
        row = np.where(log_pmf < UNDERFLOW_LOG, 0.0, np.exp(log_pmf))
        matrix[sizes == size, : len(z)] = row
    return matrix


def z_moment(stratum: Stratum, z: int) -> ZMoment:
    """Mean and variance of H_z, the count of departments with exactly z minority members."""
    if z < 0:
        return ZMoment(z=z, mean=0.0, variance=0.0)
    probs = z_pmf_matrix(stratum.sizes, stratum.share_float, z)[:, z]
    return ZMoment(
        z=z,
        mean=math.fsum(probs),
        variance=math.fsum(probs * (1.0 - probs)),
    )


def poisson_binomial_exact(probs: Sequence[float], cap: int = DEFAULT_EXACT_CAP) -> CountDistribution:
    """Exact pmf of a sum of independent Bernoulli(p_i), one convolution step per p_i."""
    probs = np.asarray(probs, dtype=float)
    if len(probs) > cap:
        raise ValueError(f"{len(probs)} Bernoulli terms exceed the cap of {cap}")
    _check_probability(probs)

    pmf = np.ones(1)
    for p in probs:
        extended = np.zeros(len(pmf) + 1)
        extended[:-1] = pmf * (1.0 - p)
        extended[1:] += pmf * p
        pmf = extended
    return CountDistribution(probs=pmf, support_max=len(probs))


def replication_stream(seed: int, replication: int) -> np.random.Generator:
    if seed < 0 or replication < 0:
        raise ValueError("seed and replication must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))


def sample_department(size: int, p: float, rng: np.random.Generator) -> int:
    """One Binomial(size, p) draw from the given stream."""
    _check_probability(p)
    return int(rng.binomial(size, p))


def sample_departments(sizes: np.ndarray, probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw every department of a corpus in canonical order."""
    return rng.binomial(sizes, probs)
