"""
Parametric Bootstrap for QuotaScan
Redraws every department from Binomial(n_ds, p_s) under the null, recounts
H*_z and compares it with the analytical expectation.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import joblib
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from deviations import DEFAULT_Z_MAX, Sidedness, stratum_columns
from ingest import Dataset
from poisson_binomial import STREAM_SCHEME, replication_stream, sample_departments

logger = logging.getLogger(__name__)

MIN_REPLICATIONS = 100
DEFAULT_REPLICATIONS = 10_000
DEFAULT_LEVEL = 0.9
DEFAULT_DRAW_CAP = 1_000_000
CHUNK_SIZE = 250

# tolerance for comparing deviations that differ only in float rounding
_TIE_TOLERANCE = 1e-9


class BootstrapSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    z: int
    draws: int
    level: float
    interval: Tuple[float, float]
    empirical_p: float
    observed_deviation: float
    mean_of_draws: float
    expected: float


class BootstrapResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    summaries: Tuple[BootstrapSummary, ...]
    replications: int
    seed: int
    z_max: int
    level: float
    sidedness: Sidedness
    stream_scheme: str = STREAM_SCHEME
    strata: Tuple[str, ...]
    # (replications, z_max + 1) matrix of H*_z, kept only under the draw cap
    draw_counts: Optional[np.ndarray] = None

    @property
    def draws_retained(self) -> bool:
        return self.draw_counts is not None


def _nearest_rank(n: int, q: float) -> int:
    """1-based nearest rank ceil(q * n), clipped to 1..n."""
    return min(n, max(1, math.ceil(q * n - _TIE_TOLERANCE)))


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie strictly between 0 and 1, got {level}")


def empirical_interval(draws: Sequence[float], level: float) -> Tuple[float, float]:
    """Percentile interval by the nearest-rank rule.

    The bounds are the ranks ceil(n * (1 - level) / 2) and ceil(n * (1 + level) / 2)
    of the sorted draws.
    """
    _check_level(level)
    values = np.sort(np.asarray(draws, dtype=float))
    if values.size == 0:
        raise ValueError("no draws")
    tail = (1.0 - level) / 2.0
    lo = values[_nearest_rank(values.size, tail) - 1]
    hi = values[_nearest_rank(values.size, 1.0 - tail) - 1]
    return float(lo), float(hi)


def _histogram_rank_value(histogram: np.ndarray, rank: int) -> int:
    return int(np.searchsorted(np.cumsum(histogram), rank))


def _summarise(
    z: int,
    histogram: np.ndarray,
    observed: int,
    expected: float,
    level: float,
    sidedness: Sidedness,
) -> BootstrapSummary:
    """Summaries from the histogram of H*_z; identical to working on the raw draws."""
    replications = int(histogram.sum())
    counts = np.arange(histogram.size)
    tail = (1.0 - level) / 2.0
    lo = _histogram_rank_value(histogram, _nearest_rank(replications, tail)) - expected
    hi = _histogram_rank_value(histogram, _nearest_rank(replications, 1.0 - tail)) - expected

    deviations = counts - expected
    observed_deviation = observed - expected
    if sidedness is Sidedness.TWO_SIDED:
        extreme = np.abs(deviations) >= abs(observed_deviation) - _TIE_TOLERANCE
    else:
        extreme = counts >= observed
    exceed = int(histogram[extreme].sum())

    mean_count = math.fsum(histogram * counts) / replications
    return BootstrapSummary(
        z=z,
        draws=replications,
        level=level,
        interval=(float(lo), float(hi)),
        empirical_p=(1 + exceed) / (replications + 1),
        observed_deviation=float(observed_deviation),
        mean_of_draws=float(mean_count - expected),
        expected=float(expected),
    )


def _draw_chunk(
    sizes: np.ndarray,
    probs: np.ndarray,
    seed: int,
    first: int,
    last: int,
    z_max: int,
) -> np.ndarray:
    """H*_z for replications first..last-1 (replication b uses stream b + 1)."""
    counts = np.empty((last - first, z_max + 1), dtype=np.int64)
    for i, b in enumerate(range(first, last)):
        y = sample_departments(sizes, probs, replication_stream(seed, b + 1))
        counts[i] = np.bincount(y[y <= z_max], minlength=z_max + 1)
    return counts


def run_bootstrap(
    dataset: Dataset,
    z_max: int = DEFAULT_Z_MAX,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    level: float = DEFAULT_LEVEL,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
    workers: int = 1,
    draw_cap: int = DEFAULT_DRAW_CAP,
    include_degenerate: bool = False,
) -> BootstrapResult:
    """Parametric bootstrap of the summed deviations for z = 0..z_max.

    Output depends only on the arguments other than `workers`: each replication
    owns its random stream and lands in a fixed row.
    """
    sidedness = Sidedness(sidedness)
    if replications < MIN_REPLICATIONS:
        raise ValueError(f"at least {MIN_REPLICATIONS} replications required, got {replications}")
    _check_level(level)
    if z_max < 0:
        raise ValueError(f"z_max must be non-negative, got {z_max}")
    if seed < 0:
        raise ValueError("seed must be non-negative")

    strata = list(dataset.strata) if include_degenerate else dataset.active_strata
    if not strata:
        raise ValueError("all strata are degenerate (share 0 or 1); nothing to bootstrap")

    sizes = np.concatenate([np.asarray(s.sizes, dtype=np.int64) for s in strata])
    probs = np.concatenate([np.full(s.n_units, s.share_float) for s in strata])

    columns = [stratum_columns(s, z_max) for s in strata]
    observed = np.sum([c[0] for c in columns], axis=0)
    expected = [math.fsum(values) for values in zip(*(c[1] for c in columns))]

    retain = replications * (z_max + 1) <= draw_cap
    if not retain:
        logger.warning(
            f"{replications} x {z_max + 1} draws exceed the cap of {draw_cap}; raw draw export disabled"
        )

    chunks = [(first, min(first + CHUNK_SIZE, replications)) for first in range(0, replications, CHUNK_SIZE)]
    histograms = np.zeros((z_max + 1, len(sizes) + 1), dtype=np.int64)
    retained: List[np.ndarray] = []

    logger.info(f"Bootstrapping {replications} replications over {len(sizes)} departments (seed {seed})")
    # results come back in chunk order whatever the worker count
    results = joblib.Parallel(n_jobs=max(1, workers), prefer="threads")(
        joblib.delayed(_draw_chunk)(sizes, probs, seed, first, last, z_max) for first, last in chunks
    )
    for counts in results:
        for z in range(z_max + 1):
            histograms[z] += np.bincount(counts[:, z], minlength=len(sizes) + 1)
        if retain:
            retained.append(counts)

    summaries = tuple(
        _summarise(z, histograms[z], int(observed[z]), expected[z], level, sidedness)
        for z in range(z_max + 1)
    )
    return BootstrapResult(
        summaries=summaries,
        replications=replications,
        seed=seed,
        z_max=z_max,
        level=level,
        sidedness=sidedness,
        strata=tuple(s.key for s in strata),
        draw_counts=np.vstack(retained) if retain else None,
    )


def draws_frame(result: BootstrapResult) -> pd.DataFrame:
    """Long table `z,replication,deviation` of the retained draws."""
    if not result.draws_retained:
        raise ValueError("raw draws were not retained (draw cap exceeded)")
    counts = result.draw_counts
    replications = np.arange(1, counts.shape[0] + 1)
    frames = [
        pd.DataFrame({"z": z, "replication": replications, "deviation": counts[:, z] - summary.expected})
        for z, summary in enumerate(result.summaries)
    ]
    return pd.concat(frames, ignore_index=True)


def export_draws(result: BootstrapResult, path: str) -> bool:
    """Write the raw-draw CSV; returns False (with a warning) when draws were not kept."""
    if not result.draws_retained:
        logger.warning(f"Not writing {path}: raw draws were not retained")
        return False
    draws_frame(result).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"Wrote {result.replications * (result.z_max + 1)} bootstrap draws to {path}")
    return True
