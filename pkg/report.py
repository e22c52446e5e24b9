"""
Report Assembly for QuotaScan
Builds the versioned report document and encodes it as canonical JSON
(sorted keys, 17 significant digits) or flat CSV projections.
"""

import json
import logging
import math
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from bootstrap import BootstrapResult
from deviations import DeviationTable
from diagnostics import CorrelationReport, LooReport, SignReport, StratumSummary
from ingest import Dataset
from quota_sim import QuotaScenario, share_vectors

logger = logging.getLogger(__name__)

REPORT_VERSION = "1.0"
REPORT_KEYS = (
    "version",
    "config",
    "dropped_units",
    "degenerate_strata",
    "deviation_table",
    "per_stratum_tables",
    "bootstrap",
    "diagnostics",
    "quota_scenario",
)
DEVIATION_COLUMNS = ["z", "observed", "expected", "variance", "deviation", "statistic", "p_value"]
FLOAT_FORMAT = "%.17g"


def _plain(value: Any) -> Any:
    """Convert models, enums, tuples and numpy scalars to JSON-ready Python values."""
    if isinstance(value, BaseModel):
        return _plain(value.model_dump())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return value.item()
    return value


def _encode(value: Any, indent: int) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return "null"
        return format(value, ".17g")
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(k, ensure_ascii=False)}: {_encode(value[k], indent + 1)}" for k in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(f"{inner}{_encode(v, indent + 1)}" for v in value) + "\n" + pad + "]"
    raise TypeError(f"cannot encode {type(value).__name__}")


def encode_report(document: Dict[str, Any]) -> str:
    """Canonical JSON text; identical documents give identical bytes."""
    return _encode(_plain(document), 0) + "\n"


def _section(module: str, parameters: Dict[str, Any], **payload: Any) -> Dict[str, Any]:
    return {"module": module, "parameters": parameters, **payload}


def deviation_section(table: DeviationTable) -> Dict[str, Any]:
    return _section(
        "deviations",
        {"z_max": table.z_max, "sidedness": table.sidedness, "scope": table.scope},
        rows=table.rows,
        residual_count=table.residual_count,
        total_departments=table.total_departments,
        excluded_strata=table.excluded_strata,
    )


def bootstrap_section(result: BootstrapResult) -> Dict[str, Any]:
    return _section(
        "bootstrap",
        {
            "replications": result.replications,
            "seed": result.seed,
            "z_max": result.z_max,
            "level": result.level,
            "sidedness": result.sidedness,
            "stream_scheme": result.stream_scheme,
            "interval_rule": "nearest_rank",
            "empirical_p_rule": "(1 + exceedances) / (B + 1)",
        },
        summaries=result.summaries,
        strata=result.strata,
        draws_retained=result.draws_retained,
    )


def diagnostics_section(
    loo: Sequence[LooReport],
    sign_correlations: Sequence[CorrelationReport],
    size_share: Optional[CorrelationReport],
    attribute_correlations: Sequence[CorrelationReport],
    sign_tests: Sequence[SignReport],
    descriptives: Sequence[StratumSummary],
    alpha: float,
    z_values: Sequence[int],
    attribute_key: Optional[str],
) -> Dict[str, Any]:
    return _section(
        "diagnostics",
        {
            "alpha": alpha,
            "z": list(z_values),
            "attribute_key": attribute_key,
            "loo_std_kind": "population",
            "loo_test": "pooled two-proportion z-test",
        },
        leave_one_out=loo,
        deviation_sign_correlations=sign_correlations,
        size_share_correlation=size_share,
        attribute_correlations=attribute_correlations,
        deviation_sign_tests=sign_tests,
        descriptives=descriptives,
    )


def quota_section(dataset: Dataset, scenario: QuotaScenario) -> Dict[str, Any]:
    actual, simulated = share_vectors(dataset, scenario)
    return _section(
        "quota_sim",
        {"quota": scenario.quota, "weighted": scenario.weighted},
        mean_share_actual=scenario.mean_share_actual,
        mean_share_sim=scenario.mean_share_sim,
        disciplines=scenario.stratum_keys,
        actual_shares=actual,
        simulated_shares=simulated,
        per_department_counts=scenario.per_department_counts,
    )


def build_report(
    config: Dict[str, Any],
    dataset: Dataset,
    deviation_table: Optional[DeviationTable] = None,
    per_stratum_tables: Optional[Iterable[DeviationTable]] = None,
    bootstrap: Optional[BootstrapResult] = None,
    diagnostics: Optional[Dict[str, Any]] = None,
    quota: Optional[QuotaScenario] = None,
) -> Dict[str, Any]:
    """Top-level document; sections that were not run are null."""
    return {
        "version": REPORT_VERSION,
        "config": config,
        "dropped_units": dataset.dropped_units,
        "degenerate_strata": dataset.degenerate_strata,
        "deviation_table": deviation_section(deviation_table) if deviation_table else None,
        "per_stratum_tables": (
            [deviation_section(t) for t in per_stratum_tables] if per_stratum_tables is not None else None
        ),
        "bootstrap": bootstrap_section(bootstrap) if bootstrap else None,
        "diagnostics": diagnostics,
        "quota_scenario": quota_section(dataset, quota) if quota else None,
    }


def deviation_frame(table: DeviationTable) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in table.rows], columns=DEVIATION_COLUMNS)


def loo_frame(reports: Sequence[LooReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.stratum_key, r.std_dev, r.share) for r in reports],
        columns=["discipline", "loo_std_dev", "share"],
    )


def frame_to_csv(frame: pd.DataFrame, path: Optional[str] = None) -> str:
    """CSV projection with 17 significant digits; written to `path` when given."""
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        logger.info(f"Wrote {len(frame)} rows to {path}")
    return text


def bootstrap_frame(result: BootstrapResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (s.z, s.draws, s.level, s.interval[0], s.interval[1], s.empirical_p, s.observed_deviation, s.mean_of_draws)
            for s in result.summaries
        ],
        columns=["z", "draws", "level", "interval_lo", "interval_hi", "empirical_p", "observed_deviation", "mean_of_draws"],
    )
