"""
Run Configuration for QuotaScan
Resolves settings from defaults, a .env file, QUOTASCAN_* environment
variables and finally explicit (command-line) overrides.
"""

import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator

from bootstrap import DEFAULT_DRAW_CAP, DEFAULT_LEVEL, DEFAULT_REPLICATIONS, MIN_REPLICATIONS
from deviations import DEFAULT_Z_MAX, Sidedness
from diagnostics import DEFAULT_ALPHA
from ingest import DEFAULT_MIN_SIZE
from quota_sim import DEFAULT_QUOTA

logger = logging.getLogger(__name__)

ENV_PREFIX = "QUOTASCAN_"


class InputFormat(str, Enum):
    ROSTER = "roster"
    DEPARTMENTS = "departments"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, use_enum_values=False)

    input_path: Optional[str] = None
    input_format: InputFormat = InputFormat.DEPARTMENTS
    min_dept_size: int = Field(default=DEFAULT_MIN_SIZE, ge=1)
    z_max: int = Field(default=DEFAULT_Z_MAX, ge=0)
    sidedness: Sidedness = Sidedness.TWO_SIDED
    bootstrap_B: int = Field(default=DEFAULT_REPLICATIONS, ge=MIN_REPLICATIONS)
    seed: int = Field(default=0, ge=0)
    interval_level: float = Field(default=DEFAULT_LEVEL, gt=0.0, lt=1.0)
    quota_q: int = Field(default=DEFAULT_QUOTA, ge=0)
    output_format: OutputFormat = OutputFormat.JSON
    attribute_path: Optional[str] = None
    attribute_key: str = "stem"
    minority_symbol: str = "F"
    majority_symbol: str = "M"
    diagnose_z: List[int] = Field(default_factory=lambda: [0, 3])
    weighted_shares: bool = False
    draw_cap: int = Field(default=DEFAULT_DRAW_CAP, ge=0)
    workers: int = Field(default=1, ge=1)
    alpha: float = Field(default=DEFAULT_ALPHA, gt=0.0, lt=1.0)
    export_draws: Optional[str] = None
    out: Optional[str] = None

    @field_validator("diagnose_z", mode="before")
    @classmethod
    def _split_z_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(part) for part in value.replace(" ", "").split(",") if part]
        return value

    @field_validator("diagnose_z")
    @classmethod
    def _non_negative_z(cls, value: List[int]) -> List[int]:
        if any(z < 0 for z in value):
            raise ValueError("diagnose_z entries must be non-negative")
        return value

    def echo(self) -> Dict[str, Any]:
        """JSON-ready dump of the resolved configuration."""
        return self.model_dump(mode="json")


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """Field values taken from QUOTASCAN_<FIELD> variables (case-insensitive field match)."""
    environ = os.environ if environ is None else environ
    fields = {name.lower(): name for name in RunConfig.model_fields}
    found = {}
    for key, value in environ.items():
        if key.upper().startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in fields:
                found[fields[name]] = value
            else:
                logger.warning(f"Ignoring unknown setting {key}")
    return found


def load_config(
    overrides: Optional[Mapping[str, Any]] = None,
    env_file: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Defaults < .env file < QUOTASCAN_* variables < explicit overrides (None means unset)."""
    env_path = Path(env_file) if env_file else Path.cwd() / ".env"
    if env_path.exists():
        load_dotenv(dotenv_path=env_path)
        logger.debug(f"Loaded settings from {env_path}")
    elif env_file:
        raise FileNotFoundError(f"env file not found: {env_file}")

    values: Dict[str, Any] = env_overrides(environ)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values)
