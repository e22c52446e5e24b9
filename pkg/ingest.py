"""
Ingest Module for QuotaScan
Parses roster and department CSV files, validates them and builds the
stratified data model (departments grouped into disciplines).
"""

import csv
import io
import logging
import re
from fractions import Fraction
from typing import BinaryIO, Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

DEFAULT_MIN_SIZE = 3

ROSTER_COLUMNS = ["discipline", "university", "gender"]
DEPARTMENT_COLUMNS = ["discipline", "university", "size", "women"]
ATTRIBUTE_COLUMNS = ["discipline", "key", "value"]

_NON_NEGATIVE_INT = re.compile(r"^\d+$")

ByteSource = Union[bytes, BinaryIO]


class DataValidationError(ValueError):
    """Invalid input data. `line` is 1-based with the header on line 1."""

    def __init__(self, message: str, line: Optional[int] = None, value: Optional[str] = None):
        self.line = line
        self.value = value
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class DepartmentRecord(BaseModel):
    """One department: a (discipline, university) cell with its headcount."""

    model_config = ConfigDict(frozen=True)

    stratum_key: str
    unit_key: str
    size: int = Field(ge=0)
    minority: int = Field(ge=0)

    @model_validator(mode="after")
    def _minority_within_size(self):
        if self.minority > self.size:
            raise ValueError("minority exceeds size")
        return self


class Stratum(BaseModel):
    """One discipline and its departments, in canonical unit order."""

    model_config = ConfigDict(frozen=True)

    key: str
    departments: Tuple[DepartmentRecord, ...]
    attributes: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_departments(self):
        if not self.departments:
            raise ValueError(f"stratum {self.key!r} has no departments")
        if any(d.stratum_key != self.key for d in self.departments):
            raise ValueError(f"stratum {self.key!r} holds departments of another stratum")
        if self.total_size == 0:
            raise ValueError(f"stratum {self.key!r} has no members")
        return self

    @property
    def n_units(self) -> int:
        return len(self.departments)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(d.size for d in self.departments)

    @property
    def minorities(self) -> Tuple[int, ...]:
        return tuple(d.minority for d in self.departments)

    @property
    def total_size(self) -> int:
        return sum(d.size for d in self.departments)

    @property
    def total_minority(self) -> int:
        return sum(d.minority for d in self.departments)

    @property
    def share(self) -> Fraction:
        return Fraction(self.total_minority, self.total_size)

    @property
    def share_float(self) -> float:
        return float(self.share)

    @property
    def mean_size(self) -> float:
        return self.total_size / self.n_units

    @property
    def degenerate(self) -> bool:
        """True when the share is exactly 0 or 1 (no variation possible)."""
        return self.total_minority == 0 or self.total_minority == self.total_size


class Dataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    strata: Tuple[Stratum, ...]
    dropped_units: int = 0
    config_echo: Dict[str, Union[int, str]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_strata(self):
        if not self.strata:
            raise ValueError("dataset has no strata")
        keys = [s.key for s in self.strata]
        if len(set(keys)) != len(keys):
            raise ValueError("stratum keys are not unique")
        return self

    @property
    def n_strata(self) -> int:
        return len(self.strata)

    @property
    def n_departments(self) -> int:
        return sum(s.n_units for s in self.strata)

    @property
    def degenerate_strata(self) -> List[str]:
        return [s.key for s in self.strata if s.degenerate]

    @property
    def active_strata(self) -> List[Stratum]:
        """Strata that take part in test statistics."""
        return [s for s in self.strata if not s.degenerate]

    def stratum(self, key: str) -> Stratum:
        for stratum in self.strata:
            if stratum.key == key:
                return stratum
        raise KeyError(key)


def _data_row_lines(raw: bytes, n_rows: int) -> List[int]:
    """First physical line of each data record; quoted newlines span several lines."""
    reader = csv.reader(io.StringIO(raw.decode("utf-8", errors="replace"), newline=""), skipinitialspace=True)
    starts, consumed = [], 0
    try:
        for _ in reader:
            starts.append(consumed + 1)
            consumed = reader.line_num
    except csv.Error:
        starts = []
    if len(starts) - 1 != n_rows:
        logger.warning(f"Could not align {n_rows} rows with physical lines; assuming one line per row")
        return [i + 2 for i in range(n_rows)]
    return starts[1:]


def _read_frame(source: ByteSource, columns: List[str]) -> pd.DataFrame:
    """Read a CSV with an exact header into an all-string frame."""
    raw = source if isinstance(source, bytes) else source.read()
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    if not raw.strip():
        raise DataValidationError("empty input")

    try:
        frame = pd.read_csv(
            io.BytesIO(raw),
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skipinitialspace=True,
            encoding="utf-8",
        )
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) if match else None
        raise DataValidationError(f"malformed CSV row ({e})", line=line) from e

    header = [str(c).strip() for c in frame.columns]
    if header != columns:
        raise DataValidationError(
            f"expected header {','.join(columns)!r}, got {','.join(header)!r}", line=1
        )
    if frame.empty:
        raise DataValidationError("no records")
    # pandas turns a surplus leading field on the first data row into an index
    if not isinstance(frame.index, pd.RangeIndex):
        raise DataValidationError(f"malformed CSV row: more than {len(columns)} fields", line=2)
    frame.columns = columns

    frame.index = _data_row_lines(raw, len(frame))
    blank = frame.isna().all(axis=1) | (frame.fillna("").apply(lambda col: col.str.strip()) == "").all(axis=1)
    frame = frame[~blank]
    if frame.empty:
        raise DataValidationError("no records")

    for line, row in frame.iterrows():
        for column in columns:
            value = row[column]
            if pd.isna(value) or str(value).strip() == "":
                raise DataValidationError(f"malformed CSV row: missing {column!r}", line=int(line))
    return frame.apply(lambda col: col.str.strip())


def parse_roster(
    source: ByteSource,
    minority_symbol: str = "F",
    majority_symbol: str = "M",
) -> List[DepartmentRecord]:
    """Aggregate an individual roster (`discipline,university,gender`) into departments."""
    if minority_symbol == majority_symbol:
        raise ValueError("minority and majority symbols must differ")
    frame = _read_frame(source, ROSTER_COLUMNS)

    alphabet = {minority_symbol, majority_symbol}
    unknown = frame[~frame["gender"].isin(alphabet)]
    if not unknown.empty:
        line = int(unknown.index[0])
        value = unknown.iloc[0]["gender"]
        raise DataValidationError(f"unknown gender symbol {value!r}", line=line, value=value)

    frame = frame.assign(is_minority=(frame["gender"] == minority_symbol).astype(int))
    grouped = frame.groupby(["discipline", "university"], sort=True)["is_minority"].agg(["size", "sum"])

    records = [
        DepartmentRecord(stratum_key=discipline, unit_key=university, size=int(row["size"]), minority=int(row["sum"]))
        for (discipline, university), row in grouped.iterrows()
    ]
    logger.info(f"Parsed roster: {len(frame)} people into {len(records)} departments")
    return records


def parse_departments(source: ByteSource) -> List[DepartmentRecord]:
    """Read a pre-aggregated table (`discipline,university,size,women`) in file order."""
    frame = _read_frame(source, DEPARTMENT_COLUMNS)

    records: List[DepartmentRecord] = []
    seen: Dict[Tuple[str, str], int] = {}
    for line, row in frame.iterrows():
        line = int(line)
        for column in ("size", "women"):
            if not _NON_NEGATIVE_INT.match(row[column]):
                raise DataValidationError(
                    f"{column} must be a non-negative integer, got {row[column]!r}", line=line, value=row[column]
                )
        size, women = int(row["size"]), int(row["women"])
        if women > size:
            raise DataValidationError("minority exceeds size", line=line, value=row["women"])

        pair = (row["discipline"], row["university"])
        if pair in seen:
            raise DataValidationError(
                f"duplicate department {pair[0]},{pair[1]} (first on line {seen[pair]})", line=line
            )
        seen[pair] = line
        records.append(DepartmentRecord(stratum_key=pair[0], unit_key=pair[1], size=size, minority=women))

    logger.info(f"Parsed department table: {len(records)} departments")
    return records


def parse_attributes(source: ByteSource) -> Dict[str, Dict[str, str]]:
    """Read optional stratum attributes (`discipline,key,value`)."""
    frame = _read_frame(source, ATTRIBUTE_COLUMNS)

    attributes: Dict[str, Dict[str, str]] = {}
    for line, row in frame.iterrows():
        entry = attributes.setdefault(row["discipline"], {})
        if row["key"] in entry:
            raise DataValidationError(f"duplicate attribute {row['discipline']},{row['key']}", line=int(line))
        entry[row["key"]] = row["value"]
    return attributes


def build_dataset(
    records: Iterable[DepartmentRecord],
    min_size: int = DEFAULT_MIN_SIZE,
    attributes: Optional[Dict[str, Dict[str, str]]] = None,
) -> Dataset:
    """Group departments into strata, dropping departments below `min_size`."""
    if min_size < 0:
        raise ValueError("min_size must be non-negative")
    records = sorted(records, key=lambda r: (r.stratum_key, r.unit_key))
    if not records:
        raise DataValidationError("no records")

    for previous, current in zip(records, records[1:]):
        if (previous.stratum_key, previous.unit_key) == (current.stratum_key, current.unit_key):
            raise DataValidationError(f"duplicate department {current.stratum_key},{current.unit_key}")

    kept = [r for r in records if r.size >= min_size]
    dropped = len(records) - len(kept)
    if dropped:
        logger.info(f"Dropped {dropped} departments smaller than {min_size}")
    if not kept:
        raise DataValidationError(f"all {len(records)} departments are smaller than {min_size}")

    all_keys = sorted({r.stratum_key for r in records})
    groups: Dict[str, List[DepartmentRecord]] = {key: [] for key in all_keys}
    for record in kept:
        groups[record.stratum_key].append(record)

    emptied = [key for key, departments in groups.items() if not departments]
    if emptied:
        raise DataValidationError(f"stratum {emptied[0]!r} has no departments left after filtering")

    attributes = attributes or {}
    unknown = sorted(set(attributes) - set(groups))
    if unknown:
        logger.warning(f"Ignoring attributes for unknown disciplines: {', '.join(unknown)}")

    strata = tuple(
        Stratum(key=key, departments=tuple(departments), attributes=dict(attributes.get(key, {})))
        for key, departments in groups.items()
    )
    dataset = Dataset(
        strata=strata,
        dropped_units=dropped,
        config_echo={"min_size": min_size},
    )

    if dataset.degenerate_strata:
        logger.warning(
            f"{len(dataset.degenerate_strata)} degenerate strata (share 0 or 1) excluded from tests: "
            f"{', '.join(dataset.degenerate_strata)}"
        )
    logger.info(f"Built dataset: {dataset.n_strata} strata, {dataset.n_departments} departments")
    return dataset


def write_departments_csv(records: Iterable[DepartmentRecord]) -> str:
    frame = pd.DataFrame(
        [(r.stratum_key, r.unit_key, r.size, r.minority) for r in records],
        columns=DEPARTMENT_COLUMNS,
    )
    return frame.to_csv(index=False, lineterminator="\n")


def expand_roster(
    records: Iterable[DepartmentRecord],
    minority_symbol: str = "F",
    majority_symbol: str = "M",
) -> str:
    """Write one roster row per person: minority rows first, then majority rows."""
    rows = []
    for r in records:
        rows.extend([(r.stratum_key, r.unit_key, minority_symbol)] * r.minority)
        rows.extend([(r.stratum_key, r.unit_key, majority_symbol)] * (r.size - r.minority))
    return pd.DataFrame(rows, columns=ROSTER_COLUMNS).to_csv(index=False, lineterminator="\n")


def dataset_records(dataset: Dataset) -> List[DepartmentRecord]:
    return [d for stratum in dataset.strata for d in stratum.departments]
