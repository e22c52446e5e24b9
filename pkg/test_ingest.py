#!/usr/bin/env python3
"""
Test CSV parsing, validation and dataset construction
"""

import io
import logging

import pytest

from ingest import (
    DataValidationError,
    DepartmentRecord,
    build_dataset,
    dataset_records,
    expand_roster,
    parse_attributes,
    parse_departments,
    parse_roster,
    write_departments_csv,
)
from synthetic_corpus import CorpusSpec, generate_records

DEPARTMENTS = b"""discipline,university,size,women
Economics,Bonn,6,0
Economics,Mannheim,16,2
Physics,Bonn,12,2
Physics,Mannheim,7,1
"""

ROSTER = b"""discipline,university,gender
Economics,Bonn,F
Economics,Bonn,M
Economics,Bonn,M
Economics,Mannheim,M
Economics,Mannheim,F
Economics,Mannheim,F
Economics,Mannheim,M
"""


def test_parse_departments():
    records = parse_departments(DEPARTMENTS)
    assert len(records) == 4
    assert records[0] == DepartmentRecord(stratum_key="Economics", unit_key="Bonn", size=6, minority=0)
    assert records[3].minority == 1


def test_parse_departments_from_file_object():
    assert parse_departments(io.BytesIO(DEPARTMENTS)) == parse_departments(DEPARTMENTS)


def test_parse_roster_aggregates_people():
    records = parse_roster(ROSTER)
    assert [(r.unit_key, r.size, r.minority) for r in records] == [("Bonn", 3, 1), ("Mannheim", 4, 2)]


def test_custom_gender_symbols():
    roster = b"discipline,university,gender\nLaw,Kiel,w\nLaw,Kiel,m\nLaw,Kiel,w\n"
    [record] = parse_roster(roster, minority_symbol="w", majority_symbol="m")
    assert (record.size, record.minority) == (3, 2)
    with pytest.raises(ValueError):
        parse_roster(roster, minority_symbol="w", majority_symbol="w")


def test_unknown_gender_symbol_reports_line():
    roster = ROSTER.replace(b"Economics,Mannheim,F\nEconomics,Mannheim,F", b"Economics,Mannheim,F\nEconomics,Mannheim,X")
    with pytest.raises(DataValidationError) as excinfo:
        parse_roster(roster)
    assert excinfo.value.line == 7
    assert excinfo.value.value == "X"
    assert "line 7" in str(excinfo.value)


def test_header_mismatch():
    with pytest.raises(DataValidationError) as excinfo:
        parse_departments(b"discipline,university,size,female\nA,u,3,1\n")
    assert excinfo.value.line == 1


@pytest.mark.parametrize(
    "row, message",
    [
        (b"Physics,Kiel,5,6", "minority exceeds size"),
        (b"Physics,Kiel,-5,1", "non-negative integer"),
        (b"Physics,Kiel,5,1.5", "non-negative integer"),
        (b"Physics,Kiel,five,1", "non-negative integer"),
        (b"Physics,Kiel,5", "missing"),
    ],
)
def test_bad_rows_report_their_line(row, message):
    with pytest.raises(DataValidationError) as excinfo:
        parse_departments(DEPARTMENTS + row + b"\n")
    assert excinfo.value.line == 6
    assert message in str(excinfo.value)


def test_quoted_newline_keeps_later_line_numbers():
    table = b'discipline,university,size,women\n"Econ\nX",U1,6,0\nBio,U2,5,9\n'
    with pytest.raises(DataValidationError) as excinfo:
        parse_departments(table)
    assert excinfo.value.line == 4
    assert "minority exceeds size" in str(excinfo.value)

    records = parse_departments(table.replace(b"5,9", b"5,2"))
    assert [r.stratum_key for r in records] == ["Econ\nX", "Bio"]


def test_duplicate_department():
    with pytest.raises(DataValidationError) as excinfo:
        parse_departments(DEPARTMENTS + b"Physics,Bonn,9,3\n")
    assert excinfo.value.line == 6
    assert "first on line 4" in str(excinfo.value)


def test_empty_inputs():
    with pytest.raises(DataValidationError):
        parse_departments(b"")
    with pytest.raises(DataValidationError):
        parse_departments(b"discipline,university,size,women\n")


def test_parse_attributes():
    attributes = parse_attributes(b"discipline,key,value\nPhysics,stem,yes\nEconomics,stem,no\n")
    assert attributes == {"Physics": {"stem": "yes"}, "Economics": {"stem": "no"}}
    with pytest.raises(DataValidationError):
        parse_attributes(b"discipline,key,value\nPhysics,stem,yes\nPhysics,stem,no\n")


def test_build_dataset_orders_and_drops(caplog):
    records = parse_departments(DEPARTMENTS + b"Physics,Aachen,2,1\n")
    with caplog.at_level(logging.INFO):
        dataset = build_dataset(reversed(records), min_size=3)
    assert dataset.dropped_units == 1
    assert "Dropped 1" in caplog.text
    assert [s.key for s in dataset.strata] == ["Economics", "Physics"]
    assert [d.unit_key for d in dataset.stratum("Physics").departments] == ["Bonn", "Mannheim"]
    assert dataset.config_echo == {"min_size": 3}
    assert dataset.n_departments == 4


def test_build_dataset_failures():
    records = parse_departments(DEPARTMENTS)
    with pytest.raises(DataValidationError):
        build_dataset(records, min_size=100)
    with pytest.raises(DataValidationError):
        build_dataset(records, min_size=13)
    with pytest.raises(DataValidationError):
        build_dataset(records + records[:1])


def test_stratum_quantities():
    dataset = build_dataset(parse_departments(DEPARTMENTS))
    physics = dataset.stratum("Physics")
    assert physics.total_size == 19
    assert physics.total_minority == 3
    assert physics.share_float == pytest.approx(3 / 19)
    assert physics.mean_size == 9.5
    assert not physics.degenerate


def test_degenerate_strata_are_flagged(caplog):
    rows = DEPARTMENTS + b"Theology,Bonn,5,0\nTheology,Kiel,4,0\n"
    with caplog.at_level(logging.WARNING):
        dataset = build_dataset(parse_departments(rows))
    assert dataset.degenerate_strata == ["Theology"]
    assert [s.key for s in dataset.active_strata] == ["Economics", "Physics"]
    assert "Theology" in caplog.text


def test_attributes_attach_to_strata(caplog):
    attributes = {"Physics": {"stem": "yes"}, "Astrology": {"stem": "no"}}
    with caplog.at_level(logging.WARNING):
        dataset = build_dataset(parse_departments(DEPARTMENTS), attributes=attributes)
    assert dataset.stratum("Physics").attributes == {"stem": "yes"}
    assert dataset.stratum("Economics").attributes == {}
    assert "Astrology" in caplog.text


def test_department_record_rejects_excess_minority():
    with pytest.raises(ValueError):
        DepartmentRecord(stratum_key="A", unit_key="u", size=3, minority=4)


def test_writers_are_read_back():
    records = generate_records(CorpusSpec(n_strata=3, departments_per_stratum=4, seed=2))
    assert parse_departments(write_departments_csv(records).encode()) == records

    aggregated = parse_roster(expand_roster(records).encode())
    assert build_dataset(aggregated) == build_dataset(records)
    assert dataset_records(build_dataset(records)) == records
