#!/usr/bin/env python3
"""
QuotaScan Command Line
Tests whether minority members are spread over departments the way random,
share-driven hiring would spread them, or whether the counts pile up at an
implicit quota.

Subcommands: test, bootstrap, diagnose, simulate-quota, generate, report.
Exit codes: 0 success, 1 invalid data or settings, 2 I/O error.
"""

import argparse
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from bootstrap import BootstrapResult, export_draws, run_bootstrap
from config import InputFormat, OutputFormat, RunConfig, load_config
from deviations import Sidedness, deviation_table, per_stratum_tables
from diagnostics import (
    LooReport,
    attribute_correlation,
    describe_strata,
    deviation_sign_correlation,
    deviation_sign_test,
    leave_one_out,
    size_share_correlation,
)
from ingest import Dataset, build_dataset, expand_roster, parse_attributes, parse_departments, parse_roster, write_departments_csv
from quota_sim import QuotaScenario, apply_quota, export_shares, shares_frame
from report import bootstrap_frame, build_report, deviation_frame, diagnostics_section, encode_report, frame_to_csv, loo_frame
from synthetic_corpus import CorpusSpec, Regime, generate_records

logger = logging.getLogger("quotascan")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class ReportPipeline:
    """Loads one dataset for a resolved configuration and runs the analyses on it."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._dataset: Optional[Dataset] = None
        self.loo_reports: List[LooReport] = []

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = self.load_dataset()
        return self._dataset

    def load_dataset(self) -> Dataset:
        cfg = self.config
        if not cfg.input_path:
            raise ValueError("no input file given (use --input or QUOTASCAN_INPUT_PATH)")
        raw = Path(cfg.input_path).read_bytes()
        if cfg.input_format is InputFormat.ROSTER:
            records = parse_roster(raw, cfg.minority_symbol, cfg.majority_symbol)
        else:
            records = parse_departments(raw)

        attributes = None
        if cfg.attribute_path:
            attributes = parse_attributes(Path(cfg.attribute_path).read_bytes())
        logger.info(f"📂 Loaded {len(records)} departments from {cfg.input_path}")
        return build_dataset(records, min_size=cfg.min_dept_size, attributes=attributes)

    def run_test(self, z_max: Optional[int] = None):
        z_max = self.config.z_max if z_max is None else z_max
        overall = deviation_table(self.dataset, z_max, self.config.sidedness)
        tables = per_stratum_tables(self.dataset, z_max, self.config.sidedness)
        return overall, tables

    def run_bootstrap(self) -> BootstrapResult:
        cfg = self.config
        result = run_bootstrap(
            self.dataset,
            z_max=cfg.z_max,
            replications=cfg.bootstrap_B,
            seed=cfg.seed,
            level=cfg.interval_level,
            sidedness=cfg.sidedness,
            workers=cfg.workers,
            draw_cap=cfg.draw_cap,
        )
        if cfg.export_draws:
            export_draws(result, cfg.export_draws)
        return result

    def run_diagnose(self) -> Dict[str, Any]:
        cfg = self.config
        dataset = self.dataset
        z_values = list(cfg.diagnose_z)
        tables = per_stratum_tables(dataset, max([cfg.z_max, *z_values]), cfg.sidedness)

        loo = []
        for stratum in dataset.strata:
            if stratum.n_units < 2:
                logger.warning(f"Skipping leave-one-out for {stratum.key}: single department")
                continue
            loo.append(leave_one_out(stratum, cfg.alpha))

        sign_correlations, sign_tests, attribute_reports = [], [], []
        for z in z_values:
            sign_tests.append(deviation_sign_test(tables, z))
            if len(tables) >= 3:
                sign_correlations.append(deviation_sign_correlation(dataset, tables, z))
            if cfg.attribute_path:
                attribute_reports.append(attribute_correlation(dataset, tables, z, cfg.attribute_key))
        if len(tables) < 3:
            logger.warning(f"Only {len(tables)} testable strata; deviation-sign correlations skipped")

        size_share = None
        if dataset.n_strata >= 3:
            size_share = size_share_correlation(dataset)
        else:
            logger.warning("Fewer than 3 strata; size/share correlation skipped")

        self.loo_reports = loo
        return diagnostics_section(
            loo=loo,
            sign_correlations=sign_correlations,
            size_share=size_share,
            attribute_correlations=attribute_reports,
            sign_tests=sign_tests,
            descriptives=describe_strata(dataset),
            alpha=cfg.alpha,
            z_values=z_values,
            attribute_key=cfg.attribute_key if cfg.attribute_path else None,
        )

    def run_quota(self) -> QuotaScenario:
        return apply_quota(self.dataset, self.config.quota_q, weighted=self.config.weighted_shares)

    def document(self, **sections: Any) -> Dict[str, Any]:
        return build_report(self.config.echo(), self.dataset, **sections)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info(f"✅ Report written to {out}")
    else:
        sys.stdout.write(text)


def _csv_wanted(config: RunConfig) -> bool:
    return config.output_format is OutputFormat.CSV


def cmd_test(config: RunConfig) -> str:
    pipeline = ReportPipeline(config)
    overall, tables = pipeline.run_test()
    if _csv_wanted(config):
        return frame_to_csv(deviation_frame(overall))
    return encode_report(pipeline.document(deviation_table=overall, per_stratum_tables=tables))


def cmd_bootstrap(config: RunConfig) -> str:
    pipeline = ReportPipeline(config)
    result = pipeline.run_bootstrap()
    if _csv_wanted(config):
        return frame_to_csv(bootstrap_frame(result))
    return encode_report(pipeline.document(bootstrap=result))


def cmd_diagnose(config: RunConfig) -> str:
    pipeline = ReportPipeline(config)
    section = pipeline.run_diagnose()
    if _csv_wanted(config):
        return frame_to_csv(loo_frame(pipeline.loo_reports))
    return encode_report(pipeline.document(diagnostics=section))


def cmd_simulate_quota(config: RunConfig, shares_path: Optional[str] = None) -> str:
    pipeline = ReportPipeline(config)
    scenario = pipeline.run_quota()
    if shares_path:
        export_shares(pipeline.dataset, scenario, shares_path)
    if _csv_wanted(config):
        return frame_to_csv(shares_frame(pipeline.dataset, scenario))
    return encode_report(pipeline.document(quota=scenario))


def cmd_report(config: RunConfig) -> str:
    pipeline = ReportPipeline(config)
    overall, tables = pipeline.run_test()
    if _csv_wanted(config):
        return frame_to_csv(deviation_frame(overall))
    return encode_report(
        pipeline.document(
            deviation_table=overall,
            per_stratum_tables=tables,
            bootstrap=pipeline.run_bootstrap(),
            diagnostics=pipeline.run_diagnose(),
            quota=pipeline.run_quota(),
        )
    )


def cmd_generate(spec: CorpusSpec, emit: str = "departments", minority_symbol: str = "F", majority_symbol: str = "M") -> str:
    records = generate_records(spec)
    logger.info(f"🎲 Generated {len(records)} departments ({spec.regime.value}, seed {spec.seed})")
    if emit == "roster":
        return expand_roster(records, minority_symbol, majority_symbol)
    return write_departments_csv(records)


def _department_range(text: str):
    if "-" in text:
        lo, hi = text.split("-", 1)
        return (int(lo), int(hi))
    return int(text)


def _defaults_help(name: str) -> str:
    default = RunConfig.model_fields[name].get_default(call_default_factory=True)
    if isinstance(default, Enum):
        default = default.value
    return f"default: {default}"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", dest="input_path", help="input CSV file")
    common.add_argument(
        "--format", dest="input_format", choices=[f.value for f in InputFormat],
        help=f"input layout ({_defaults_help('input_format')})",
    )
    common.add_argument(
        "--output-format", dest="output_format", choices=[f.value for f in OutputFormat],
        help=f"json report or flat csv projection ({_defaults_help('output_format')})",
    )
    common.add_argument("--min-dept-size", dest="min_dept_size", type=int, help=_defaults_help("min_dept_size"))
    common.add_argument("--z-max", dest="z_max", type=int, help=_defaults_help("z_max"))
    common.add_argument(
        "--sided", dest="sidedness", choices=[s.value for s in Sidedness], help=_defaults_help("sidedness")
    )
    common.add_argument("--draws", dest="bootstrap_B", type=int, help=f"bootstrap replications ({_defaults_help('bootstrap_B')})")
    common.add_argument("--seed", dest="seed", type=int, help=_defaults_help("seed"))
    common.add_argument("--level", dest="interval_level", type=float, help=f"bootstrap interval level ({_defaults_help('interval_level')})")
    common.add_argument("--quota", dest="quota_q", type=int, help=f"per-department quota ({_defaults_help('quota_q')})")
    common.add_argument("--weighted", dest="weighted_shares", action="store_true", default=None, help="size-weighted mean shares")
    common.add_argument("--attributes", dest="attribute_path", help="stratum attribute CSV (discipline,key,value)")
    common.add_argument("--attribute-key", dest="attribute_key", help=_defaults_help("attribute_key"))
    common.add_argument("--diagnose-z", dest="diagnose_z", help=f"comma-separated z list ({_defaults_help('diagnose_z')})")
    common.add_argument("--alpha", dest="alpha", type=float, help=_defaults_help("alpha"))
    common.add_argument("--workers", dest="workers", type=int, help=_defaults_help("workers"))
    common.add_argument("--draw-cap", dest="draw_cap", type=int, help=_defaults_help("draw_cap"))
    common.add_argument("--minority-symbol", dest="minority_symbol", help=_defaults_help("minority_symbol"))
    common.add_argument("--majority-symbol", dest="majority_symbol", help=_defaults_help("majority_symbol"))
    common.add_argument("--out", dest="out", help="write the report here instead of stdout")
    common.add_argument("--export-draws", dest="export_draws", help="write raw bootstrap draws (z,replication,deviation)")
    common.add_argument("--env-file", dest="env_file", help="settings file (default: ./.env when present)")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings only")

    parser = argparse.ArgumentParser(
        prog="quotascan",
        description="Detect implicit quotas in how a minority group is spread over departments.",
        epilog="Every setting can also be given as QUOTASCAN_<SETTING> in the environment or a .env file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("test", parents=[common], help="asymptotic deviation test, overall and per stratum")
    sub.add_parser("bootstrap", parents=[common], help="parametric bootstrap of the deviations")
    sub.add_parser("diagnose", parents=[common], help="leave-one-out, correlations and sign tests")
    quota = sub.add_parser("simulate-quota", parents=[common], help="counterfactual fixed quota per department")
    quota.add_argument("--export-shares", dest="export_shares", help="write discipline,actual_share,simulated_share")
    sub.add_parser("report", parents=[common], help="test + bootstrap + diagnose + simulate-quota in one document")

    gen = sub.add_parser("generate", parents=[common], help="write a synthetic corpus as CSV")
    gen.add_argument("--strata", type=int, default=50)
    gen.add_argument("--departments", type=_department_range, default=(30, 40), help="count or range lo-hi")
    gen.add_argument("--size-min", type=int, default=5)
    gen.add_argument("--size-max", type=int, default=40)
    gen.add_argument("--share-min", type=float, default=0.07)
    gen.add_argument("--share-max", type=float, default=0.49)
    gen.add_argument("--regime", choices=[r.value for r in Regime], default=Regime.NULL_RANDOM.value)
    gen.add_argument("--leak", type=float, default=0.0, help="soft quota escape probability")
    gen.add_argument("--emit", choices=["departments", "roster"], default="departments")
    return parser


_CONFIG_FIELDS = set(RunConfig.model_fields)


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)

    try:
        overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_FIELDS}
        config = load_config(overrides, env_file=args.env_file)

        if args.command == "generate":
            spec = CorpusSpec(
                n_strata=args.strata,
                departments_per_stratum=args.departments,
                size_range=(args.size_min, args.size_max),
                share_range=(args.share_min, args.share_max),
                regime=Regime(args.regime),
                quota=config.quota_q,
                leak=args.leak,
                seed=config.seed,
                min_size=config.min_dept_size,
            )
            text = cmd_generate(spec, args.emit, config.minority_symbol, config.majority_symbol)
        elif args.command == "test":
            text = cmd_test(config)
        elif args.command == "bootstrap":
            text = cmd_bootstrap(config)
        elif args.command == "diagnose":
            text = cmd_diagnose(config)
        elif args.command == "simulate-quota":
            text = cmd_simulate_quota(config, args.export_shares)
        else:
            text = cmd_report(config)

        _emit(text, config.out)
        return EXIT_OK

    except OSError as e:
        logger.error(f"❌ I/O error: {e}")
        return EXIT_IO
    except ValueError as e:
        logger.error(f"❌ Invalid input: {e}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
