"""Command-line entry point: analyze, check-density, rate and paths."""

import argparse
import logging
import os
import sys
import time
from typing import List, Optional, Tuple

from chainverifier import __version__
from chainverifier.attractivity import (
    certify_fixed_point,
    certify_globally_attracting,
    certify_steadily_attracting,
    combine_fixed_point,
    find_path,
    return_lengths,
)
from chainverifier.config import ConfigError, RunConfig, load_config
from chainverifier.control_model import VerificationError
from chainverifier.controllability import find_rank_witness, rank_witness
from chainverifier.logging_config import setup_logging
from chainverifier.models import (
    AttractivityCertificate,
    Conclusion,
    DensityReport,
    PathQueryResult,
    PathsReport,
    RateReport,
    VerdictReport,
)
from chainverifier.simulate import empirical_density_check, run_chain, xnes_convergence_rate
from chainverifier.storage import ReportStorage, StorageError, create_report_storage
from chainverifier.verdict import assemble_verdict

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2
EXIT_CHECK_FAILED = 2


def _config_echo(config: RunConfig) -> dict:
    return config.model_dump(mode="json", by_alias=True)


def cmd_analyze(config: RunConfig, started: Optional[float] = None) -> Tuple[VerdictReport, int]:
    """Rank condition, attractivity certificates, return lengths and the verdict at x*."""
    started = time.perf_counter() if started is None else started
    analysis = config.require("analysis")
    model = config.model.build()
    x_star = analysis.x_star
    budget = analysis.budget
    seed = analysis.seed

    if analysis.witness is not None:
        witness = rank_witness(model, x_star, analysis.witness, analysis.rank_tol, analysis.differentiation)
    else:
        witness = find_rank_witness(model, x_star, analysis.rank_k_max, analysis.rank_tries,
                                    analysis.rank_tol, seed, analysis.differentiation)

    origins = analysis.origins.resolve(model.n)
    globally = certify_globally_attracting(model, x_star, origins, analysis.epsilon, analysis.k_max, budget, seed)
    steadily = certify_steadily_attracting(model, x_star, origins, analysis.epsilon, analysis.T, analysis.span,
                                           budget, seed)

    fixed_point = None
    steadily_evidence = steadily if isinstance(steadily, AttractivityCertificate) else None
    if steadily_evidence is None and isinstance(globally, AttractivityCertificate):
        fixed_point = certify_fixed_point(model, x_star, analysis.fixed_point_tol, budget, seed)
        if fixed_point is not None:
            steadily_evidence = combine_fixed_point(globally, fixed_point)

    returns = return_lengths(model, x_star, analysis.resolved_epsilon_return, analysis.return_k_max, budget, seed)
    verdict = assemble_verdict(
        witness,
        globally if isinstance(globally, AttractivityCertificate) else None,
        steadily_evidence,
        returns,
        candidate=x_star,
    )

    report = VerdictReport(
        tool_version=__version__,
        config=_config_echo(config),
        wall_clock_seconds=time.perf_counter() - started,
        verdict=verdict,
        globally_result=globally,
        steadily_result=steadily,
        fixed_point=fixed_point,
        returns=returns,
        rank_reports=[witness.report] if witness is not None else [],
    )
    code = EXIT_INCONCLUSIVE if verdict.conclusion == Conclusion.INCONCLUSIVE else EXIT_OK
    return report, code


def cmd_check_density(config: RunConfig, storage: Optional[ReportStorage] = None,
                      started: Optional[float] = None) -> Tuple[DensityReport, int]:
    """Histogram oracles at the configured states; exit 0 iff every configured threshold holds."""
    started = time.perf_counter() if started is None else started
    section = config.require("density_check")
    model = config.model.build()

    checks = []
    for index, state in enumerate(section.states):
        checks.extend(empirical_density_check(model, state, section.samples, section.bins, section.range,
                                              section.seed + index, section.threshold,
                                              section.marginal_samples))

    if storage is not None:
        for i, check in enumerate(checks):
            storage.write_csv(
                f"histogram_{i}.csv",
                ["left", "right", "count", "empirical", "analytic"],
                [[b.left, b.right, b.count, b.empirical, b.analytic] for b in check.bins],
            )
        if section.trajectory is not None:
            trajectory = run_chain(model, section.trajectory.x0, section.trajectory.steps, section.seed)
            storage.write_csv("trajectory.csv", trajectory.header(), trajectory.rows())

    all_passed = None if section.threshold is None else all(c.passed for c in checks)
    for check in checks:
        status = "n/a" if check.passed is None else ("PASS" if check.passed else "FAIL")
        logger.info(f"Density check {status}: state={check.state} coordinate={check.coordinate} "
                    f"L1={check.l1_distance:.4f}")
    report = DensityReport(
        tool_version=__version__,
        config=_config_echo(config),
        wall_clock_seconds=time.perf_counter() - started,
        checks=checks,
        all_passed=all_passed,
    )
    return report, EXIT_CHECK_FAILED if all_passed is False else EXIT_OK


def cmd_rate(config: RunConfig, started: Optional[float] = None) -> Tuple[RateReport, int]:
    """Both convergence-rate routes of the configured xNES chain."""
    started = time.perf_counter() if started is None else started
    section = config.require("rate")
    if config.model.kind != "xnes":
        raise ConfigError(f"Invalid config field 'model.kind': rate needs an xnes model, got {config.model.kind}")
    chain = config.model.build()
    rate = xnes_convergence_rate(chain.params, section.x0, section.sigma0, section.iterations, section.seed,
                                 section.burn_in, section.batches)
    logger.info(f"Route A {rate.per_iteration_log_step_ratio:.5f} +- {rate.se_log_step_ratio:.5f}, "
                f"route B {rate.expectation_route:.5f} +- {rate.se_expectation:.5f}, "
                f"agree={rate.routes_agree}, behaviour={rate.behaviour}")
    report = RateReport(
        tool_version=__version__,
        config=_config_echo(config),
        wall_clock_seconds=time.perf_counter() - started,
        rate=rate,
    )
    return report, EXIT_OK


def cmd_paths(config: RunConfig, started: Optional[float] = None) -> Tuple[PathsReport, int]:
    """find_path for every configured (y, center, radius, k) query."""
    started = time.perf_counter() if started is None else started
    section = config.require("paths")
    model = config.model.build()
    results = []
    for index, query in enumerate(section.queries):
        certificate = find_path(model, query.y, query.center, query.radius, query.k, section.budget,
                                section.seed, (index,))
        results.append(PathQueryResult(y=query.y, center=query.center, radius=query.radius, k=query.k,
                                       found=certificate is not None, certificate=certificate))
    report = PathsReport(
        tool_version=__version__,
        config=_config_echo(config),
        wall_clock_seconds=time.perf_counter() - started,
        results=results,
    )
    return report, EXIT_OK


REPORT_NAMES = {
    "analyze": "analyze_report.json",
    "check-density": "density_report.json",
    "rate": "rate_report.json",
    "paths": "paths_report.json",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainverifier",
        description="Numerical evidence for irreducibility and aperiodicity of Markov chains",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in REPORT_NAMES:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="YAML run config")
        sub.add_argument("--out", help="Output directory; the JSON report goes to stdout when omitted")
        sub.add_argument("--seed-override", type=int, help="Replace every seed in the config")
        sub.add_argument("--rank-tol", type=float, help="Relative numeric-rank tolerance")
        sub.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and write its report; returns the exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(log_level="WARNING" if args.quiet else os.getenv("LOG_LEVEL", "INFO"))
    started = time.perf_counter()
    try:
        config = load_config(args.config)
        if args.seed_override is not None or args.rank_tol is not None:
            config = config.with_overrides(seed=args.seed_override, rank_tol=args.rank_tol)
        storage = create_report_storage(args.out)

        if args.command == "analyze":
            report, code = cmd_analyze(config, started)
        elif args.command == "check-density":
            report, code = cmd_check_density(config, storage, started)
        elif args.command == "rate":
            report, code = cmd_rate(config, started)
        else:
            report, code = cmd_paths(config, started)

        storage.write_report(REPORT_NAMES[args.command], report)
        return code
    except (VerificationError, StorageError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
