# sojourn/main.py
import argparse
import logging
import sys
from pathlib import Path

from sojourn.errors import AcceptanceFailed, OutputFailure, SojournError
from sojourn.runner import run_scenario, setup_logging
from sojourn.scenario import load_scenario
from sojourn.settings import settings

logger = logging.getLogger("sojourn.main")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sojourn", description="Sojourn relations, Poisson traces and radiation fields")
    parser.add_argument("--scenario", required=True, type=Path, help="TOML scenario file")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides [output].dir)")
    parser.add_argument("--threads", type=int, default=settings.THREADS, help="worker pool size for point sweeps")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--validate-only", action="store_true", help="parse and validate the scenario, then exit")
    return parser


def _report_error(exc: SojournError) -> None:
    notes = "".join(f"\n  {note}" for note in getattr(exc, "__notes__", []))
    print(f"error ({type(exc).__name__}): {exc}{notes}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        scenario = load_scenario(args.scenario)
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_IO
    except SojournError as exc:
        _report_error(exc)
        return exc.exit_code

    if args.validate_only:
        print(f"scenario {scenario.name!r} ({scenario.task.value}) is valid")
        return EXIT_OK

    out_dir = args.out or Path(scenario.output.dir)
    try:
        setup_logging(settings, out_dir, args.verbose)
    except OSError as exc:
        print(f"error: cannot open log in {out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        report = run_scenario(scenario, out_dir, args.threads)
    except SojournError as exc:
        _report_error(exc)
        return exc.exit_code
    except OSError as exc:
        _report_error(OutputFailure(str(exc)))
        return EXIT_IO

    failed = [name for name, ok in report.checks.items() if not ok]
    if failed:
        exc = AcceptanceFailed("acceptance checks failed: " + ", ".join(failed))
        logger.error(str(exc), extra={"failed": failed})
        _report_error(exc)
        return exc.exit_code
    logger.info("done", extra={"files": len(report.files)})
    return EXIT_OK


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
