"""Command-line front end: ``levelflow check | straighten | render``.

Exit codes
    0  hypotheses hold (check) / chart built and verified (straighten)
    1  hypotheses fail; the JSON report carries the witness
    2  inconclusive, or a usage / configuration error
    3  chart construction or verification failed numerically
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import chartio
from .config import ConfigError, JobConfig, build_config, load_job
from .expression import ParseError
from .pipeline import run_check, run_straighten
from .plotting import render
from .regularity import Verdict

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_NUMERIC = 0, 1, 2, 3

_VERDICT_EXIT = {
    Verdict.EQUIVALENT.value: EXIT_OK,
    Verdict.NOT_EQUIVALENT.value: EXIT_FAIL,
    Verdict.INCONCLUSIVE.value: EXIT_INCONCLUSIVE,
}


def exit_code_for(report: dict) -> int:
    """Exit code from a serialized check or straighten report."""
    if "check" in report:
        code = exit_code_for(report["check"])
        if code != EXIT_OK:
            return code
        ver = report.get("verification")
        if report.get("error") or ver is None or not ver.get("passed"):
            return EXIT_NUMERIC
        return EXIT_OK
    return _VERDICT_EXIT.get(report.get("verdict"), EXIT_INCONCLUSIVE)


def dump_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--expr", help="f(x, y), e.g. 'atan(y - tan(x)^2)'")
    p.add_argument("--window", nargs=4, type=float, metavar=("XMIN", "XMAX", "YMIN", "YMAX"),
                   help="window (default: -1 1 -1 1)")
    p.add_argument("--grid", nargs=2, type=int, metavar=("NX", "NY"), help="grid nodes (default: 128 128)")
    p.add_argument("--levels", type=int, help="sampled levels for the checks (default: 64)")
    p.add_argument("--strips", type=int, help="strips in the chart (default: 8)")
    p.add_argument("--tol-trace", type=float, help="max |f(v) - level| on traced vertices (default: 1%% of value range)")
    p.add_argument("--tol-grad", type=float, help="smallest admissible |grad f| (default: 1e-6 * range / diagonal)")
    p.add_argument("--tol-seam", type=float, help="max seam / round-trip error (default: 2 cells)")
    p.add_argument("--tol-verify", type=float, help="max |f(phi(x, y)) - y| (default: 1e-2)")
    p.add_argument("--job", help="JSON job file; command-line flags override it")
    p.add_argument("--seed", type=int, help="seed for random sampling (default: $LEVELFLOW_SEED or 0)")
    p.add_argument("--out", help="output directory (check, straighten) or file (render)")
    p.add_argument("--no-report", dest="out_report", action="store_const", const=False)
    p.add_argument("--no-chart", dest="out_chart", action="store_const", const=False)
    p.add_argument("--no-svg", dest="out_svg", action="store_const", const=False)
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levelflow",
        description="Test whether f(x, y) is topologically a projection on a window, and build the straightening chart.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", help="check connected proper level curves and regularity")
    _add_common(p)
    p = sub.add_parser("straighten", help="build and verify a chart phi with f(phi(x, y)) = y")
    _add_common(p)
    p = sub.add_parser("render", help="draw level curves (and a chart grid) to an SVG file")
    _add_common(p)
    p.add_argument("--chart", help="chart file written by 'straighten'")
    return parser


def config_from_args(args) -> JobConfig:
    settings = load_job(args.job) if args.job else {}
    for key in ("expr", "window", "grid", "levels", "strips", "seed",
                "tol_trace", "tol_grad", "tol_seam", "tol_verify",
                "out_report", "out_chart", "out_svg"):
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return build_config(settings)


def cmd_check(config: JobConfig, out: str | None) -> int:
    outcome = run_check(config)
    data = outcome.report.to_dict()
    sys.stdout.write(dump_json(data))
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        if config.outputs.report:
            (d / "report.json").write_text(dump_json(data))
        if config.outputs.svg:
            sections = [outcome.transversal] if outcome.transversal is not None else []
            render(outcome.field, d / "levels.svg", n_levels=min(config.levels, 32),
                   sections=sections, tol=outcome.tolerances.trace)
    return exit_code_for(data)


def cmd_straighten(config: JobConfig, out: str | None) -> int:
    outcome = run_straighten(config)
    d = Path(out or ".")
    data = {
        "check": outcome.check.report.to_dict(),
        "verification": outcome.verification.to_dict() if outcome.verification else None,
        "error": outcome.error,
        "files": {},
    }
    if outcome.chart is not None:
        d.mkdir(parents=True, exist_ok=True)
        if config.outputs.chart:
            chartio.save(outcome.chart, d / "chart.txt")
            data["files"]["chart"] = "chart.txt"
        if config.outputs.svg:
            render(outcome.check.field, d / "chart.svg", n_levels=config.strips + 1,
                   levels=outcome.chart.levels, sections=[outcome.check.transversal],
                   chart=outcome.chart, tol=outcome.check.tolerances.trace)
            data["files"]["svg"] = "chart.svg"
        if config.outputs.report:
            data["files"]["report"] = "verification.json"
            (d / "verification.json").write_text(dump_json(data))
    if outcome.error:
        print(f"levelflow: {outcome.error}", file=sys.stderr)
    sys.stdout.write(dump_json(data))
    return exit_code_for(data)


def cmd_render(args, config: JobConfig | None) -> int:
    out = Path(args.out or "levels.svg")
    if args.chart:
        chart = chartio.load(args.chart)
        field = chart.get_field()
        render(field, out, levels=chart.levels, sections=[s.anchor for s in chart.strips[:1]],
               chart=chart, tol=chart.tolerances.get("trace"))
    else:
        outcome = run_check(config)
        sections = [outcome.transversal] if outcome.transversal is not None else []
        render(outcome.field, out, n_levels=min(config.levels, 32), sections=sections,
               tol=outcome.tolerances.trace)
    print(str(out))
    return EXIT_OK


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "render" and args.chart and not (args.expr or args.job):
            return cmd_render(args, None)
        config = config_from_args(args)
        if args.command == "check":
            return cmd_check(config, args.out)
        if args.command == "straighten":
            return cmd_straighten(config, args.out)
        return cmd_render(args, config)
    except (ParseError, ConfigError, chartio.ChartFormatError) as exc:
        print(f"levelflow: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except OSError as exc:
        print(f"levelflow: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
