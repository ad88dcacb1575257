"""Command-line entry point: ``hybridepi {run,baseline,compare,calibrate,validate}``.

Exit codes: 0 success, 2 usage or configuration error, 3 file-system error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import tomli

from . import __version__
from .analysis import compare, extract_routes, load_observed
from .baselines import IntegrationError, OdeModel, OdeParams, OdeState, integrate
from .calibration import DEFAULT_GRID_CAP, calibrate, load_grid
from .model import ConfigurationError
from .scenario import load_scenario, resolve_scenario_path, validate
from .simulation import run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _scenario_inputs(name_or_path: str) -> list[Path]:
    """The scenario file plus every data file it references."""
    path = resolve_scenario_path(name_or_path)
    with open(path, "rb") as fh:
        doc = tomli.load(fh)
    files = [path]
    for section, key in (("regions", "path"), ("flows", "path"), ("seeds", "onset_table")):
        ref = doc.get(section, {}).get(key)
        if isinstance(ref, str):
            files.append(path.parent / ref)
    return files


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _finish(out_dir: Path, command: str, arguments: dict, inputs: Sequence[Path],
            outputs: Sequence[Path], started: float) -> None:
    """Write ``manifest.json`` (reproducible) and ``run_timing.json`` (wall clock)."""
    manifest = {
        "command": command,
        "arguments": arguments,
        "version": __version__,
        "inputs": [{"file": p.name, "sha256": _sha256(p)} for p in inputs],
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    _write(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    timing = {"command": command, "wall_clock_seconds": time.perf_counter() - started}
    _write(out_dir / "run_timing.json", json.dumps(timing, indent=2, sort_keys=True) + "\n")


def _parse_sets(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _parse_window(text: Optional[str]) -> Optional[tuple[int, int]]:
    if text is None:
        return None
    lo, sep, hi = text.partition(":")
    try:
        window = (int(lo), int(hi))
    except ValueError:
        raise ConfigurationError(f"--window expects FIRST:LAST cycles, got {text!r}") from None
    if not sep or window[0] > window[1] or window[0] < 0:
        raise ConfigurationError(f"--window expects FIRST:LAST cycles, got {text!r}")
    return window


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    started = time.perf_counter()
    overrides = _parse_sets(args.set)
    window = _parse_window(args.window)
    inputs = _scenario_inputs(args.scenario)
    scenario = load_scenario(args.scenario).with_overrides(overrides)
    if window is not None and window[1] >= scenario.params.run_cycles:
        raise ConfigurationError(
            f"--window end {window[1]} is beyond the last cycle {scenario.params.run_cycles - 1}")
    report = run(scenario)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [
        _write(out / "timeseries.csv", report.timeseries_csv(window)),
        _write(out / "routes.csv", report.routes_csv(extract_routes(report))),
        _write(out / "summary.json", report.summary_json()),
    ]
    _finish(out, "run", {"scenario": args.scenario, "set": overrides,
                         "window": list(window) if window else None},
            inputs, outputs, started)
    print(f"wrote {len(outputs)} files to {out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    params = OdeParams(args.beta, args.lam, args.population, args.tau).validate()
    model = OdeModel(args.model)
    i0 = args.i0
    s0 = args.s0 if args.s0 is not None else args.population - i0 - args.e0
    initial = OdeState(s=s0, i=i0, r=0.0, e=args.e0 if model is OdeModel.SEIR else 0.0)
    trajectory = integrate(initial, params, args.dt, args.horizon, model)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    _write(out, trajectory.to_csv())
    print(f"wrote {out}")
    return EXIT_OK


def _read_summary(run_dir: Path) -> dict:
    with open(run_dir / "summary.json", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_compare(args) -> int:
    run_dir = Path(args.run_dir)
    summary = _read_summary(run_dir)
    observed = load_observed(args.observed)
    result = compare(summary["final_cumulative"], observed)
    if not result.rows:
        raise ConfigurationError("simulated and observed regions do not overlap")
    out = Path(args.out) if args.out else run_dir / "comparison.csv"
    _write(out, result.to_csv())
    print(f"loss {result.loss:.6g} over {len(result.rows)} regions")
    print(f"top {args.top} outliers by |log ratio|:")
    for row in result.outliers(args.top):
        print(f"  {row.region}: simulated {row.simulated:.6g}, observed {row.observed:.6g}, "
              f"log ratio {row.log_ratio:+.3f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    started = time.perf_counter()
    inputs = _scenario_inputs(args.scenario) + [Path(args.grid), Path(args.observed)]
    template = load_scenario(args.scenario)
    grid = load_grid(args.grid)
    observed = load_observed(args.observed)
    if args.jobs < 1:
        raise ConfigurationError(f"--jobs must be >= 1, got {args.jobs}")
    result = calibrate(template, grid, observed, cap=args.cap, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [
        _write(out / "loss_surface.csv", result.surface_csv()),
        _write(out / "best_params.toml", result.best_toml()),
    ]
    # --jobs is left out so the manifest is identical for any worker count.
    _finish(out, "calibrate", {"scenario": args.scenario, "grid": args.grid,
                               "observed": args.observed, "cap": args.cap},
            inputs, outputs, started)
    print(f"best loss {result.loss:.6g} at {result.best_point}")
    return EXIT_OK


def cmd_validate(args) -> int:
    problems = validate(load_scenario(args.scenario))
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_USAGE
    print("ok")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybridepi", description="Hybrid metapopulation epidemic simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate a scenario and write time series, routes and summary")
    p.add_argument("scenario", help="bundled scenario name (sars8, sars8-aggregated, sars30, "
                                    "sars30-onset) or path to a scenario TOML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a parameter or option; repeatable")
    p.add_argument("--window", metavar="FIRST:LAST", help="only emit cycles FIRST..LAST (inclusive)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="integrate the SIR or SEIR baseline")
    p.add_argument("model", choices=[m.value for m in OdeModel])
    p.add_argument("--beta", type=float, required=True, help="infection rate per person per time")
    p.add_argument("--lam", type=float, required=True, help="recovery rate per time")
    p.add_argument("--population", type=float, required=True)
    p.add_argument("--tau", type=float, default=None, help="mean infectious period; must equal 1/lam")
    p.add_argument("--s0", type=float, default=None, help="initial susceptible (default N - I0 - E0)")
    p.add_argument("--e0", type=float, default=0.0, help="initial exposed (SEIR only)")
    p.add_argument("--i0", type=float, default=1.0, help="initial infectious")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("compare", help="compare a run's final totals with observed counts")
    p.add_argument("run_dir", help="directory written by 'run'")
    p.add_argument("observed", help="CSV with region,cumulative_cases or region,date,cumulative_cases")
    p.add_argument("--out", default=None, help="comparison CSV (default RUN_DIR/comparison.csv)")
    p.add_argument("--top", type=int, default=4, help="number of outliers to print")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", help="grid-search overrides against observed counts")
    p.add_argument("scenario")
    p.add_argument("grid", help="TOML file with a [grid] table of value lists")
    p.add_argument("observed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes; outputs do not depend on it")
    p.add_argument("--cap", type=int, default=DEFAULT_GRID_CAP, help="maximum number of grid points")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("validate", help="check a scenario and list every problem")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, IntegrationError, tomli.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
