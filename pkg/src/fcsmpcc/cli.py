"""Command-line front end: ``fcsmpcc run | compare | sweep | version``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import MetricSpec, compare_report
from .config import SUITES, ConfigError, bundled_path, load_file
from .sim import SimulationDiverged, Trace, run_many

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _default_out() -> str:
    return os.environ.get("FCSMPCC_OUT", "fcsmpcc_out")


def _span(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:END, got {text!r}")


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    try:
        return bundled_path(p.name)
    except ConfigError:
        raise ConfigError(f"config file not found: {path}")


def _slug(text: str) -> str:
    return text.replace("+", "_").replace("/", "_").replace(" ", "")


def _write_report(out: Path, stem: str, report) -> list[str]:
    json_path, txt_path = out / f"{stem}_report.json", out / f"{stem}_report.txt"
    json_path.write_text(report.to_json())
    txt_path.write_text(report.to_text())
    return [json_path.name, txt_path.name]


def _run_groups(groups, out: Path, jobs: int, suffix: str = "") -> dict:
    """Run every (stem, configs, metrics) group, write traces and reports.

    Simulations may run on worker threads; all files are written here, in
    order, by the calling thread.
    """
    out.mkdir(parents=True, exist_ok=True)
    flat = [cfg for _, cfgs, _ in groups for cfg in cfgs]
    traces = run_many(flat, jobs=jobs)
    summary = {"version": __version__, "runs": [], "reports": {}}
    k = 0
    for stem, cfgs, metrics in groups:
        labelled = {}
        for cfg in cfgs:
            tr = traces[k]
            k += 1
            fname = f"{cfg.name}__{_slug(cfg.controller)}{suffix}.csv"
            tr.to_csv(out / fname)
            labelled[cfg.controller] = tr
            summary["runs"].append({
                "file": fname,
                "name": cfg.name,
                "controller": cfg.controller,
                "horizon": cfg.horizon,
                "config_hash": cfg.config_hash(),
                "rows": len(tr),
                "evals_per_period": sorted({int(v) for v in tr["model_evals"]}),
            })
        report = compare_report(labelled, metrics)
        summary["reports"][stem + suffix] = {
            "files": _write_report(out, stem + suffix, report),
            "reductions": report.reductions,
        }
    return summary


def cmd_run(args) -> int:
    paths = [_resolve_config(p) for p in args.config or []]
    if args.suite:
        if args.suite not in SUITES:
            raise ConfigError(f"unknown suite {args.suite!r}; have {sorted(SUITES)}")
        paths += [bundled_path(name) for name in SUITES[args.suite]]
    if not paths:
        raise ConfigError("nothing to run: give --config or --suite")
    groups = []
    for p in paths:
        cfgs, metrics = load_file(p, args.set or [])
        groups.append((Path(p).stem, cfgs, metrics))
    out = Path(args.out)
    summary = _run_groups(groups, out, args.jobs)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {len(summary['runs'])} trace(s) and summary.json to {out}")
    return 0


def cmd_sweep(args) -> int:
    path = _resolve_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    groups = []
    for v in values:
        cfgs, metrics = load_file(path, [*(args.set or []), f"{args.key}={v}"])
        groups.append((path.stem, cfgs, metrics))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"version": __version__, "key": args.key, "values": values, "runs": [], "reports": {}}
    for (stem, cfgs, metrics), v in zip(groups, values):
        part = _run_groups([(stem, cfgs, metrics)], out, args.jobs,
                           suffix=f"__{_slug(args.key)}-{v}")
        summary["runs"] += part["runs"]
        summary["reports"].update(part["reports"])
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"swept {args.key} over {len(values)} value(s); results in {out}")
    return 0


def cmd_compare(args) -> int:
    if len(args.traces) < 2:
        raise ConfigError("compare needs at least two trace files")
    traces = {}
    for path in args.traces:
        tr = Trace.from_csv(path)
        label = tr.meta.get("controller", Path(path).stem)
        if label in traces:
            label = f"{label} ({Path(path).stem})"
        traces[label] = tr
    spec = MetricSpec(thd_window=args.thd_window, ripple_window=args.ripple_window,
                      t_disturb=args.t_disturb, t_end=args.t_end, band_fraction=args.band)
    report = compare_report(traces, spec, baseline=args.baseline)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = _write_report(out, args.name, report)
    print(report.to_text(), end="")
    print(f"wrote {', '.join(files)} to {out}")
    return 0


def cmd_version(args) -> int:
    print(f"fcsmpcc {__version__}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcsmpcc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenario files and write traces plus a summary")
    run.add_argument("--config", action="append", metavar="PATH",
                     help="scenario file (repeatable); bundled names such as steady_state.cfg also work")
    run.add_argument("--suite", help=f"bundled suite, one of {sorted(SUITES)}")
    run.add_argument("--out", default=_default_out(), metavar="DIR")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    run.add_argument("--jobs", type=int, default=1, metavar="N")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="compare trace CSV files")
    cmp_.add_argument("traces", nargs="+", metavar="TRACE")
    cmp_.add_argument("--out", default=_default_out(), metavar="DIR")
    cmp_.add_argument("--name", default="compare", help="report file prefix")
    cmp_.add_argument("--thd-window", type=_span, metavar="T0:T1")
    cmp_.add_argument("--ripple-window", type=_span, metavar="T0:T1")
    cmp_.add_argument("--t-disturb", type=float, metavar="S")
    cmp_.add_argument("--t-end", type=float, metavar="S")
    cmp_.add_argument("--band", type=float, default=0.01, help="speed recovery band as a fraction of reference")
    cmp_.add_argument("--baseline", help="label used as the reduction baseline (default: first trace)")
    cmp_.set_defaults(func=cmd_compare)

    sweep = sub.add_parser("sweep", help="run one scenario file over a grid of values for one key")
    sweep.add_argument("--config", required=True, metavar="PATH")
    sweep.add_argument("--key", required=True, help="config key, e.g. dc.beta1_per_s")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--out", default=_default_out(), metavar="DIR")
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument("--jobs", type=int, default=1, metavar="N")
    sweep.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("version", help="print the package version")
    ver.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDiverged as exc:
        print(f"error: simulation diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
