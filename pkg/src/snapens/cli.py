"""Command line entry point: ``snapens run | sweep-alpha | tables``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .harness import ExperimentConfig

log = logging.getLogger("snapens")

# flag name -> ExperimentConfig field
_FLAG_FIELDS = {
    "dataset": "dataset",
    "noise": "noise",
    "train_size": "train_size",
    "test_size": "test_size",
    "csv": "csv_path",
    "target_column": "target_column",
    "validation": "validation",
    "selectors": "selectors",
    "weighting": "weighting",
    "reps": "reps",
    "seed": "seed",
    "out": "out",
    "members": "M",
    "snapshots": "T",
    "epochs": "total_epochs",
    "hidden_units": "hidden_units",
    "learning_rate": "learning_rate",
    "batch_mode": "batch_mode",
    "init_scale": "init_scale",
    "anneal_p": "p",
    "jobs": "jobs",
}


def _add_experiment_flags(p):
    p.add_argument("--config", help="key=value file; flags given here override it")
    p.add_argument("--dataset", help="friedman1|friedman2|friedman3|ikeda|mackey-glass|csv:PATH")
    p.add_argument("--noise", help="free|low|high, none, sigma:S or ratio:R")
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--csv", help="CSV file for real data sets")
    p.add_argument("--target-column", type=int)
    p.add_argument("--validation", help="oob|external20|external37|external:F")
    p.add_argument("--selectors", help="comma list of bagging,epoch,neuralbag,seca,simann")
    p.add_argument("--weighting", action="append", help="law:alpha, e.g. power:2 (repeatable)")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--members", type=int, help="ensemble size M")
    p.add_argument("--snapshots", type=int, help="snapshots per net T")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden-units", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-mode", choices=["per-pattern", "full-batch"])
    p.add_argument("--init-scale", type=float)
    p.add_argument("--anneal-p", type=int, help="SimAnn steps per snapshot")
    p.add_argument("--jobs", type=int, help="replications run in parallel")
    p.add_argument("--save-cubes", action="store_true")
    p.add_argument("--paper-defaults", action="store_true", help="sizes and architectures of the benchmark")
    p.add_argument("--full", action="store_true", help="with --paper-defaults: 50 (or 100) replications")
    p.add_argument("--grid", action="store_true", help="with --paper-defaults: every noise level and size")


def build_parser():
    parser = argparse.ArgumentParser(prog="snapens", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train ensembles and evaluate selectors")
    _add_experiment_flags(run)

    sweep = sub.add_parser("sweep-alpha", help="weighted test error over a grid of alphas")
    _add_experiment_flags(sweep)
    sweep.add_argument("--alphas", default="0,0.5,1,2,3,5,7,10,15,20")
    sweep.add_argument("--laws", default="power,exp")
    sweep.add_argument("--base", default="seca", help="selector whose members are weighted")

    tables = sub.add_parser("tables", help="rebuild tables from reports.csv files")
    tables.add_argument("inputs", nargs="+", help="result directories or reports.csv files")
    tables.add_argument("--out", required=True)
    tables.add_argument("--baseline", default="bagging")
    return parser


def config_from_args(args) -> list[ExperimentConfig]:
    values = {}
    if args.config:
        values.update(harness.parse_config_text(Path(args.config).read_text()))
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is None:
            continue
        if flag == "weighting":
            v = tuple(v)
        values[name] = v
    if args.save_cubes:
        values["save_cubes"] = True
    if not args.paper_defaults:
        return [ExperimentConfig(**values)]
    dataset = values.pop("dataset", "friedman1")
    if args.csv:
        dataset = f"csv:{args.csv}"
    noise = values.pop("noise", None)
    size = values.pop("train_size", None)
    if args.grid:
        cfgs = harness.paper_grid(dataset, full=args.full, **values)
        if noise is not None:
            cfgs = [c for c in cfgs if c.noise == noise]
        if size is not None:
            cfgs = [c for c in cfgs if c.train_size == size]
    else:
        cfgs = [ExperimentConfig.paper_defaults(dataset, noise, size, full=args.full, **values)]
    if len(cfgs) > 1 and cfgs[0].out:
        cfgs = [replace(c, out=str(Path(c.out) / f"{c.noise}_{c.train_size}")) for c in cfgs]
    return cfgs


def _cmd_run(args):
    all_summary, all_tests = [], []
    for cfg in config_from_args(args):
        log.info("running %s noise=%s |D|=%d validation=%s reps=%d",
                 cfg.dataset, cfg.noise, cfg.train_size, cfg.validation, cfg.reps)

        def progress(rec, elapsed):
            log.info("replication %d done (%.1f s)", rec.run_id, elapsed)

        _, summary, tests = harness.run_experiment(cfg, progress=progress)
        all_summary += summary
        all_tests += tests
    print(harness.render_markdown(all_summary, all_tests))
    return 0


def _cmd_sweep(args):
    alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    laws = [s.strip() for s in args.laws.split(",") if s.strip()]
    for cfg in config_from_args(args):
        _, means = harness.alpha_sweep(cfg, alphas, laws, selector=args.base,
                                       progress=lambda r: log.info("replication %d done", r))
        print(f"# {cfg.dataset} noise={cfg.noise} |D|={cfg.train_size} base={args.base}")
        print("law,alpha,mean_nmse")
        for row in means:
            print(f"{row['law']},{row['alpha']:g},{row['mean_nmse']:.6g}")
    return 0


def _cmd_tables(args):
    from .weighting_eval import read_reports

    summary, tests = [], []
    for item in args.inputs:
        path = Path(item)
        report_path = path / "reports.csv" if path.is_dir() else path
        validation = "oob"
        cfg_path = report_path.parent / "config.txt"
        if cfg_path.exists():
            validation = harness.SplitSpec.parse(
                harness.parse_config_text(cfg_path.read_text()).get("validation", "oob")
            ).label
        reports = read_reports(report_path)
        summary += harness.summarize(reports, validation)
        tests += harness.sign_tests(reports, validation, args.baseline)
    md = harness.emit_tables(summary, tests, args.out)
    print(md)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep-alpha":
            return _cmd_sweep(args)
        return _cmd_tables(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"snapens: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
