"""Command-line entry point.

Exit status is 0 on success, 1 for usage or configuration errors (including
missing files) and 2 for runtime failures such as non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from ._validation import ConfigurationError, ConvergenceError
from .config import load_config, parse_config_text
from .experiments import (
    PRESETS,
    ComparisonError,
    PresetError,
    render_plots,
    run_preset,
    summarize_episodes,
)
from .graph_env import build_topology, write_edge_list
from .reward import reward_bound
from .sim import run_campaign, write_summary_csv
from .threat_models import parse_prototypes, resolve_prototypes

log = logging.getLogger("robust_isr")

BUNDLED_CONFIGS = ("exp1", "exp2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_config(ref, overrides, seed=None):
    if ref is None or (ref in BUNDLED_CONFIGS and not Path(ref).exists()):
        text = resources.files("robust_isr.data").joinpath(f"{ref or 'exp1'}.ini").read_text()
        cfg = load_config(text=text, overrides=overrides)
    else:
        cfg = load_config(ref, overrides=overrides)
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def _print_summaries(summaries, out=sys.stdout):
    cols = ("planner", "family", "n_nodes", "n_runs", "obs_mean", "exposures_mean", "total_mean", "conv_mean")
    print(" ".join(f"{c:>14}" for c in cols), file=out)
    for s in summaries:
        row = []
        for c in cols:
            v = getattr(s, c)
            row.append(f"{v:>14.2f}" if isinstance(v, float) else f"{v!s:>14}")
        print(" ".join(row), file=out)


def cmd_run(args):
    cfg = _read_config(args.config, args.set, args.seed)
    seeds = range(args.episodes)
    res = run_campaign(cfg, seeds, jobs=args.jobs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for lg in res.logs:
            lg.to_csv(out / f"episode_{lg.meta['episode']:04d}.csv")
        write_summary_csv([res.summary], out / "summary.csv", header=f"seed={cfg.seed}")
    _print_summaries([res.summary])
    for s, err in res.failures.items():
        print(f"episode {s} failed: {err}", file=sys.stderr)
    if res.failures:
        return 2
    return 0


def cmd_preset(args):
    planners = args.planners.split(",") if args.planners else None
    res = run_preset(
        args.preset,
        n_seeds=args.seeds,
        out_dir=args.out,
        planners=planners,
        jobs=args.jobs,
        seed=args.seed,
        plots=not args.no_plots,
    )
    _print_summaries(res.summaries.values())
    for label, report in res.reports().items():
        print(f"\n[{label}]")
        print(report.format())
    if len({s.n_nodes for (p, _), s in res.summaries.items() if p == "adaptive"}) >= 2:
        fit = res.trend()
        print(f"\nconvergence trend: slope {fit.slope:.3f} intercept {fit.intercept:.1f} "
              f"r {fit.correlation:.3f}")
    if res.out_dir is not None:
        print(f"\nwrote {res.out_dir}")
    return 0


def cmd_gen_graph(args):
    cfg = _read_config(args.config, args.set, args.seed)
    cfg = cfg.replace(episode=args.episode)
    protos = resolve_prototypes(cfg.prototypes)
    env = build_topology(cfg.topology.replace(seed=cfg.graph_seed()), n_types=protos.n_types)
    text = write_edge_list(env, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def cmd_summarize(args):
    summaries = summarize_episodes(args.directory, check=not args.no_check)
    if not summaries:
        raise FileNotFoundError(f"no episode CSVs under {args.directory}")
    if args.out:
        write_summary_csv(summaries, args.out)
    _print_summaries(summaries)
    return 0


def cmd_plot(args):
    for p in render_plots(args.directory, args.out):
        print(p)
    return 0


def _looks_like_prototypes(text):
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            return line.split()[0] == "actions"
    return False


def cmd_validate(args):
    ref = args.path
    if ref is not None and ref not in BUNDLED_CONFIGS and not Path(ref).exists():
        raise FileNotFoundError(f"no such file: {ref}")
    if ref is not None and Path(ref).exists() and _looks_like_prototypes(Path(ref).read_text()):
        protos = parse_prototypes(Path(ref).read_text(), name=ref)
        cfg = _read_config(None, args.set)
        print(f"prototypes: {len(protos)} threat types, actions {' '.join(protos.actions)}")
    else:
        if ref is not None and Path(ref).exists():
            parse_config_text(Path(ref).read_text(), source=ref)
        cfg = _read_config(ref, args.set)
        protos = resolve_prototypes(cfg.prototypes)
        print(f"config: {ref or 'exp1'} ({cfg.topology.describe()}, planner {cfg.planner})")
    if len(cfg.reward.c_sense) != protos.n_actions:
        raise ConfigurationError(
            f"{len(cfg.reward.c_sense)} sensing costs for {protos.n_actions} actions", key="reward.c_sense"
        )
    gamma = cfg.reward.gamma
    r_max = reward_bound(protos, cfg.reward, cfg.horizon)
    print(f"gamma = {gamma}")
    print(f"R_max = {r_max:.6g}")
    print(f"value bound R_max/(1-gamma) = {r_max / (1.0 - gamma):.6g}")
    return 0


def build_parser():
    parser = _Parser(prog="robust-isr", description="Adaptive robust surveillance planning on graphs.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_args(p):
        p.add_argument("-c", "--config", help="INI config file or a bundled name (exp1, exp2)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, help="master seed")

    p = sub.add_parser("run", help="run episodes of one configuration")
    config_args(p)
    p.add_argument("-n", "--episodes", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--out", help="directory for episode and summary CSVs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="run a named experiment preset")
    p.add_argument("preset", choices=sorted(PRESETS))
    p.add_argument("--seeds", type=int, help="seeds per campaign (preset default if omitted)")
    p.add_argument("-o", "--out", default="out")
    p.add_argument("--planners", help="comma-separated subset of adaptive,static,nominal")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("gen-graph", help="write the edge list of a configured graph")
    config_args(p)
    p.add_argument("--episode", type=int, default=0)
    p.add_argument("-o", "--out", help="output file (stdout if omitted)")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("summarize", help="recompute summaries from episode CSVs")
    p.add_argument("directory")
    p.add_argument("-o", "--out", help="write the summary CSV here")
    p.add_argument("--no-check", action="store_true", help="skip the preset hash check")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("plot", help="render figures from episode CSVs")
    p.add_argument("directory")
    p.add_argument("-o", "--out", help="figure directory (default <directory>/plots)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate", help="check a config or prototype file and print the value bound")
    p.add_argument("path", nargs="?", help="config file, prototype file or bundled name (default exp1)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                                 logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, PresetError, ComparisonError, FileNotFoundError, KeyError,
            ValueError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
