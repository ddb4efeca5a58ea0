"""``powercql`` command line: profiles, collect, train, run, sweep, report, pipeline.

Exit codes: 0 ok, 2 usage error, 3 bad or insufficient data, 4 runtime abort.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import evaluate, io, nodesim, pipeline
from .collect import DEFAULT_EPISODES, CoverageError, collect
from .control import ControlError
from .core import DEFAULT_GRID, DataError
from .cql import TrainConfig, TrainingAborted, train

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

OUT_ENV = "POWERCQL_OUT"

log = logging.getLogger("powercql")


class UsageError(Exception):
    pass


def _out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def _out(path, default_name: str) -> Path:
    return Path(path) if path else _out_root() / default_name


def _profiles(path) -> list:
    return nodesim.load_profiles(path) if path else nodesim.builtin_profiles()


def _pick(profiles, names):
    try:
        return [nodesim.profile_by_name(n, profiles) for n in names]
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc


def cmd_profiles_export(args) -> int:
    profiles = nodesim.builtin_profiles()
    if args.only:
        profiles = _pick(profiles, args.only)
    out = _out(args.out, "profiles.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    nodesim.save_profiles(profiles, out)
    print(f"wrote {len(profiles)} profiles to {out}")
    return 0


def cmd_collect(args) -> int:
    profiles = _profiles(args.profiles)
    if args.only:
        profiles = _pick(profiles, args.only)
    elif not args.all:
        profiles = [p for p in profiles if p.train]
    if not profiles:
        raise UsageError("no profiles to collect from")
    ds = collect(profiles, DEFAULT_GRID, episodes_per_profile=args.episodes, seed=args.seed)
    out = _out(args.out, "dataset.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_dataset(ds, out)
    print(f"wrote {len(ds)} transitions from {len(profiles)} profiles to {out}")
    return 0


def cmd_train(args) -> int:
    try:
        cfg = TrainConfig(
            gamma=args.gamma,
            alpha=args.alpha,
            batch=args.batch,
            iterations=args.iters,
            lr=args.lr,
            seed=args.seed,
            target_sync=args.target_sync,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = io.read_dataset(args.data)
    rep = train(ds, cfg)
    out = _out(args.out, "checkpoint.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_checkpoint(rep.checkpoint, out)
    loss_log = Path(args.loss_log) if args.loss_log else out.with_suffix(".loss.csv")
    rep.write_loss_log(loss_log)
    tot, bell, cons = rep.losses[-1]
    print(f"wrote {out} and {loss_log}; final loss {tot:.4g} (bellman {bell:.4g}, conservative {cons:.4g})")
    return 0


def _write_logs(out: Path, logs, label: str) -> None:
    eps = out / "episodes"
    eps.mkdir(parents=True, exist_ok=True)
    for r, lg in enumerate(logs):
        (eps / f"{lg.benchmark}_{label}_{r}.csv").write_text(lg.to_csv(), encoding="utf-8")


def cmd_run(args) -> int:
    ck = io.read_checkpoint(args.ckpt)
    profiles = _pick(_profiles(args.profiles), args.profile)
    out = _out(args.out, "run")
    summaries = []
    for prof in profiles:
        s, logs = evaluate.run_controller(ck, prof, args.repeats, seed=args.seed)
        _write_logs(out, logs, s.policy)
        summaries.append(s)
    (out / "summary.csv").write_text(evaluate.summaries_to_csv(summaries), encoding="utf-8")
    print(f"{sum(s.repeats for s in summaries)} episodes logged under {out}")
    return 0


def cmd_sweep(args) -> int:
    profiles = _profiles(args.profiles)
    profiles = _pick(profiles, args.profile) if args.profile else profiles
    grid = io.read_checkpoint(args.ckpt).grid if args.ckpt else DEFAULT_GRID
    out = _out(args.out, "sweep")
    summaries = []
    n = 0
    for prof in profiles:
        got, logs = evaluate.static_sweep(prof, grid, args.repeats, seed=args.seed, keep_logs=True)
        for s in got:
            _write_logs(out, logs[s.cap], s.policy)
            n += len(logs[s.cap])
        summaries += got
    (out / "summary.csv").write_text(evaluate.summaries_to_csv(summaries), encoding="utf-8")
    print(f"{n} episodes logged under {out}")
    return 0


def cmd_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs at least one input (a summary.csv or a directory holding one)")
    summaries = []
    for p in map(Path, args.inputs):
        summaries += evaluate.read_summaries(p / "summary.csv" if p.is_dir() else p)
    if not summaries:
        raise DataError("inputs hold no summaries")
    paths = evaluate.report(summaries, _out(args.out, "report"))
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def cmd_pipeline(args) -> int:
    out = _out(args.out, "pipeline")
    profiles = _profiles(args.profiles)
    res = pipeline.run_pipeline(out, profiles, episodes=args.episodes, repeats=args.repeats, seed=args.seed)
    checks = pipeline.grade(res.summaries, profiles)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.label}: {c.detail}")
    print(f"outputs in {out}")
    return 0


def _format_flag(p):
    p.add_argument("--format", choices=["csv"], default="csv", help="output format (csv only)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="powercql", description="Offline conservative Q-learning for CPU power capping.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    prof = sub.add_parser("profiles", help="builtin benchmark profiles")
    psub = prof.add_subparsers(dest="action", required=True)
    exp = psub.add_parser("export", help="write builtin profiles to a file")
    exp.add_argument("--out")
    exp.add_argument("--only", nargs="+", metavar="NAME")
    exp.set_defaults(func=cmd_profiles_export)

    col = sub.add_parser("collect", help="gather an offline dataset under random caps")
    col.add_argument("--profiles", help="profile file (default: builtin)")
    col.add_argument("--only", nargs="+", metavar="NAME", help="collect from these profiles only")
    col.add_argument("--all", action="store_true", help="include holdout profiles")
    col.add_argument("--episodes", type=int, default=DEFAULT_EPISODES)
    col.add_argument("--seed", type=int, default=0)
    col.add_argument("--out")
    col.set_defaults(func=cmd_collect)

    tr = sub.add_parser("train", help="train a checkpoint on a dataset")
    d = TrainConfig()
    tr.add_argument("--data", required=True)
    tr.add_argument("--gamma", type=float, default=d.gamma)
    tr.add_argument("--alpha", type=float, default=d.alpha)
    tr.add_argument("--batch", type=int, default=d.batch)
    tr.add_argument("--iters", type=int, default=d.iterations)
    tr.add_argument("--lr", type=float, default=d.lr)
    tr.add_argument("--target-sync", type=int, default=None)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out")
    tr.add_argument("--loss-log")
    tr.set_defaults(func=cmd_train)

    run = sub.add_parser("run", help="run the greedy controller on simulated profiles")
    run.add_argument("--ckpt", required=True)
    run.add_argument("--profile", nargs="+", required=True, metavar="NAME")
    run.add_argument("--profiles", help="profile file (default: builtin)")
    run.add_argument("--repeats", type=int, default=evaluate.DEFAULT_REPEATS)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out")
    _format_flag(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="static-cap sweep over the action grid")
    sw.add_argument("--profile", nargs="+", metavar="NAME", help="default: every profile")
    sw.add_argument("--profiles", help="profile file (default: builtin)")
    sw.add_argument("--ckpt", help="take the cap grid from this checkpoint")
    sw.add_argument("--repeats", type=int, default=evaluate.DEFAULT_REPEATS)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--out")
    _format_flag(sw)
    sw.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="build comparison tables from run/sweep outputs")
    rp.add_argument("inputs", nargs="*", help="summary.csv files or directories holding one")
    rp.add_argument("--out")
    _format_flag(rp)
    rp.set_defaults(func=cmd_report)

    pl = sub.add_parser("pipeline", help="collect, train, evaluate and report in one go")
    pl.add_argument("--profiles", help="profile file (default: builtin)")
    pl.add_argument("--episodes", type=int, default=DEFAULT_EPISODES)
    pl.add_argument("--repeats", type=int, default=evaluate.DEFAULT_REPEATS)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--out")
    _format_flag(pl)
    pl.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"powercql: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CoverageError, DataError) as exc:
        print(f"powercql: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingAborted, ControlError, nodesim.SimulationError) as exc:
        print(f"powercql: aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"powercql: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
