"""``expplan`` command line: train, bench, transfer, kfold and retrieval-scaling.

Any flag can also come from a JSON file passed with ``--config``; keys are
flag names with dashes replaced by underscores. Flags given on the command
line win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as B
from .experience_db import ExperienceDatabase, db_load, db_save
from .pipeline import make_strategy
from .robot import load_chain
from .scenes import FAMILIES, SceneGenerationError, SceneFormatError


class CLIError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser, family: str = "small_shelf", task: str = "pick") -> None:
    p.add_argument("--family", default=family, choices=sorted(FAMILIES))
    p.add_argument("--variation", default="X,Y,Z,yaw",
                   help='comma-separated subset of X,Y,Z,yaw; "" or "none" for the nominal scene')
    p.add_argument("--task", default=task, choices=("pick", "place"))
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--timeout", type=float, default=B.DEFAULT_TIMEOUT, help="seconds per planning query")
    p.add_argument("--chain", default="arm8", help="builtin chain name or chain JSON file")
    p.add_argument("--quiet", action="store_true")


def _add_eval(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frameworks", default="uniform,spark",
                   help="comma-separated subset of uniform,spark,flame")
    p.add_argument("--db", action="append", default=[], metavar="PATH",
                   help="experience database; repeat for several frameworks")
    p.add_argument("--trials", type=int, default=B.DEFAULT_TEST_COUNT)
    p.add_argument("--lam", type=float, default=None, help="uniform mixing weight (default 0.5)")
    p.add_argument("--out", required=True, help="trial CSV; aggregates go to <stem>.summary.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expplan", description=__doc__.splitlines()[0].replace("``", ""))
    parser.add_argument("--config", help="JSON file supplying default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="online-incremental training into a database file")
    p.add_argument("--framework", required=True, choices=("spark", "flame"))
    p.add_argument("--count", type=int, default=B.DEFAULT_TRAIN_COUNT)
    p.add_argument("--db", required=True, metavar="PATH",
                   help="database file; training continues from it if it exists")
    p.add_argument("--fresh", action="store_true", help="ignore an existing database file")
    p.add_argument("--log", default=None, help="training log CSV (default <db stem>.train.csv)")
    _add_common(p)

    p = sub.add_parser("bench", help="paired evaluation of frameworks on one scene family")
    _add_common(p)
    _add_eval(p)

    p = sub.add_parser("transfer", help="evaluate databases on a task kind they were not trained on")
    _add_common(p, family="large_shelf", task="place")
    _add_eval(p)

    p = sub.add_parser("kfold", help="k-fold train/test split over the training stream")
    p.add_argument("--framework", required=True, choices=("spark", "flame"))
    p.add_argument("--count", type=int, default=B.DEFAULT_TRAIN_COUNT)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("retrieval-scaling", help="index vs linear-scan retrieval time per database size")
    p.add_argument("--framework", default="spark", choices=("spark", "flame"))
    p.add_argument("--db-sizes", default="0,100,1000,10000")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = json.loads(Path(known.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read config {known.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise CLIError("config file must hold a JSON object")
        choices = parser._subparsers._group_actions[0].choices
        command = next((a for a in argv if a in choices), None)
        if command is None:
            return parser.parse_args(argv)
        sub = choices[command]
        valid = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - valid)
        if unknown:
            raise CLIError(f"unknown config keys for {command}: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        # required flags may now come from the file
        for action in sub._actions:
            if action.dest in cfg:
                action.required = False
    return parser.parse_args(argv)


def _say(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg, flush=True)


def _variation(text: str):
    return () if text in ("", "none", None) else text


def _load_dbs(paths, chain_dof: int) -> dict:
    dbs = {}
    for path in paths:
        db = db_load(path)
        if db.dof != chain_dof:
            raise CLIError(f"{path}: database has {db.dof} joints, chain has {chain_dof}")
        if db.framework in dbs:
            raise CLIError(f"two {db.framework} databases given")
        dbs[db.framework] = db
    return dbs


def _frameworks(args, chain) -> dict:
    names = [n.strip() for n in args.frameworks.split(",") if n.strip()]
    bad = sorted(set(names) - {"uniform", "spark", "flame"})
    if bad or not names:
        raise CLIError(f"unknown frameworks: {', '.join(bad) or '(none)'}")
    dbs = _load_dbs(args.db, chain.dof)
    out = {}
    for n in names:
        if n == "uniform":
            out[n] = None
        elif n not in dbs:
            raise CLIError(f"framework {n} needs a database (--db)")
        else:
            out[n] = dbs[n]
    return out


def _print_summary(args, rows) -> None:
    for s in B.summarize(rows):
        _say(args, f"{s.tag:6s} {s.framework:8s} n={s.trials:3d} train={s.train_size:4d} "
                   f"success={s.success_rate:.2f} mean={s.mean_total:.3f}s median={s.median_total:.3f}s "
                   f"std={s.std_total:.3f}s")


def cmd_train(args) -> None:
    chain = load_chain(args.chain)
    path = Path(args.db)
    if path.exists() and not args.fresh:
        db = db_load(path)
        if db.framework != args.framework:
            raise CLIError(f"{path} holds a {db.framework} database, --framework is {args.framework}")
        if db.dof != chain.dof:
            raise CLIError(f"{path}: database has {db.dof} joints, chain has {chain.dof}")
    else:
        db = make_strategy(args.framework).new_database(chain.dof)
    start = db.trained_problems

    def log(rec):
        _say(args, f"problem {rec.problem}: {rec.outcome} in {rec.solve_time:.2f}s, db size {rec.db_size}")

    records = B.train(db, args.family, _variation(args.variation), args.count, args.seed, args.task,
                      args.timeout, chain, log=log)
    db_save(db, path)
    log_path = Path(args.log) if args.log else path.with_name(path.stem + ".train.csv")
    B.write_train_log(log_path, records)
    _say(args, f"trained problems {start}..{db.trained_problems - 1}; {len(db)} entries written to {path}")


def cmd_bench(args, transfer: bool = False) -> None:
    chain = load_chain(args.chain)
    fws = _frameworks(args, chain)

    def log(row):
        _say(args, f"trial {row.trial} {row.framework}: {row.outcome} in {row.total_time:.2f}s")

    run = B.transfer if transfer else B.bench
    rows = run(fws, args.family, _variation(args.variation), args.trials, args.seed, args.task,
               args.timeout, chain, lam=args.lam, log=log)
    if args.trials > 0 and not rows:
        raise CLIError(f"no {args.task} problem could be generated for {args.family} "
                       f"with variation {args.variation!r}")
    B.write_report(args.out, rows)
    _print_summary(args, rows)


def cmd_kfold(args) -> None:
    chain = load_chain(args.chain)

    def log(row):
        _say(args, f"{row.tag} trial {row.trial} {row.framework}: {row.outcome} in {row.total_time:.2f}s")

    rows = B.kfold(args.framework, args.family, _variation(args.variation), args.count, args.folds,
                   args.seed, args.task, args.timeout, chain, log=log)
    B.write_report(args.out, rows)
    _print_summary(args, rows)


def cmd_scaling(args) -> None:
    try:
        sizes = [int(s) for s in str(args.db_sizes).split(",") if s.strip()]
    except ValueError as exc:
        raise CLIError(f"bad --db-sizes {args.db_sizes!r}") from exc
    if any(s < 0 for s in sizes):
        raise CLIError("database sizes must be non-negative")
    rows = B.retrieval_scaling(sizes, args.queries, args.framework, args.seed, args.radius)
    B.write_scaling(args.out, rows)
    for r in rows:
        print(f"size {r.size:6d}: index {r.index_time * 1e3:.3f} ms, linear {r.linear_time * 1e3:.3f} ms, "
              f"ratio {r.ratio:.3f}, equal={r.equal}", flush=True)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        {"train": cmd_train, "bench": cmd_bench, "transfer": lambda a: cmd_bench(a, transfer=True),
         "kfold": cmd_kfold, "retrieval-scaling": cmd_scaling}[args.command](args)
    except (CLIError, ValueError, OSError, SceneGenerationError, SceneFormatError) as exc:
        print(f"expplan: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
