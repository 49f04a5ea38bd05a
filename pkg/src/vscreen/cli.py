"""``vscreen`` command line: prep, train, dock, merge, top, regen, stats, campaign and synth."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .dock.pocket import write_pocket
from .dock.types import ScoringConfig
from .molmodel.codec import MAGIC
from .pipeline.rank import PipelineConfig
from .pipeline.slabs import RankPlan
from .predictor import TrainingError, TreeFormatError
from .workflow import (
    DEFAULT_FILE_SIZE,
    DEFAULT_SLOWDOWN,
    CampaignConfig,
    InputError,
    JobFailed,
    JobStatus,
    cmd_dock,
    cmd_merge,
    cmd_prep,
    cmd_regen,
    cmd_run_rank,
    cmd_stats,
    cmd_top,
    cmd_train,
    load_config,
    read_manifest,
    run_campaign,
    workers_from_counts,
    write_samples,
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("vscreen")

DEFAULTS = {
    "ranks": 1,
    "fast_workers": 1,
    "slow_workers": 0,
    "slowdown": DEFAULT_SLOWDOWN,
    "file_size": DEFAULT_FILE_SIZE,
    "buffer": 4 << 20,
    "chunk": 1 << 20,
    "queue": 64,
    "spawn_processes": False,
    "restarts": ScoringConfig.restarts,
    "rescored": ScoringConfig.rescored,
    "holdout": 0.2,
    "seed": 0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _flag_on() -> dict:
    return {"action": "store_const", "const": True, "default": None}


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ranks", type=int, help="ranks per job")
    p.add_argument("--fast-workers", type=int, help="fast docker threads per rank")
    p.add_argument("--slow-workers", type=int, help="slow docker threads per rank")
    p.add_argument("--slowdown", type=float, help="cost multiple of a slow worker")
    p.add_argument("--buffer", type=int, help="writer buffer in bytes")
    p.add_argument("--chunk", type=int, help="reader chunk in bytes")
    p.add_argument("--queue", type=int, help="work item queue capacity")
    p.add_argument("--spawn-processes", **_flag_on(), help="run ranks as separate processes")
    _add_scoring_flags(p)


def _add_scoring_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int, help="search restarts per ligand")
    p.add_argument("--rescored", type=int, help="cluster leaders rescored per ligand")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vscreen", description=__doc__)
    parser.add_argument("--config", type=Path, help="key=value file; flags override it")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser, metavar="{prep,train,dock,merge,top,regen,stats,campaign,synth}"
    )

    p = sub.add_parser("prep", help="SMILES library to binary ligand files")
    p.add_argument("--input", type=Path, required=True, help="SMILES file, one ligand per line")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--file-size", type=int, help="target size of each binary file")
    p.add_argument("--tree", type=Path, help="time tree for bucketed output")

    p = sub.add_parser("train", help="fit the docking-time tree")
    p.add_argument("--out", type=Path, required=True, help="tree file to write")
    p.add_argument("--samples", type=Path, help="smiles<TAB>time_ms training file")
    p.add_argument("--input", type=Path, help="SMILES to measure instead")
    p.add_argument("--pocket", type=Path, help="pocket to measure against")
    p.add_argument("--holdout", type=float, help="held-out fraction")
    p.add_argument("--seed", type=int, help="holdout shuffle seed")
    _add_scoring_flags(p)

    p = sub.add_parser("dock", help="dock a binary file (or every file of a manifest) against one pocket")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--pocket", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="job output directory")
    _add_pipeline_flags(p)

    p = sub.add_parser("merge", help="merge finished jobs into a sorted ranking")
    p.add_argument("--out", type=Path, required=True, help="job output directory")
    p.add_argument("--ranking", type=Path, help="ranking path (default <out>/ranking.tsv)")

    p = sub.add_parser("top", help="first k rows of a ranking")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("-k", type=int, default=10)

    p = sub.add_parser("regen", help="rebuild one ligand's best pose as Mol2")
    p.add_argument("--input", required=True, help="SMILES string")
    p.add_argument("--pocket", type=Path, required=True)
    p.add_argument("--out", type=Path, help="Mol2 path (default stdout)")
    _add_scoring_flags(p)

    p = sub.add_parser("stats", help="summarize rank stats files")
    p.add_argument("--input", type=Path, nargs="+", required=True, help="stats files or directories")

    p = sub.add_parser("campaign", help="prep, dock and rank libraries against pockets")
    p.add_argument("--input", type=Path, action="append", required=True)
    p.add_argument("--pocket", type=Path, action="append", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--file-size", type=int)
    p.add_argument("--tree", type=Path)
    _add_pipeline_flags(p)

    p = sub.add_parser("synth", help="write generated inputs")
    p.add_argument("kind", choices=("library", "pocket", "timings"))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("-n", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-heavy", type=int, default=8)
    p.add_argument("--max-heavy", type=int, default=30)

    p = sub.add_parser("run-rank")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--pocket", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--slab-start", type=int, required=True)
    p.add_argument("--slab-stop", type=int, required=True)
    _add_pipeline_flags(p)
    # keep the internal subcommand out of the help listing
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "run-rank"]
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def resolve_options(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from defaults; explicit flags win."""
    if args.config is not None:
        actions = {a.dest: a for a in _subparser(parser, args.command)._actions}
        for key, text in load_config(args.config).items():
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None or getattr(args, dest, None) is not None:
                continue
            if isinstance(action, argparse._StoreConstAction):
                value = text.lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):
                value = [(action.type or str)(v) for v in text.split(",")]
            else:
                try:
                    value = (action.type or str)(text)
                except ValueError as exc:
                    raise InputError(f"config key {key}: {exc}") from exc
            setattr(args, dest, value)
    for dest, value in DEFAULTS.items():
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _scoring(args) -> ScoringConfig:
    return ScoringConfig(restarts=args.restarts, rescored=args.rescored)


def _pipeline(args) -> PipelineConfig:
    try:
        return PipelineConfig(
            workers=workers_from_counts(args.fast_workers, args.slow_workers, args.slowdown),
            chunk_size=args.chunk,
            item_queue=args.queue,
            buffer_size=args.buffer,
            scoring=_scoring(args),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _is_ligand_file(path: Path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(len(MAGIC)) == MAGIC
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def run(args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == "prep":
        report = cmd_prep(args.input, args.out, args.file_size, args.tree)
        print(f"files={len(report.entries)} records={report.records} skipped={report.skipped} "
              f"clamped={report.clamped} manifest={report.manifest_path}")
    elif cmd == "train":
        report = cmd_train(args.out, samples_path=args.samples, pocket_path=args.pocket, smiles_path=args.input,
                           scoring=_scoring(args), holdout=args.holdout, seed=args.seed)
        h = report.holdout
        metrics = "holdout=none" if h is None else (
            f"holdout_r2={h.r2:.4f} holdout_mean_error_ms={h.mean_error:.4f} holdout_error_std_ms={h.error_std:.4f}")
        print(f"tree={report.tree_path} samples={report.n_samples} skipped={report.skipped} {metrics}")
    elif cmd == "dock":
        config = _pipeline(args)
        inputs = [args.input] if _is_ligand_file(args.input) else [e.path for e in read_manifest(args.input)]
        failed = []
        for path in inputs:
            job = cmd_dock(path, args.pocket, args.out, args.ranks, config, args.spawn_processes)
            print(f"job={job.name} status={job.status.value} ranks={len(job.plans)}")
            if job.status is not JobStatus.DONE:
                failed.append(f"{job.name} (ranks {','.join(map(str, job.failed_ranks))})")
        if failed:
            raise JobFailed("failed jobs: " + "; ".join(failed))
    elif cmd == "merge":
        print(cmd_merge(args.out, args.ranking))
    elif cmd == "top":
        if args.k < 0:
            raise UsageError("-k must be >= 0")
        for row in cmd_top(args.input, args.k):
            print(row)
    elif cmd == "regen":
        result = cmd_regen(args.input, args.pocket, args.out, _scoring(args))
        if args.out is None:
            sys.stdout.write(result.mol2)
        else:
            sys.stdout.write(result.row.format())
    elif cmd == "stats":
        sys.stdout.write(cmd_stats(args.input))
    elif cmd == "campaign":
        config = CampaignConfig(args.input, args.pocket, args.out, args.ranks, _pipeline(args), args.file_size,
                                args.tree, args.spawn_processes)
        for path in run_campaign(config):
            print(path)
    elif cmd == "synth":
        _synth(args)
    elif cmd == "run-rank":
        plan = RankPlan(args.rank, args.ranks, args.slab_start, args.slab_stop, args.input, args.out)
        cmd_run_rank(plan, args.pocket, _pipeline(args))
    return EXIT_OK


def _synth(args) -> None:
    from . import synth

    if args.kind == "library":
        lib = synth.generate_library(args.n, args.seed, args.min_heavy, args.max_heavy)
        args.out.write_text("".join(s + "\n" for s in lib))
    elif args.kind == "pocket":
        write_pocket(args.out, synth.synthetic_pocket(args.seed))
    else:
        lib, _, times = synth.synthetic_timings(args.n, args.seed)
        write_samples(args.out, zip(lib, times.tolist()))
    print(args.out)


_INPUT_ERRORS = (InputError, OSError, TrainingError, TreeFormatError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        resolve_options(parser, args)
        return run(args)
    except UsageError as exc:
        print(f"vscreen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INPUT_ERRORS as exc:
        print(f"vscreen: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"vscreen: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
