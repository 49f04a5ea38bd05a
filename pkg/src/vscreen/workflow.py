"""Campaign orchestration: library prep, bucketing, docking jobs, merging and ranking."""

from __future__ import annotations

import logging
import os
import signal
import subprocess
import sys
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .dock.engine import dock_and_score
from .dock.pocket import read_pocket
from .dock.types import ScoringConfig
from .molmodel.codec import HEADER, HEADER_SIZE, check_header
from .molmodel.mol2 import write_mol2
from .molmodel.smiles import smiles_features
from .molmodel.types import Pocket
from .pipeline.rank import PipelineConfig, RankStats, merge_outputs, run_rank, stats_path
from .pipeline.slabs import RankPlan, plan_slabs
from .pipeline.stages import OutputRow, WorkerClass, WorkerKind
from .predictor import (
    MIN_LEAF,
    HoldoutReport,
    Sample,
    TimeTree,
    TrainingError,
    bucketize,
    load,
    measure_samples,
    predict_smiles,
    save,
    train,
    train_with_holdout,
)
from .prep import prepare_for_docking, prepare_record

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
RANKING_NAME = "ranking.tsv"
DEFAULT_FILE_SIZE = 64 << 20
DEFAULT_SLOWDOWN = 2.0
KILL_RANK_ENV = "VSCREEN_KILL_RANK"
KILL_AFTER_ENV = "VSCREEN_KILL_AFTER"


class InputError(Exception):
    """Bad or missing input; the CLI maps it to exit code 2."""


class JobFailed(RuntimeError):
    """A docking job finished with failed ranks; the CLI maps it to exit code 3."""


# -- library preparation ----------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    records: int
    bucket: int | None = None

    def format(self, base: Path | None = None) -> str:
        path = self.path.relative_to(base) if base is not None else self.path
        bucket = "none" if self.bucket is None else str(self.bucket)
        return f"{path} records={self.records} bucket={bucket}"

    @classmethod
    def parse(cls, line: str, base: Path | None = None) -> "ManifestEntry":
        try:
            path, records, bucket = line.rsplit(" ", 2)
            if not (records.startswith("records=") and bucket.startswith("bucket=")):
                raise ValueError
            bucket_text = bucket[len("bucket=") :]
            p = Path(path)
            if base is not None and not p.is_absolute():
                p = base / p
            return cls(p, int(records[len("records=") :]), None if bucket_text == "none" else int(bucket_text))
        except ValueError:
            raise InputError(f"bad manifest line {line!r}") from None


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    return [ManifestEntry.parse(ln, path.parent) for ln in lines if ln.strip()]


@dataclass(frozen=True)
class PrepReport:
    manifest_path: Path
    entries: tuple[ManifestEntry, ...]
    skipped: int = 0
    clamped: int = 0

    @property
    def records(self) -> int:
        return sum(e.records for e in self.entries)


def iter_smiles(path) -> Iterator[tuple[int, str]]:
    """``(line number, smiles)`` for every non-blank line; only the first column is used."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if fields:
                yield lineno, fields[0]


class _FileCutter:
    """Appends records to numbered library files, opening a new one at the size target."""

    def __init__(self, out_dir: Path, prefix: str, target: int, bucket: int | None) -> None:
        self.out_dir = out_dir
        self.prefix = prefix
        self.target = target
        self.bucket = bucket
        self.entries: list[ManifestEntry] = []
        self._fh = None
        self._size = 0
        self._count = 0

    def add(self, record: bytes) -> None:
        if HEADER_SIZE + len(record) > self.target:
            raise InputError(f"file size {self.target} cannot hold a {len(record)}-byte record")
        if self._fh is not None and self._size + len(record) > self.target:
            self._close_current()
        if self._fh is None:
            path = self.out_dir / f"{self.prefix}_{len(self.entries):04d}.xslb"
            self._fh = open(path, "wb")
            self._fh.write(HEADER)
            self._size = HEADER_SIZE
            self._count = 0
            self.entries.append(ManifestEntry(path, 0, self.bucket))
        self._fh.write(record)
        self._size += len(record)
        self._count += 1

    def _close_current(self) -> None:
        self._fh.close()
        self._fh = None
        self.entries[-1] = replace(self.entries[-1], records=self._count)

    def close(self) -> None:
        if self._fh is not None:
            self._close_current()


def cmd_prep(smiles_path, out_dir, target_file_size: int = DEFAULT_FILE_SIZE, tree_path=None, stem: str = "lib") -> PrepReport:
    """Prepare every SMILES line into binary library files listed in a manifest.

    With a time tree, ligands are routed to per-bucket files so each file
    holds ligands of one predicted 10 ms bucket.  Lines that fail to parse
    or prepare are logged and counted.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    if target_file_size <= HEADER_SIZE:
        raise InputError(f"file size must exceed the {HEADER_SIZE}-byte header")
    tree = _load_tree(tree_path) if tree_path is not None else None

    cutters: dict[int | None, _FileCutter] = {}
    skipped = clamped = 0
    try:
        for lineno, smiles in iter_smiles(smiles_path):
            try:
                record = prepare_record(smiles)
            except Exception as exc:  # malformed or unsupported input line
                log.warning("line %d: skipping %r: %s", lineno, smiles, exc)
                skipped += 1
                continue
            bucket = None
            if tree is not None:
                assignment = bucketize(predict_smiles(tree, smiles))
                clamped += assignment.clamped
                bucket = assignment.bucket_id
            if bucket not in cutters:
                prefix = stem if bucket is None else f"{stem}_b{bucket:03d}"
                cutters[bucket] = _FileCutter(out, prefix, target_file_size, bucket)
            cutters[bucket].add(record)
    finally:
        for cutter in cutters.values():
            cutter.close()

    order = sorted(cutters, key=lambda b: -1 if b is None else b)
    entries = tuple(e for b in order for e in cutters[b].entries)
    manifest = out / MANIFEST_NAME
    manifest.write_text("".join(e.format(out) + "\n" for e in entries))
    if skipped:
        log.warning("%d input lines skipped", skipped)
    return PrepReport(manifest, entries, skipped, clamped)


def _load_tree(path) -> TimeTree:
    try:
        return load(path)
    except OSError as exc:
        raise InputError(f"cannot read tree {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"bad tree file {path}: {exc}") from exc


# -- training ---------------------------------------------------------------------------------


def write_samples(path, rows: Iterable[tuple[str, float]]) -> None:
    Path(path).write_text("".join(f"{smiles}\t{ms!r}\n" for smiles, ms in rows))


def read_samples(path) -> list[tuple[str, Sample]]:
    """``smiles<TAB>time_ms`` lines to samples."""
    out = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read samples {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            smiles, ms = line.split("\t")
            out.append((smiles, Sample(smiles_features(smiles), float(ms))))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad sample line: {exc}") from exc
    return out


@dataclass(frozen=True)
class TrainReport:
    tree_path: Path
    n_samples: int
    holdout: HoldoutReport | None
    skipped: int = 0


def cmd_train(
    out_tree,
    *,
    samples_path=None,
    pocket_path=None,
    smiles_path=None,
    scoring: ScoringConfig | None = None,
    holdout: float = 0.2,
    seed: int = 0,
) -> TrainReport:
    """Train a time tree from recorded samples, or by measuring docking runs.

    Measured timings are also written to ``<out_tree>.samples.tsv`` so a
    later retrain can reproduce the same tree from them.
    """
    out_tree = Path(out_tree)
    skipped = 0
    if samples_path is not None:
        samples = [s for _, s in read_samples(samples_path)]
    else:
        if pocket_path is None or smiles_path is None:
            raise InputError("training needs either a samples file or a pocket and a SMILES library")
        pocket = load_pocket(pocket_path)
        ligands = []
        for lineno, smiles in iter_smiles(smiles_path):
            try:
                ligands.append(prepare_for_docking(smiles))
            except Exception as exc:
                log.warning("line %d: skipping %r: %s", lineno, smiles, exc)
                skipped += 1
        failed: set[int] = set()
        samples = measure_samples(pocket, ligands, scoring, on_error=lambda lig, exc: failed.add(id(lig)))
        skipped += len(failed)
        names = [lig.name for lig in ligands if id(lig) not in failed]
        write_samples(Path(str(out_tree) + ".samples.tsv"), zip(names, (s.time_ms for s in samples)))
    try:
        n_test = round(len(samples) * holdout)
        if n_test >= 1 and len(samples) - n_test >= MIN_LEAF:
            tree, report = train_with_holdout(samples, holdout, seed)
        else:
            tree, report = train(samples), None
    except TrainingError as exc:
        raise InputError(str(exc)) from exc
    out_tree.parent.mkdir(parents=True, exist_ok=True)
    save(tree, out_tree)
    return TrainReport(out_tree, len(samples), report, skipped)


# -- docking jobs -----------------------------------------------------------------------------


class JobStatus(str, Enum):
    PENDING = "pending"
    DONE = "done"
    FAILED = "failed"


@dataclass(frozen=True)
class JobSpec:
    """One library file docked against one pocket, split across ranks."""

    input_path: Path
    pocket_id: str
    plans: tuple[RankPlan, ...]
    status: JobStatus = JobStatus.PENDING
    failed_ranks: tuple[int, ...] = ()

    @property
    def name(self) -> str:
        return self.input_path.stem

    @property
    def outputs(self) -> tuple[Path, ...]:
        return tuple(p.output_path for p in self.plans)

    def to_text(self) -> str:
        lines = [
            f"input={self.input_path}",
            f"pocket={self.pocket_id}",
            f"ranks={len(self.plans)}",
            f"status={self.status.value}",
            "failed_ranks=" + ",".join(str(r) for r in self.failed_ranks),
        ]
        lines += [f"rank{p.rank}={p.slab_start},{p.slab_stop},{p.output_path.name}" for p in self.plans]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, out_dir: Path) -> "JobSpec":
        kv = RankStats.parse(text)
        try:
            n = int(kv["ranks"])
            plans = []
            for r in range(n):
                lo, hi, name = kv[f"rank{r}"].split(",", 2)
                plans.append(RankPlan(r, n, int(lo), int(hi), Path(kv["input"]), out_dir / name))
            failed = tuple(int(x) for x in kv["failed_ranks"].split(",") if x)
            return cls(Path(kv["input"]), kv["pocket"], tuple(plans), JobStatus(kv["status"]), failed)
        except (KeyError, ValueError) as exc:
            raise InputError(f"bad job file: {exc}") from exc


def job_path(out_dir, input_path) -> Path:
    return Path(out_dir) / f"{Path(input_path).stem}.job"


def load_pocket(path) -> Pocket:
    try:
        return read_pocket(path)
    except OSError as exc:
        raise InputError(f"cannot read pocket {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"bad pocket file {path}: {exc}") from exc


def workers_from_counts(fast: int, slow: int, slowdown: float = DEFAULT_SLOWDOWN) -> tuple[WorkerClass, ...]:
    workers = []
    if fast:
        workers.append(WorkerClass(WorkerKind.FAST, fast))
    if slow:
        workers.append(WorkerClass(WorkerKind.SLOW, slow, slowdown))
    return tuple(workers)


def pipeline_flags(config: PipelineConfig) -> list[str]:
    """CLI flags that rebuild ``config`` in a spawned rank process."""
    fast = sum(w.count for w in config.workers if w.kind is WorkerKind.FAST)
    slow = [w for w in config.workers if w.kind is WorkerKind.SLOW]
    slowdown = slow[0].synthetic_slowdown if slow else DEFAULT_SLOWDOWN
    if len({w.synthetic_slowdown for w in slow}) > 1:
        raise ValueError("spawned ranks support a single slowdown for all slow workers")
    s = config.scoring
    return [
        "--fast-workers", str(fast),
        "--slow-workers", str(sum(w.count for w in slow)),
        "--slowdown", repr(slowdown),
        "--buffer", str(config.buffer_size),
        "--chunk", str(config.chunk_size),
        "--queue", str(config.item_queue),
        "--restarts", str(s.restarts),
        "--rescored", str(s.rescored),
    ]


def _clean_partial(plan: RankPlan) -> None:
    for tmp in plan.output_path.parent.glob(plan.output_path.name + ".tmp*"):
        tmp.unlink(missing_ok=True)


def cmd_dock(
    input_path,
    pocket_path,
    out_dir,
    n_ranks: int = 1,
    config: PipelineConfig | None = None,
    spawn: bool = False,
) -> JobSpec:
    """Dock one library file against one pocket as a job of ``n_ranks`` ranks.

    Ranks run one after another in this process, or concurrently as
    spawned processes.  A failing rank marks the job failed and leaves
    every other rank's output in place; the job file records the outcome.
    """
    config = config or PipelineConfig()
    input_path = Path(input_path)
    out = Path(out_dir)
    if n_ranks < 1:
        raise InputError("need at least one rank")
    pocket = load_pocket(pocket_path)
    try:
        with open(input_path, "rb") as fh:
            check_header(fh.read(HEADER_SIZE))
        size = input_path.stat().st_size
    except OSError as exc:
        raise InputError(f"cannot read {input_path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{input_path} is not a ligand file: {exc}") from exc
    out.mkdir(parents=True, exist_ok=True)

    plans = tuple(plan_slabs(size, n_ranks, input_path.resolve(), out, stem=f"{input_path.stem}.r"))
    job = JobSpec(input_path.resolve(), pocket.id, plans)
    jpath = job_path(out, input_path)
    jpath.write_text(job.to_text())
    for plan in plans:
        plan.output_path.unlink(missing_ok=True)
        stats_path(plan.output_path).unlink(missing_ok=True)
        _clean_partial(plan)

    if spawn:
        failed = _run_spawned(plans, Path(pocket_path), config)
    else:
        failed = []
        for plan in plans:
            try:
                run_rank(plan, pocket, config)
            except Exception as exc:
                log.error("rank %d of %s failed: %s", plan.rank, input_path.name, exc)
                failed.append(plan.rank)
    for r in failed:
        _clean_partial(plans[r])
    job = replace(job, status=JobStatus.FAILED if failed else JobStatus.DONE, failed_ranks=tuple(failed))
    jpath.write_text(job.to_text())
    return job


def _run_spawned(plans: Sequence[RankPlan], pocket_path: Path, config: PipelineConfig) -> list[int]:
    flags = pipeline_flags(config)
    procs = []
    for plan in plans:
        cmd = [
            sys.executable, "-m", "vscreen", "run-rank",
            "--input", str(plan.input_path),
            "--pocket", str(pocket_path.resolve()),
            "--out", str(plan.output_path),
            "--rank", str(plan.rank),
            "--ranks", str(plan.n_ranks),
            "--slab-start", str(plan.slab_start),
            "--slab-stop", str(plan.slab_stop),
            *flags,
        ]
        procs.append((plan, subprocess.Popen(cmd)))
    failed = []
    for plan, proc in procs:
        code = proc.wait()
        if code != 0 or not plan.output_path.is_file():
            log.error("rank %d exited with code %d", plan.rank, code)
            failed.append(plan.rank)
    return failed


def fault_hook(rank: int):
    """After-item hook that SIGKILLs this process when the fault-injection variables select ``rank``."""
    target = os.environ.get(KILL_RANK_ENV)
    if target is None or int(target) != rank:
        return None
    limit = int(os.environ.get(KILL_AFTER_ENV, "1"))
    seen = [0]

    def hook(row: OutputRow) -> None:
        seen[0] += 1
        if seen[0] >= limit:
            os.kill(os.getpid(), signal.SIGKILL)

    return hook


def cmd_run_rank(plan: RankPlan, pocket_path, config: PipelineConfig) -> RankStats:
    """Body of one spawned rank process."""
    pocket = load_pocket(pocket_path)
    return run_rank(plan, pocket, config, after_item=fault_hook(plan.rank))


# -- merging and ranking ----------------------------------------------------------------------


class MissingOutputsError(InputError):
    def __init__(self, missing: Sequence[str]) -> None:
        super().__init__("incomplete jobs: " + ", ".join(missing))
        self.missing = tuple(missing)


def list_jobs(out_dir) -> list[JobSpec]:
    out = Path(out_dir)
    return [JobSpec.from_text(p.read_text(), out) for p in sorted(out.glob("*.job"))]


def ranking_key(line: str) -> tuple[float, str]:
    row = OutputRow.parse(line)
    return -row.score, row.smiles


def sort_ranking(lines: Iterable[str]) -> list[str]:
    """Descending score, ties broken by SMILES in lexicographic order."""
    return sorted(lines, key=ranking_key)


def cmd_merge(out_dir, dest=None) -> Path:
    """Merge every job's rank outputs in ``out_dir`` into one sorted ranking file.

    Raises:
        MissingOutputsError: a job is not done or one of its outputs is gone.
    """
    out = Path(out_dir)
    if not out.is_dir():
        raise InputError(f"{out} is not a directory")
    jobs = list_jobs(out)
    if not jobs:
        raise InputError(f"no jobs in {out}")
    missing = []
    for job in jobs:
        if job.status is not JobStatus.DONE:
            missing.append(f"{job.name} ({job.status.value})")
            continue
        missing += [f"{job.name} (missing {p.name})" for p in job.outputs if not p.is_file()]
    if missing:
        raise MissingOutputsError(missing)
    dest = Path(dest) if dest is not None else out / RANKING_NAME
    concat = merge_outputs([p for job in jobs for p in job.outputs], dest.with_name(dest.name + ".merged"))
    lines = sort_ranking(concat.read_text().splitlines(keepends=True))
    concat.unlink()
    tmp = dest.with_name(dest.name + ".tmp")
    tmp.write_text("".join(lines))
    os.replace(tmp, dest)
    return dest


def cmd_top(ranking, k: int) -> list[str]:
    if k < 0:
        raise ValueError("k must be >= 0")
    rows = []
    try:
        with open(ranking) as fh:
            for line in fh:
                if len(rows) >= k:
                    break
                rows.append(line.rstrip("\n"))
    except OSError as exc:
        raise InputError(f"cannot read ranking {ranking}: {exc}") from exc
    return rows


# -- regeneration -----------------------------------------------------------------------------


@dataclass(frozen=True)
class RegenResult:
    row: OutputRow
    mol2: str


def cmd_regen(smiles: str, pocket_path, out_path=None, scoring: ScoringConfig | None = None) -> RegenResult:
    """Rebuild the best pose of one ligand; its score equals the campaign's for the same inputs."""
    pocket = load_pocket(pocket_path)
    try:
        ligand = prepare_for_docking(smiles)
    except ValueError as exc:
        raise InputError(f"cannot prepare {smiles!r}: {exc}") from exc
    result = dock_and_score(pocket, ligand, scoring)
    mol2 = write_mol2(ligand.with_positions(result.best_pose.conformation))
    if out_path is not None:
        Path(out_path).write_text(mol2)
    return RegenResult(OutputRow(ligand.name, result.best_score), mol2)


# -- stats ------------------------------------------------------------------------------------


def cmd_stats(paths: Sequence) -> str:
    """Summarize rank ``.stats`` files, given directly or found in directories."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(p.glob("*.stats"))
        elif p.is_file():
            files.append(p)
        else:
            raise InputError(f"no such file or directory: {p}")
    if not files:
        raise InputError("no stats files found")
    totals = {"ligands_done": 0, "skipped_records": 0, "failed_items": 0}
    busy = {"reader_busy": 0.0, "splitter_busy": 0.0, "docker_busy": 0.0, "writer_busy": 0.0}
    lines = []
    wall = 0.0
    for f in files:
        kv = RankStats.parse(f.read_text())
        for key in totals:
            totals[key] += int(kv.get(key, 0))
        for key in busy:
            busy[key] += float(kv.get(key, 0.0))
        wall = max(wall, float(kv.get("wall_time", 0.0)))
        lines.append(
            f"{f.name}: ligands={kv.get('ligands_done')} skipped={kv.get('skipped_records')} "
            f"failed={kv.get('failed_items')} wall={float(kv.get('wall_time', 0.0)):.3f}s workers={kv.get('workers')}"
        )
    lines.append(f"files={len(files)} " + " ".join(f"{k}={v}" for k, v in totals.items()))
    lines.append(f"max_wall_time={wall:.3f} " + " ".join(f"{k}={v:.3f}" for k, v in busy.items()))
    return "\n".join(lines) + "\n"


# -- campaigns --------------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    libraries: tuple[Path, ...]
    pockets: tuple[Path, ...]
    out_dir: Path
    ranks: int = 1
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    file_size: int = DEFAULT_FILE_SIZE
    tree_path: Path | None = None
    spawn: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "libraries", tuple(Path(p) for p in self.libraries))
        object.__setattr__(self, "pockets", tuple(Path(p) for p in self.pockets))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if not self.libraries or not self.pockets:
            raise InputError("a campaign needs at least one library and one pocket")
        missing = [str(p) for p in (*self.libraries, *self.pockets) if not p.is_file()]
        if self.tree_path is not None and not Path(self.tree_path).is_file():
            missing.append(str(self.tree_path))
        if missing:
            raise InputError("missing inputs: " + ", ".join(missing))
        if self.ranks < 1:
            raise InputError("ranks must be >= 1")
        if self.file_size <= HEADER_SIZE:
            raise InputError(f"file size must exceed the {HEADER_SIZE}-byte header")


def run_campaign(config: CampaignConfig) -> list[Path]:
    """Prepare every library, then dock all files against each pocket in turn and rank.

    Returns one ranking path per pocket, under ``out_dir/<pocket file stem>/``.
    """
    entries: list[ManifestEntry] = []
    for i, lib in enumerate(config.libraries):
        report = cmd_prep(lib, config.out_dir / f"lib{i}", config.file_size, config.tree_path, stem=f"lib{i}")
        entries += report.entries
    rankings = []
    for pocket_path in config.pockets:
        pocket_dir = config.out_dir / pocket_path.stem
        failed = []
        for entry in entries:
            job = cmd_dock(entry.path, pocket_path, pocket_dir, config.ranks, config.pipeline, config.spawn)
            if job.status is not JobStatus.DONE:
                failed.append(job.name)
        if failed:
            raise JobFailed(f"pocket {pocket_path.stem}: failed jobs " + ", ".join(failed))
        rankings.append(cmd_merge(pocket_dir))
    return rankings


def load_config(path) -> dict[str, str]:
    """Flat ``key=value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InputError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("_", "-")] = value.strip()
    return out

