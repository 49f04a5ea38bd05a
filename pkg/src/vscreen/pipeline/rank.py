"""One rank: the four-stage pipeline over a single slab, plus output merging."""

from __future__ import annotations

import os
import shutil
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from ..dock.types import ScoringConfig
from ..molmodel.codec import HEADER_SIZE, check_header
from ..molmodel.types import Pocket
from .slabs import RankPlan
from .stages import (
    DEFAULT_BUFFER_SIZE,
    DEFAULT_CHUNK_QUEUE,
    DEFAULT_CHUNK_SIZE,
    DEFAULT_ITEM_QUEUE,
    AfterItemHook,
    PipelineAborted,
    ReaderStats,
    RowWriter,
    Splitter,
    SplitterStats,
    TrackedQueue,
    WorkerClass,
    WorkerKind,
    WorkerStats,
    dock_item,
    get,
    put,
    read_chunks,
    validate_workers,
)

_DONE = None


@dataclass(frozen=True)
class PipelineConfig:
    workers: tuple[WorkerClass, ...] = (WorkerClass(WorkerKind.FAST, 1),)
    chunk_size: int = DEFAULT_CHUNK_SIZE
    chunk_queue: int = DEFAULT_CHUNK_QUEUE
    item_queue: int = DEFAULT_ITEM_QUEUE
    buffer_size: int = DEFAULT_BUFFER_SIZE
    scoring: ScoringConfig = field(default_factory=ScoringConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "workers", validate_workers(self.workers))
        for name in ("chunk_size", "chunk_queue", "item_queue", "buffer_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def n_workers(self) -> int:
        return sum(w.count for w in self.workers)


@dataclass
class RankStats:
    rank: int
    ligands_done: int = 0
    skipped_records: int = 0
    failed_items: int = 0
    wall_time: float = 0.0
    reader_busy: float = 0.0
    splitter_busy: float = 0.0
    docker_busy: float = 0.0
    writer_busy: float = 0.0
    chunks_read: int = 0
    bytes_read: int = 0
    write_calls: int = 0
    chunk_queue_high_water: int = 0
    item_queue_high_water: int = 0
    row_queue_high_water: int = 0
    worker_busy: list[float] = field(default_factory=list)
    worker_items: list[int] = field(default_factory=list)
    worker_kinds: list[str] = field(default_factory=list)
    read_offsets: list[int] = field(default_factory=list, repr=False)
    errors: list[str] = field(default_factory=list, repr=False)

    @property
    def n_workers(self) -> int:
        return len(self.worker_busy)

    def to_text(self) -> str:
        lines = [
            f"rank={self.rank}",
            f"ligands_done={self.ligands_done}",
            f"skipped_records={self.skipped_records}",
            f"failed_items={self.failed_items}",
            f"wall_time={self.wall_time:.6f}",
            f"reader_busy={self.reader_busy:.6f}",
            f"splitter_busy={self.splitter_busy:.6f}",
            f"docker_busy={self.docker_busy:.6f}",
            f"writer_busy={self.writer_busy:.6f}",
            f"workers={self.n_workers}",
            f"chunks_read={self.chunks_read}",
            f"bytes_read={self.bytes_read}",
            f"write_calls={self.write_calls}",
            f"chunk_queue_high_water={self.chunk_queue_high_water}",
            f"item_queue_high_water={self.item_queue_high_water}",
            f"row_queue_high_water={self.row_queue_high_water}",
        ]
        for i, (kind, busy, items) in enumerate(zip(self.worker_kinds, self.worker_busy, self.worker_items)):
            lines.append(f"worker{i}={kind} items={items} busy={busy:.6f}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text: str) -> dict[str, str]:
        out = {}
        for line in text.splitlines():
            if "=" in line:
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
        return out


def stats_path(output_path: Path) -> Path:
    return Path(str(output_path) + ".stats")


def run_rank(
    plan: RankPlan,
    pocket: Pocket,
    config: PipelineConfig | None = None,
    *,
    opener: Callable = open,
    sink_opener: Callable | None = None,
    after_item: AfterItemHook | None = None,
) -> RankStats:
    """Run reader, splitter, docker pool and writer over ``plan``'s slab.

    Output rows go to a temporary file that replaces ``plan.output_path``
    only after every stage finished, so an interrupted rank never leaves a
    partial output behind.  A ``.stats`` report is written next to it.

    ``opener`` and ``sink_opener`` exist for instrumentation; ``after_item``
    runs on the writer thread after each row is buffered.
    """
    config = config or PipelineConfig()
    stats = RankStats(plan.rank)
    t_start = time.perf_counter()

    abort = threading.Event()
    stop_reading = threading.Event()
    chunks = TrackedQueue(config.chunk_queue)
    items = TrackedQueue(config.item_queue)
    rows = TrackedQueue(config.item_queue)
    failures: list[BaseException] = []

    reader_stats = ReaderStats()
    splitter_stats = SplitterStats()
    worker_specs = [w for w in config.workers for _ in range(w.count)]
    worker_stats = [WorkerStats(w.kind) for w in worker_specs]

    plan.output_path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = plan.output_path.with_name(plan.output_path.name + f".tmp{os.getpid()}")
    sink_opener = sink_opener or (lambda p: open(p, "wb", buffering=0))

    with opener(plan.input_path, "rb") as fh:
        if plan.slab_start < HEADER_SIZE:
            check_header(fh.read(HEADER_SIZE))
        sink = sink_opener(tmp_path)
        writer = RowWriter(sink, config.buffer_size)

        def guarded(fn):
            def run():
                try:
                    fn()
                except PipelineAborted:
                    pass
                except BaseException as exc:  # surfaced by run_rank after join
                    failures.append(exc)
                    abort.set()

            return run

        def reader():
            for chunk in read_chunks(fh, plan.slab_start, plan.slab_stop, config.chunk_size, stop_reading, reader_stats):
                if not put(chunks, chunk, abort, stop_reading):
                    return
            put(chunks, _DONE, abort, stop_reading)

        def splitter():
            sp = Splitter(plan.slab_start, plan.slab_stop, splitter_stats)
            while not sp.done:
                chunk = get(chunks, abort)
                batch = sp.finish() if chunk is _DONE else sp.feed(chunk)
                for item in batch:
                    put(items, item, abort)
            stop_reading.set()
            for _ in worker_specs:
                put(items, _DONE, abort)

        def docker(spec: WorkerClass, wstats: WorkerStats):
            def run():
                while True:
                    item = get(items, abort)
                    if item is _DONE:
                        break
                    row = dock_item(item, pocket, config.scoring, spec, wstats)
                    if row is not None:
                        put(rows, row, abort)
                put(rows, _DONE, abort)

            return run

        def write():
            remaining = len(worker_specs)
            while remaining:
                row = get(rows, abort)
                if row is _DONE:
                    remaining -= 1
                    continue
                writer.write_row(row)
                if after_item is not None:
                    after_item(row)
            writer.close()

        threads = [
            threading.Thread(target=guarded(reader), name=f"reader{plan.rank}"),
            threading.Thread(target=guarded(splitter), name=f"splitter{plan.rank}"),
            threading.Thread(target=guarded(write), name=f"writer{plan.rank}"),
        ]
        threads += [
            threading.Thread(target=guarded(docker(spec, ws)), name=f"docker{plan.rank}.{i}")
            for i, (spec, ws) in enumerate(zip(worker_specs, worker_stats))
        ]
        try:
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        finally:
            sink.close()

    if failures:
        tmp_path.unlink(missing_ok=True)
        raise failures[0]
    os.replace(tmp_path, plan.output_path)

    stats.wall_time = time.perf_counter() - t_start
    stats.ligands_done = writer.rows
    stats.skipped_records = splitter_stats.skipped
    stats.failed_items = sum(w.failed for w in worker_stats)
    stats.reader_busy = reader_stats.busy
    stats.splitter_busy = splitter_stats.busy
    stats.docker_busy = sum(w.busy for w in worker_stats)
    stats.writer_busy = writer.busy
    stats.chunks_read = reader_stats.chunks
    stats.bytes_read = reader_stats.bytes_read
    stats.read_offsets = list(reader_stats.offsets)
    stats.write_calls = writer.write_calls
    stats.chunk_queue_high_water = chunks.high_water
    stats.item_queue_high_water = items.high_water
    stats.row_queue_high_water = rows.high_water
    stats.worker_busy = [w.busy for w in worker_stats]
    stats.worker_items = [w.items for w in worker_stats]
    stats.worker_kinds = [w.kind.value for w in worker_stats]
    stats.errors = splitter_stats.errors + [e for w in worker_stats for e in w.errors]
    stats_path(plan.output_path).write_text(stats.to_text())
    return stats


def merge_outputs(paths: Sequence[Path], dest: Path) -> Path:
    """Concatenate rank outputs in the given order into ``dest``."""
    paths = [Path(p) for p in paths]
    for p in paths:
        if not p.is_file():
            raise FileNotFoundError(f"missing rank output {p}")
    dest = Path(dest)
    tmp = dest.with_name(dest.name + ".tmp")
    with open(tmp, "wb") as out:
        for p in paths:
            with open(p, "rb") as fh:
                shutil.copyfileobj(fh, out)
    os.replace(tmp, dest)
    return dest
