"""Pipeline stages and the data that flows between them.

Each stage is usable on its own (for tests) and as the body of a thread in
:func:`vscreen.pipeline.rank.run_rank`.
"""

from __future__ import annotations

import math
import queue
import threading
import time
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from enum import Enum

from ..dock.engine import dock_and_score
from ..dock.types import ScoringConfig
from ..molmodel.codec import (
    HEADER_SIZE,
    RecordError,
    TruncatedRecordError,
    decode_record,
    find_record_start,
    record_end,
)
from ..molmodel.types import Ligand, Pocket

DEFAULT_CHUNK_SIZE = 1 << 20
DEFAULT_BUFFER_SIZE = 4 << 20
DEFAULT_CHUNK_QUEUE = 8
DEFAULT_ITEM_QUEUE = 64

_POLL = 0.05


class PipelineAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class Chunk:
    data: bytes
    file_offset: int

    def __post_init__(self) -> None:
        if not self.data:
            raise ValueError("chunks are never empty")
        if self.file_offset < 0:
            raise ValueError("negative chunk offset")


@dataclass(frozen=True)
class WorkItem:
    ligand: Ligand
    sequence_id: int
    file_offset: int = -1


@dataclass(frozen=True)
class OutputRow:
    smiles: str
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score for {self.smiles!r}")

    def format(self) -> str:
        text = f"{self.score:.4f}"
        if text == "-0.0000":
            text = "0.0000"
        return f"{self.smiles}\t{text}\n"

    @classmethod
    def parse(cls, line: str) -> "OutputRow":
        smiles, score = line.rstrip("\n").split("\t")
        return cls(smiles, float(score))


class WorkerKind(str, Enum):
    FAST = "fast"
    SLOW = "slow"


@dataclass(frozen=True)
class WorkerClass:
    """A group of docker threads sharing one cost profile.

    ``synthetic_slowdown`` stretches each docking call to that multiple of
    its measured duration by sleeping afterwards; it stands in for a slower
    device and only changes timing.
    """

    kind: WorkerKind
    count: int
    synthetic_slowdown: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", WorkerKind(self.kind))
        if self.count < 0:
            raise ValueError("worker count must be >= 0")
        if not self.synthetic_slowdown >= 1.0:
            raise ValueError("slowdown must be >= 1")


def validate_workers(workers: Iterable[WorkerClass]) -> tuple[WorkerClass, ...]:
    workers = tuple(workers)
    if sum(w.count for w in workers) < 1:
        raise ValueError("at least one docker worker is required")
    return workers


class TrackedQueue(queue.Queue):
    """Bounded queue that remembers its largest observed size."""

    def __init__(self, maxsize: int) -> None:
        if maxsize < 1:
            raise ValueError("queue capacity must be >= 1")
        super().__init__(maxsize)
        self.high_water = 0

    def _put(self, item) -> None:
        super()._put(item)
        self.high_water = max(self.high_water, len(self.queue))


def put(q: queue.Queue, item, abort: threading.Event, stop: threading.Event | None = None) -> bool:
    """Blocking put that gives up when the pipeline aborts or ``stop`` is set."""
    while True:
        if abort.is_set():
            raise PipelineAborted
        if stop is not None and stop.is_set():
            return False
        try:
            q.put(item, timeout=_POLL)
            return True
        except queue.Full:
            continue


def get(q: queue.Queue, abort: threading.Event):
    while True:
        if abort.is_set():
            raise PipelineAborted
        try:
            return q.get(timeout=_POLL)
        except queue.Empty:
            continue


# -- reader ------------------------------------------------------------------------


@dataclass
class ReaderStats:
    chunks: int = 0
    bytes_read: int = 0
    busy: float = 0.0
    offsets: list[int] = field(default_factory=list)


def read_chunks(fh, slab_start: int, slab_stop: int, chunk_size: int, stop: threading.Event | None = None,
                stats: ReaderStats | None = None) -> Iterator[Chunk]:
    """Sequential chunks from ``slab_start`` until end of file or ``stop``.

    An empty slab yields nothing.  Reading continues past ``slab_stop``
    because the last owned record may end beyond it; the consumer sets
    ``stop`` once it has everything it needs.
    """
    if chunk_size < 1:
        raise ValueError("chunk size must be >= 1")
    stats = stats if stats is not None else ReaderStats()
    if slab_stop <= slab_start:
        return
    offset = slab_start
    fh.seek(offset)
    while stop is None or not stop.is_set():
        t0 = time.perf_counter()
        data = fh.read(chunk_size)
        stats.busy += time.perf_counter() - t0
        if not data:
            return
        stats.chunks += 1
        stats.bytes_read += len(data)
        stats.offsets.append(offset)
        yield Chunk(bytes(data), offset)
        offset += len(data)


# -- splitter ------------------------------------------------------------------------


@dataclass
class SplitterStats:
    items: int = 0
    skipped: int = 0
    busy: float = 0.0
    errors: list[str] = field(default_factory=list)


class Splitter:
    """Reassembles records from chunks and applies the slab ownership rule.

    Feed chunks in order with :meth:`feed` and call :meth:`finish` at end of
    data.  ``done`` turns true once the next record would start at or past
    ``slab_stop``.
    """

    def __init__(self, slab_start: int, slab_stop: int, stats: SplitterStats | None = None) -> None:
        self.slab_start = slab_start
        self.slab_stop = slab_stop
        self.stats = stats if stats is not None else SplitterStats()
        self.done = slab_stop <= slab_start
        self._buf = bytearray()
        self._base = slab_start  # file offset of _buf[0]
        self._pos: int | None = None  # file offset of next record start, once found
        self._seek_from = max(slab_start, HEADER_SIZE)  # where to look when _pos is None
        self._seq = 0

    def feed(self, chunk: Chunk) -> list[WorkItem]:
        if self.done:
            return []
        if chunk.file_offset != self._base + len(self._buf):
            raise ValueError(f"chunk at {chunk.file_offset} is not contiguous with {self._base + len(self._buf)}")
        self._buf += chunk.data
        return self._drain(eof=False)

    def finish(self) -> list[WorkItem]:
        if self.done:
            return []
        items = self._drain(eof=True)
        self.done = True
        return items

    def _rel(self, offset: int) -> int:
        return offset - self._base

    def _drain(self, eof: bool) -> list[WorkItem]:
        t0 = time.perf_counter()
        items: list[WorkItem] = []
        try:
            self._drain_into(items, eof)
        finally:
            self.stats.busy += time.perf_counter() - t0
        return items

    def _locate(self, eof: bool) -> bool:
        """Find the next record start at or after ``_seek_from``; False if more data is needed."""
        buf = bytes(self._buf)
        try:
            rel = find_record_start(buf, self._rel(self._seek_from), self._rel(self.slab_stop), eof=eof)
        except TruncatedRecordError:
            return False
        except RecordError as exc:
            # no recoverable record anywhere in the rest of the slab; after a
            # skip that record was already counted
            if self._seek_from == max(self.slab_start, HEADER_SIZE):
                self.stats.skipped += 1
                self.stats.errors.append(str(exc))
            rel = len(buf)
        self._pos = self._base + rel
        return True

    def _drain_into(self, items: list[WorkItem], eof: bool) -> None:
        while not self.done:
            if self._pos is None and not self._locate(eof):
                return
            if self._pos >= self.slab_stop:
                self.done = True
                return
            rel = self._rel(self._pos)
            if rel >= len(self._buf):
                if eof:
                    self.done = True
                return
            try:
                end = record_end(self._buf, rel)
            except TruncatedRecordError as exc:
                if not eof:
                    return
                self._skip(exc)
                continue
            except RecordError as exc:
                self._skip(exc)
                continue
            try:
                ligand, _ = decode_record(bytes(self._buf[rel:end]))
            except RecordError as exc:
                self._skip(exc)
            else:
                items.append(WorkItem(ligand, self._seq, self._pos))
                self._seq += 1
                self.stats.items += 1
            self._pos = self._base + end
            self._compact()

    def _skip(self, exc: Exception) -> None:
        """Count the record at ``_pos`` as corrupt and resynchronize after its first byte."""
        self.stats.skipped += 1
        self.stats.errors.append(f"offset {self._pos}: {exc}")
        self._seek_from = self._pos + 1
        self._pos = None

    def _compact(self) -> None:
        rel = self._rel(self._pos)
        if rel > (1 << 16) and rel > len(self._buf) // 2:
            del self._buf[:rel]
            self._base += rel


def split_chunks(chunks: Iterable[Chunk], slab_start: int, slab_stop: int, stats: SplitterStats | None = None) -> list[WorkItem]:
    splitter = Splitter(slab_start, slab_stop, stats)
    items: list[WorkItem] = []
    for chunk in chunks:
        items.extend(splitter.feed(chunk))
        if splitter.done:
            break
    items.extend(splitter.finish())
    return items


# -- docker ----------------------------------------------------------------------------


@dataclass
class WorkerStats:
    kind: WorkerKind
    items: int = 0
    failed: int = 0
    busy: float = 0.0
    dock_time: float = 0.0
    errors: list[str] = field(default_factory=list)


def dock_item(item: WorkItem, pocket: Pocket, scoring: ScoringConfig, worker: WorkerClass,
              stats: WorkerStats) -> OutputRow | None:
    """Dock one ligand; slow workers then idle to stretch the call to ``slowdown`` times its length.

    The stretch is based on the thread's CPU time, so time spent waiting for a
    shared core is not multiplied.
    """
    t0 = time.perf_counter()
    c0 = time.thread_time()
    try:
        result = dock_and_score(pocket, item.ligand, scoring)
        row = OutputRow(item.ligand.name, result.best_score)
    except Exception as exc:  # per-item failures are isolated
        stats.failed += 1
        stats.errors.append(f"{item.ligand.name}: {exc}")
        row = None
    elapsed = time.perf_counter() - t0
    stats.dock_time += elapsed
    if worker.synthetic_slowdown > 1.0:
        time.sleep((time.thread_time() - c0) * (worker.synthetic_slowdown - 1.0))
    stats.busy += time.perf_counter() - t0
    if row is not None:
        stats.items += 1
    return row


# -- writer ----------------------------------------------------------------------------


class RowWriter:
    """Coalescing text writer: the sink only sees ``buffer_size`` blocks plus a final tail."""

    def __init__(self, sink, buffer_size: int = DEFAULT_BUFFER_SIZE) -> None:
        if buffer_size < 1:
            raise ValueError("buffer size must be >= 1")
        self.sink = sink
        self.buffer_size = buffer_size
        self.write_calls = 0
        self.rows = 0
        self.bytes_written = 0
        self.busy = 0.0
        self._buf = bytearray()

    def write_row(self, row: OutputRow) -> None:
        t0 = time.perf_counter()
        self._buf += row.format().encode("utf-8")
        self.rows += 1
        while len(self._buf) >= self.buffer_size:
            self._emit(bytes(self._buf[: self.buffer_size]))
            del self._buf[: self.buffer_size]
        self.busy += time.perf_counter() - t0

    def close(self) -> None:
        t0 = time.perf_counter()
        if self._buf:
            self._emit(bytes(self._buf))
            self._buf.clear()
        self.busy += time.perf_counter() - t0

    def _emit(self, data: bytes) -> None:
        view = memoryview(data)
        while view:
            n = self.sink.write(view)
            if n is None:
                n = len(view)
            view = view[n:]
        self.write_calls += 1
        self.bytes_written += len(data)


def write_rows(rows: Iterable[OutputRow], sink, buffer_size: int = DEFAULT_BUFFER_SIZE) -> RowWriter:
    writer = RowWriter(sink, buffer_size)
    for row in rows:
        writer.write_row(row)
    writer.close()
    return writer


AfterItemHook = Callable[[OutputRow], None]
