"""Reader, splitter, docker and writer stages, slab planning and merging."""

from __future__ import annotations

from .rank import PipelineConfig, RankStats, merge_outputs, run_rank, stats_path
from .slabs import RankPlan, plan_slabs, slab_bounds
from .stages import (
    DEFAULT_BUFFER_SIZE,
    DEFAULT_CHUNK_QUEUE,
    DEFAULT_CHUNK_SIZE,
    DEFAULT_ITEM_QUEUE,
    Chunk,
    OutputRow,
    PipelineAborted,
    ReaderStats,
    RowWriter,
    Splitter,
    SplitterStats,
    TrackedQueue,
    WorkerClass,
    WorkerKind,
    WorkerStats,
    WorkItem,
    dock_item,
    read_chunks,
    split_chunks,
    write_rows,
)

__all__ = [
    "DEFAULT_BUFFER_SIZE",
    "DEFAULT_CHUNK_QUEUE",
    "DEFAULT_CHUNK_SIZE",
    "DEFAULT_ITEM_QUEUE",
    "Chunk",
    "OutputRow",
    "PipelineAborted",
    "PipelineConfig",
    "RankPlan",
    "RankStats",
    "ReaderStats",
    "RowWriter",
    "Splitter",
    "SplitterStats",
    "TrackedQueue",
    "WorkItem",
    "WorkerClass",
    "WorkerKind",
    "WorkerStats",
    "dock_item",
    "merge_outputs",
    "plan_slabs",
    "read_chunks",
    "run_rank",
    "slab_bounds",
    "split_chunks",
    "stats_path",
    "write_rows",
]
