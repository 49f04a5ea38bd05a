from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class RankPlan:
    """Byte range of the input owned by one rank.

    The rank handles every record whose first byte lies in
    ``[slab_start, slab_stop)``, reading past ``slab_stop`` to finish the last.
    """

    rank: int
    n_ranks: int
    slab_start: int
    slab_stop: int
    input_path: Path
    output_path: Path

    def __post_init__(self) -> None:
        if not 0 <= self.rank < self.n_ranks:
            raise ValueError(f"rank {self.rank} out of range for {self.n_ranks} ranks")
        if not 0 <= self.slab_start <= self.slab_stop:
            raise ValueError(f"invalid slab [{self.slab_start}, {self.slab_stop})")
        object.__setattr__(self, "input_path", Path(self.input_path))
        object.__setattr__(self, "output_path", Path(self.output_path))


def slab_bounds(file_size: int, n_ranks: int) -> list[tuple[int, int]]:
    """Even split: rank ``i`` gets ``[floor(i*S/R), floor((i+1)*S/R))``."""
    if n_ranks < 1:
        raise ValueError("need at least one rank")
    if file_size < 0:
        raise ValueError("file size must be non-negative")
    return [(i * file_size // n_ranks, (i + 1) * file_size // n_ranks) for i in range(n_ranks)]


def plan_slabs(file_size: int, n_ranks: int, input_path="", output_dir=".", stem: str = "rank") -> list[RankPlan]:
    out = Path(output_dir)
    return [
        RankPlan(i, n_ranks, lo, hi, Path(input_path), out / f"{stem}{i}.tsv")
        for i, (lo, hi) in enumerate(slab_bounds(file_size, n_ranks))
    ]
