from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry.transforms import RigidTransform


@dataclass(frozen=True)
class ScoringConfig:
    """Search and selection knobs; defaults reproduce the production setup."""

    restarts: int = 256
    rescored: int = 30
    rmsd_threshold: float = 3.0
    step_translation: float = 1.0
    step_rotation: float = math.radians(20.0)
    step_torsion: float = math.radians(20.0)
    min_step_translation: float = 0.1
    max_iterations: int = 200
    flatten_sweeps: int = 20

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.rescored < 1:
            raise ValueError("rescored must be >= 1")
        if not self.rmsd_threshold > 0:
            raise ValueError("rmsd_threshold must be positive")
        if not (self.step_translation > 0 and self.min_step_translation > 0):
            raise ValueError("translation steps must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True, eq=False)
class Pose:
    """One placement: torsions applied to the base conformation, then ``transform``.

    ``restart`` is the index of the initial pose this one descends from and
    breaks ties when poses are ranked.
    """

    transform: RigidTransform
    torsion_angles: tuple[float, ...]
    conformation: np.ndarray
    geo_score: float
    chem_score: float | None = None
    restart: int = 0

    def __post_init__(self) -> None:
        conf = np.array(self.conformation, dtype=np.float64)
        conf.setflags(write=False)
        object.__setattr__(self, "conformation", conf)
        object.__setattr__(self, "torsion_angles", tuple(float(a) for a in self.torsion_angles))
        if not math.isfinite(self.geo_score):
            raise ValueError("geo_score must be finite")

    def with_chem_score(self, value: float) -> "Pose":
        return Pose(self.transform, self.torsion_angles, self.conformation, self.geo_score, value, self.restart)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return (
            self.transform == other.transform
            and self.torsion_angles == other.torsion_angles
            and np.array_equal(self.conformation, other.conformation)
            and self.geo_score == other.geo_score
            and self.chem_score == other.chem_score
            and self.restart == other.restart
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class DockResult:
    smiles: str
    best_score: float
    best_pose: Pose
    poses_evaluated: int
    scoring_evals: int
    rescored: tuple[Pose, ...] = field(default=(), repr=False)
