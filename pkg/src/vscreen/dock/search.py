"""Flattening, restart generation, local search and pose clustering."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import _kernels
from ..geometry.transforms import RigidTransform
from ..molmodel.types import Ligand, Pocket
from .types import Pose, ScoringConfig

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True, eq=False)
class Kinematics:
    """Kernel-ready view of a ligand's torsion tree over a subset of atoms."""

    base: np.ndarray
    ridx: np.ndarray
    rptr: np.ndarray
    axes: np.ndarray

    @classmethod
    def build(cls, ligand: Ligand, base, atoms: np.ndarray | None = None) -> "Kinematics":
        base = np.asarray(base, dtype=np.float64)
        if atoms is None:
            atoms = np.arange(ligand.n_atoms)
        remap = np.full(ligand.n_atoms, -1, dtype=np.int64)
        remap[atoms] = np.arange(len(atoms))
        ridx: list[int] = []
        rptr = [0]
        axes = []
        for torsion in ligand.torsions:
            a, b = torsion.axis
            if remap[a] < 0 or remap[b] < 0:
                raise ValueError("torsion axis atoms must be in the atom subset")
            ridx.extend(sorted(int(remap[i]) for i in torsion.right_set if remap[i] >= 0))
            rptr.append(len(ridx))
            axes.append((remap[a], remap[b]))
        return cls(
            np.ascontiguousarray(base[atoms]),
            np.asarray(ridx, dtype=np.int64),
            np.asarray(rptr, dtype=np.int64),
            np.asarray(axes, dtype=np.int64).reshape(-1, 2),
        )

    def torsion_conformation(self, angles) -> np.ndarray:
        out = np.empty_like(self.base)
        _kernels.torsion_conformation(self.base, self.ridx, self.rptr, self.axes, _angles(angles), out)
        return out

    def materialize(self, angles, transform: RigidTransform) -> np.ndarray:
        return _kernels.materialize(
            self.base,
            self.ridx,
            self.rptr,
            self.axes,
            _angles(angles),
            np.asarray(transform.rotation, dtype=np.float64),
            np.asarray(transform.translation, dtype=np.float64),
        )


def _angles(angles) -> np.ndarray:
    return np.ascontiguousarray(angles, dtype=np.float64).reshape(-1)


def materialize(ligand: Ligand, angles, transform: RigidTransform) -> np.ndarray:
    """Full conformation for ``angles`` then ``transform``, bit-identical to the search's own."""
    return Kinematics.build(ligand, ligand.coords).materialize(angles, transform)


def heavy_centroid(ligand: Ligand, conf) -> np.ndarray:
    heavy = np.asarray(conf, dtype=np.float64)[ligand.heavy_mask]
    return heavy.sum(axis=0) / len(heavy)


def flatten(ligand: Ligand, conf=None, max_sweeps: int = 20) -> tuple[np.ndarray, tuple[float, ...]]:
    """Unfold the ligand by maximizing the sum of internal distances.

    Coordinate ascent over 10-degree steps per torsion, swept in index
    order until a sweep changes nothing.  Returns the flattened
    conformation and the absolute torsion angles that produce it from
    ``conf``.
    """
    base = ligand.coords if conf is None else np.asarray(conf, dtype=np.float64)
    if ligand.n_torsions == 0:
        return np.array(base, dtype=np.float64), ()
    kin = Kinematics.build(ligand, base)
    steps = _kernels.flatten_steps(kin.base, kin.ridx, kin.rptr, kin.axes, max_sweeps)
    angles = steps * _kernels.FLATTEN_STEP
    return kin.torsion_conformation(angles), tuple(float(a) for a in angles)


@lru_cache(maxsize=16)
def _fibonacci_axes(k: int) -> np.ndarray:
    i = np.arange(k, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / k
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    axes = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    axes.setflags(write=False)
    return axes


@lru_cache(maxsize=16)
def _fibonacci_quaternions(k: int) -> np.ndarray:
    i = np.arange(k, dtype=np.float64)
    angle = 2.0 * math.pi * np.mod(i * GOLDEN_RATIO, 1.0)
    q = np.concatenate([np.cos(angle / 2)[:, None], np.sin(angle / 2)[:, None] * _fibonacci_axes(k)], axis=1)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q.setflags(write=False)
    return q


def fibonacci_axes(k: int) -> np.ndarray:
    """Unit rotation axes of the ``k``-orientation restart set."""
    return _fibonacci_axes(k).copy()


def fibonacci_rotations(k: int) -> list[RigidTransform]:
    return [RigidTransform(tuple(q)) for q in _fibonacci_quaternions(k)]


def initial_poses(ligand: Ligand, flat_conf, pocket: Pocket, k: int, angles: Sequence[float] | None = None) -> list[Pose]:
    """``k`` seed-free starting poses centred on the pocket.

    ``flat_conf`` is the flattened conformation, produced from the ligand's
    base coordinates by ``angles``; each pose keeps those torsion angles.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    angles = tuple(angles) if angles is not None else (0.0,) * ligand.n_torsions
    if len(angles) != ligand.n_torsions:
        raise ValueError(f"{ligand.n_torsions} torsions but {len(angles)} angles")
    kin = Kinematics.build(ligand, ligand.coords)
    Q, T = start_transforms(ligand, flat_conf, pocket, k)
    A = np.tile(_angles(angles), (k, 1))
    confs = _kernels.materialize_batch(kin.base, kin.ridx, kin.rptr, kin.axes, A, Q, T)
    return [
        Pose(RigidTransform(tuple(Q[i]), tuple(T[i])), angles, confs[i], _geo(pocket, ligand, confs[i]), None, i)
        for i in range(k)
    ]


def start_transforms(ligand: Ligand, flat_conf, pocket: Pocket, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Quaternions and translations of the ``k`` restarts as ``(k, 4)`` and ``(k, 3)`` arrays.

    Rotation ``i`` is the ``i``-th Fibonacci orientation; the translation
    puts the heavy-atom centroid of ``flat_conf`` on the pocket center.
    """
    Q = np.ascontiguousarray(_fibonacci_quaternions(k))
    cen = heavy_centroid(ligand, flat_conf)
    return Q, _kernels.start_translations(Q, cen, np.asarray(pocket.center, dtype=np.float64))


def _geo(pocket: Pocket, ligand: Ligand, conf: np.ndarray) -> float:
    heavy = np.ascontiguousarray(conf[ligand.heavy_mask])
    return float(_kernels.grid_score(pocket.values, np.asarray(pocket.origin, dtype=np.float64), float(pocket.spacing), heavy))


@dataclass(frozen=True)
class SearchOutcome:
    pose: Pose
    iterations: int
    evaluations: int


class Searcher:
    """Local search bound to one ligand and pocket; reuses the prepared kinematics."""

    def __init__(self, pocket: Pocket, ligand: Ligand, config: ScoringConfig | None = None) -> None:
        self.pocket = pocket
        self.ligand = ligand
        self.config = config or ScoringConfig()
        heavy_atoms = np.flatnonzero(ligand.heavy_mask)
        self.full = Kinematics.build(ligand, ligand.coords)
        self.heavy = Kinematics.build(ligand, ligand.coords, heavy_atoms)
        self.n_heavy = len(heavy_atoms)
        self._origin = np.asarray(pocket.origin, dtype=np.float64)

    def run(self, pose: Pose) -> SearchOutcome:
        cfg = self.config
        q, t, angles, score, iterations, evals = _kernels.local_search(
            self.heavy.base,
            self.heavy.ridx,
            self.heavy.rptr,
            self.heavy.axes,
            _angles(pose.torsion_angles),
            np.asarray(pose.transform.rotation, dtype=np.float64),
            np.asarray(pose.transform.translation, dtype=np.float64),
            self.pocket.values,
            self._origin,
            float(self.pocket.spacing),
            float(cfg.step_translation),
            float(cfg.step_rotation),
            float(cfg.step_torsion),
            float(cfg.min_step_translation),
            int(cfg.max_iterations),
        )
        transform = RigidTransform(tuple(q), tuple(t))
        conf = self.full.materialize(angles, transform)
        out = Pose(transform, tuple(angles), conf, float(score), None, pose.restart)
        return SearchOutcome(out, int(iterations), int(evals) * self.n_heavy)


    def run_batch(self, Q: np.ndarray, T: np.ndarray, angles) -> tuple[list[Pose], int]:
        """Search from every start ``(Q[i], T[i])`` with shared ``angles``; returns poses and scoring evals."""
        cfg = self.config
        q, t, a, scores, _, evals = _kernels.search_batch(
            self.heavy.base,
            self.heavy.ridx,
            self.heavy.rptr,
            self.heavy.axes,
            _angles(angles),
            np.ascontiguousarray(Q, dtype=np.float64),
            np.ascontiguousarray(T, dtype=np.float64),
            self.pocket.values,
            self._origin,
            float(self.pocket.spacing),
            float(cfg.step_translation),
            float(cfg.step_rotation),
            float(cfg.step_torsion),
            float(cfg.min_step_translation),
            int(cfg.max_iterations),
        )
        confs = _kernels.materialize_batch(self.full.base, self.full.ridx, self.full.rptr, self.full.axes, a, q, t)
        poses = [
            Pose(RigidTransform(tuple(q[i]), tuple(t[i])), tuple(a[i]), confs[i], float(scores[i]), None, i)
            for i in range(len(scores))
        ]
        return poses, int(evals.sum()) * self.n_heavy


def local_search(pocket: Pocket, ligand: Ligand, pose: Pose, config: ScoringConfig | None = None) -> Pose:
    """Steepest-ascent refinement of ``pose`` on the steric grid score."""
    return Searcher(pocket, ligand, config).run(pose).pose


def _visit_order(poses: Sequence[Pose]) -> list[int]:
    return sorted(range(len(poses)), key=lambda i: (-poses[i].geo_score, poses[i].restart, i))


def cluster_assignments(poses: Sequence[Pose], threshold: float, atom_mask=None) -> list[int]:
    """Leader index (into ``poses``) for every pose under greedy leader clustering.

    RMSD is in-frame over the atoms selected by ``atom_mask`` (all atoms
    when omitted).  A pose joins the first leader closer than ``threshold``.
    """
    if not poses:
        raise ValueError("no poses to cluster")
    if atom_mask is None:
        confs = np.stack([p.conformation for p in poses])
    else:
        mask = np.asarray(atom_mask, dtype=bool)
        confs = np.stack([p.conformation[mask] for p in poses])
    n_atoms = confs.shape[1]
    leaders: list[int] = []
    lead_confs = np.empty_like(confs)
    owner = [-1] * len(poses)
    for i in _visit_order(poses):
        k = len(leaders)
        if k:
            diff = lead_confs[:k] - confs[i]
            dist = np.sqrt((diff * diff).sum(axis=(1, 2)) / n_atoms)
            close = np.flatnonzero(dist < threshold)
            if len(close):
                owner[i] = leaders[close[0]]
                continue
        lead_confs[k] = confs[i]
        leaders.append(i)
        owner[i] = i
    return owner


def cluster_and_select(poses: Sequence[Pose], threshold: float, top: int, atom_mask=None) -> list[Pose]:
    """Cluster leaders by score, then the remaining poses by score; keep ``top``."""
    owner = cluster_assignments(poses, threshold, atom_mask)
    order = _visit_order(poses)
    leaders = [i for i in order if owner[i] == i]
    members = [i for i in order if owner[i] != i]
    return [poses[i] for i in (leaders + members)[:top]]
