"""Brute-force docking for tiny rigid ligands; ground truth for tests."""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..geometry.transforms import RigidTransform
from ..molmodel.types import Ligand, Pocket
from .search import _fibonacci_quaternions, _geo, heavy_centroid, materialize
from .types import Pose

MAX_ATOMS = 5
MAX_BOX = 16.0
LATTICE = 0.25
MIN_ORIENTATIONS = 500


class OracleLimitError(ValueError):
    pass


def exhaustive_dock(pocket: Pocket, ligand: Ligand, orientations: int = 512, lattice: float = LATTICE) -> Pose:
    """Best grid score over a centroid lattice times a Fibonacci orientation set.

    Lattice points run x-fastest from the box origin; ties keep the first
    point, then the first orientation.
    """
    if ligand.n_atoms > MAX_ATOMS:
        raise OracleLimitError(f"ligand has {ligand.n_atoms} atoms; oracle limit is {MAX_ATOMS}")
    if ligand.n_torsions:
        raise OracleLimitError("oracle handles rigid ligands only")
    extent = pocket.upper - np.asarray(pocket.origin)
    if np.any(extent > MAX_BOX + 1e-9):
        raise OracleLimitError(f"pocket box {extent.max():.2f} A exceeds {MAX_BOX} A")
    if orientations < MIN_ORIENTATIONS:
        raise OracleLimitError(f"need at least {MIN_ORIENTATIONS} orientations")
    heavy = ligand.coords[ligand.heavy_mask]
    cen = heavy_centroid(ligand, ligand.coords)
    quats = _fibonacci_quaternions(orientations)
    rel = heavy - cen
    offsets = np.ascontiguousarray(np.stack([rel @ RigidTransform(tuple(q)).matrix.T for q in quats]))
    counts = (np.floor(extent / lattice + 1e-9).astype(np.int64) + 1)
    lo = np.asarray(pocket.origin, dtype=np.float64)
    _, best_r, best_c = _kernels.exhaustive_scan(
        offsets, pocket.values, lo, float(pocket.spacing), float(lattice), lo, counts
    )
    rot = RigidTransform(tuple(quats[best_r]))
    transform = RigidTransform(rot.rotation, tuple(best_c - rot.matrix @ cen))
    conf = materialize(ligand, (), transform)
    return Pose(transform, (), conf, _geo(pocket, ligand, conf), None, int(best_r))
