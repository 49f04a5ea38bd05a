from .embed import BOND_LENGTHS, bond_length, embed_3d
from .hydrogens import ValenceError, add_hydrogens
from .transforms import (
    DegenerateAxisError,
    RigidTransform,
    apply_rigid,
    apply_torsion,
    apply_torsions,
    centroid,
    internal_distance_sum,
    quat_from_axis_angle,
    quat_multiply,
    quat_to_matrix,
    rmsd,
)

__all__ = [
    "BOND_LENGTHS",
    "DegenerateAxisError",
    "RigidTransform",
    "ValenceError",
    "add_hydrogens",
    "apply_rigid",
    "apply_torsion",
    "apply_torsions",
    "bond_length",
    "centroid",
    "embed_3d",
    "internal_distance_sum",
    "quat_from_axis_angle",
    "quat_multiply",
    "quat_to_matrix",
    "rmsd",
]
