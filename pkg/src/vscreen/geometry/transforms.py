"""Rigid transforms, torsional rotation, and the two conformation metrics.

Conformations are plain ``(n, 3)`` float64 arrays parallel to
``Ligand.atoms``.  Quaternions are ``(w, x, y, z)``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..molmodel.types import TorsionalBond


def quat_multiply(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q
    w2, x2, y2, z2 = r
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (unit quaternion) followed by translation: ``x -> R x + t``."""

    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        q = tuple(float(c) for c in self.rotation)
        if len(q) != 4:
            raise ValueError("rotation quaternion needs 4 components")
        norm = math.sqrt(sum(c * c for c in q))
        if not norm > 0:
            raise ValueError("rotation quaternion must be non-zero")
        # leave already-unit quaternions untouched so poses rebuild bit-for-bit
        if abs(norm - 1.0) > 1e-12:
            q = tuple(c / norm for c in q)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", tuple(float(c) for c in self.translation))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(np.asarray(self.rotation))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """The transform applying ``other`` first, then ``self``."""
        q = quat_multiply(np.asarray(self.rotation), np.asarray(other.rotation))
        t = self.matrix @ np.asarray(other.translation) + np.asarray(self.translation)
        return RigidTransform(tuple(q), tuple(t))

    def inverse(self) -> "RigidTransform":
        w, x, y, z = self.rotation
        conj = RigidTransform((w, -x, -y, -z))
        t = -(conj.matrix @ np.asarray(self.translation))
        return RigidTransform(conj.rotation, tuple(t))


def apply_rigid(conf: np.ndarray, transform: RigidTransform) -> np.ndarray:
    conf = np.asarray(conf, dtype=np.float64)
    return conf @ transform.matrix.T + np.asarray(transform.translation)


def rotate_about_axis(points: np.ndarray, origin: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation of ``points`` about the line through ``origin`` along unit ``axis``."""
    v = points - origin
    c, s = np.cos(angle), np.sin(angle)
    return origin + v * c + np.cross(axis, v) * s + np.outer(v @ axis, axis) * (1.0 - c)


class DegenerateAxisError(ValueError):
    pass


def apply_torsion(conf: np.ndarray, torsion: TorsionalBond, angle: float) -> np.ndarray:
    """Rotate the torsion's right fragment by ``angle`` radians about the bond.

    The axis runs from the left endpoint to the right endpoint; positive
    angles follow the right-hand rule.
    """
    conf = np.array(conf, dtype=np.float64)
    a, b = torsion.axis
    axis = conf[b] - conf[a]
    length = np.linalg.norm(axis)
    if length < 1e-12:
        raise DegenerateAxisError(f"torsion endpoints {a} and {b} coincide")
    idx = np.fromiter(sorted(torsion.right_set), dtype=np.intp)
    conf[idx] = rotate_about_axis(conf[idx], conf[a].copy(), axis / length, angle)
    return conf


def apply_torsions(conf: np.ndarray, torsions: Sequence[TorsionalBond], angles: Sequence[float]) -> np.ndarray:
    """Apply every torsion in index order, each about its current bond axis."""
    if len(torsions) != len(angles):
        raise ValueError(f"{len(torsions)} torsions but {len(angles)} angles")
    out = np.array(conf, dtype=np.float64)
    for torsion, angle in zip(torsions, angles):
        out = apply_torsion(out, torsion, angle)
    return out


def internal_distance_sum(conf: np.ndarray) -> float:
    """Sum of all pairwise interatomic distances."""
    conf = np.asarray(conf, dtype=np.float64)
    diff = conf[:, None, :] - conf[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    return float(np.triu(dist, k=1).sum())


def rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """In-frame RMSD; no superposition is performed."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"conformation shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum() / len(a)))


def centroid(conf: np.ndarray) -> np.ndarray:
    return np.asarray(conf, dtype=np.float64).mean(axis=0)
