"""Pocket construction, the ``.pkt`` text format, and both scoring functions."""

from __future__ import annotations

import math
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .. import _kernels
from ..molmodel.types import Element, Ligand, Pocket

CLASH_DISTANCE = 1.5
CONTACT_DISTANCE = 4.0
CLASH_VALUE = -10.0
CONTACT_VALUE = 1.0

# chemical surrogate
_HYDROPHOBIC, _POLAR, _OTHER = 0, 1, 2
_WEIGHTS = np.array(
    [
        [0.4, 0.1, 0.05],
        [0.1, 1.0, 0.05],
        [0.05, 0.05, 0.05],
    ]
)
RAMP_FULL = 3.5
RAMP_ZERO = 4.5
CHEM_CLASH_DISTANCE = 2.0
CHEM_CLASH_PENALTY = 5.0


class PocketError(ValueError):
    pass


def build_pocket(
    protein_elements: Sequence[Element],
    protein_coords,
    center,
    radius: float,
    spacing: float,
    pocket_id: str = "pocket",
) -> Pocket:
    """Voxelize the steric field around ``center``.

    The box spans ``center +/- radius``.  Each node scores -10 when closer
    than 1.5 A to a protein atom, +1 when in the 1.5-4.0 A contact shell and
    within ``radius`` of the center, and 0 otherwise.
    """
    coords = np.asarray(protein_coords, dtype=np.float64).reshape(-1, 3)
    if coords.shape[0] == 0:
        raise PocketError("protein has no atoms")
    if len(protein_elements) != coords.shape[0]:
        raise PocketError("protein element and coordinate counts differ")
    if not 0.25 <= spacing <= 1.0:
        raise PocketError(f"spacing must lie in [0.25, 1.0] A, got {spacing}")
    if not radius > 0:
        raise PocketError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    n = int(math.floor(2.0 * radius / spacing)) + 1
    dims = (max(n, 2),) * 3
    origin = center - radius
    axes = [origin[d] + spacing * np.arange(dims[d]) for d in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    dist, _ = cKDTree(coords).query(points)
    inside = np.linalg.norm(points - center, axis=1) <= radius
    values = np.zeros(len(points))
    values[(dist >= CLASH_DISTANCE) & (dist <= CONTACT_DISTANCE) & inside] = CONTACT_VALUE
    values[dist < CLASH_DISTANCE] = CLASH_VALUE
    return Pocket(pocket_id, tuple(origin), spacing, dims, values.reshape(dims), tuple(protein_elements), coords)


def _grid_args(pocket: Pocket):
    return pocket.values, np.asarray(pocket.origin, dtype=np.float64), float(pocket.spacing)


def geo_score(pocket: Pocket, ligand: Ligand, conf) -> float:
    """Trilinear grid score summed over heavy atoms; atoms off the grid score -10."""
    conf = np.ascontiguousarray(conf, dtype=np.float64)
    heavy = np.ascontiguousarray(conf[ligand.heavy_mask])
    return float(_kernels.grid_score(*_grid_args(pocket), heavy))


_CLASS_OF = np.full(len(Element), _OTHER, dtype=np.int64)
_CLASS_OF[[Element.C]] = _HYDROPHOBIC
_CLASS_OF[[Element.N, Element.O]] = _POLAR


def chem_score(pocket: Pocket, ligand: Ligand, conf) -> float:
    """Class-weighted contact count against the protein atoms, with a clash penalty."""
    conf = np.asarray(conf, dtype=np.float64)
    mask = ligand.heavy_mask
    lig = conf[mask]
    if len(pocket.protein_coords) == 0 or len(lig) == 0:
        return 0.0
    lig_cls = _CLASS_OF[ligand.element_codes[mask]]
    prot_cls = _CLASS_OF[pocket.protein_element_codes]
    diff = lig[:, None, :] - pocket.protein_coords[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))
    ramp = np.clip((RAMP_ZERO - d) / (RAMP_ZERO - RAMP_FULL), 0.0, 1.0)
    weights = _WEIGHTS[lig_cls[:, None], prot_cls[None, :]]
    total = float((weights * ramp).sum())
    total -= CHEM_CLASH_PENALTY * int((d < CHEM_CLASH_DISTANCE).sum())
    return total


def write_pocket(path, pocket: Pocket) -> None:
    lines = [
        f"pocket {pocket.id}",
        "origin " + " ".join(repr(float(x)) for x in pocket.origin),
        f"spacing {float(pocket.spacing)!r}",
        "dims " + " ".join(str(d) for d in pocket.dims),
        f"protein_atoms {len(pocket.protein_elements)}",
    ]
    for element, xyz in zip(pocket.protein_elements, pocket.protein_coords):
        lines.append(element.symbol + " " + " ".join(repr(float(c)) for c in xyz))
    lines.append("grid")
    # x-fastest: transpose so that C-order ravel walks i first
    flat = pocket.values.transpose(2, 1, 0).ravel()
    for start in range(0, len(flat), 16):
        lines.append(" ".join(repr(float(v)) for v in flat[start : start + 16]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pocket(path) -> Pocket:
    tokens_by_line = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        it = iter(tokens_by_line)

        def expect(key: str, count: int | None = None) -> list[str]:
            toks = next(it)
            if toks[0] != key or (count is not None and len(toks) != count + 1):
                raise PocketError(f"expected '{key}' line, got {' '.join(toks)!r}")
            return toks[1:]

        pid = " ".join(expect("pocket"))
        origin = tuple(float(x) for x in expect("origin", 3))
        spacing = float(expect("spacing", 1)[0])
        dims = tuple(int(x) for x in expect("dims", 3))
        k = int(expect("protein_atoms", 1)[0])
        elements, coords = [], []
        for _ in range(k):
            toks = next(it)
            if len(toks) != 4:
                raise PocketError(f"bad protein atom line {' '.join(toks)!r}")
            elements.append(Element.from_symbol(toks[0]))
            coords.append([float(x) for x in toks[1:]])
        expect("grid", 0)
        values = [float(v) for toks in it for v in toks]
    except StopIteration:
        raise PocketError(f"{path}: truncated pocket file") from None
    except ValueError as exc:
        if isinstance(exc, PocketError):
            raise
        raise PocketError(f"{path}: {exc}") from None
    nx, ny, nz = dims
    if len(values) != nx * ny * nz:
        raise PocketError(f"{path}: grid has {len(values)} values, dims need {nx * ny * nz}")
    grid = np.asarray(values).reshape(nz, ny, nx).transpose(2, 1, 0)
    return Pocket(pid, origin, spacing, dims, grid, tuple(elements), np.asarray(coords).reshape(-1, 3))
