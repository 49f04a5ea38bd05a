"""Core molecular data types shared by every stage of the screening stack.

All types are frozen; a ligand built by the parser or decoded from a
binary record can be handed to any worker thread without copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np


class Element(IntEnum):
    C = 0
    N = 1
    O = 2  # noqa: E741
    S = 3
    P = 4
    F = 5
    Cl = 6
    Br = 7
    I = 8  # noqa: E741
    H = 9
    OTHER = 10

    @property
    def symbol(self) -> str:
        return "Du" if self is Element.OTHER else self.name

    @classmethod
    def from_symbol(cls, symbol: str) -> "Element":
        if symbol == "Du":
            return cls.OTHER
        try:
            return cls[symbol]
        except KeyError:
            return cls.OTHER


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence_contribution(self) -> float:
        return 1.5 if self is BondOrder.AROMATIC else float(self.value)


@dataclass(frozen=True)
class Atom:
    element: Element
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError(f"non-finite atom position {self.position}")

    @property
    def is_heavy(self) -> bool:
        return self.element is not Element.H


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"self-bond on atom {self.a}")

    def other(self, atom: int) -> int:
        return self.b if atom == self.a else self.a


@dataclass(frozen=True)
class TorsionalBond:
    """A rotatable bridge bond and the two fragments it separates.

    Rotating the torsion moves ``right_set`` (the side holding the bond's
    ``b`` endpoint) about the bond axis and leaves ``left_set`` fixed.
    ``axis`` is ``(left endpoint, right endpoint)``.
    """

    bond_index: int
    left_set: frozenset[int]
    right_set: frozenset[int]
    axis: tuple[int, int]


@dataclass(frozen=True)
class Ligand:
    """A molecule as the docking engine sees it.

    ``name`` carries the SMILES text the ligand was built from; it is the
    only identity that survives into campaign output.
    """

    name: str
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()
    torsions: tuple[TorsionalBond, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.atoms)
        seen: set[tuple[int, int]] = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ValueError(f"bond {bond} references a missing atom")
            key = (min(bond.a, bond.b), max(bond.a, bond.b))
            if key in seen:
                raise ValueError(f"duplicate bond between atoms {key}")
            seen.add(key)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_heavy(self) -> int:
        return sum(1 for a in self.atoms if a.is_heavy)

    @property
    def n_torsions(self) -> int:
        return len(self.torsions)

    @cached_property
    def coords(self) -> np.ndarray:
        """Atom positions as a read-only ``(n, 3)`` float64 array."""
        arr = np.array([a.position for a in self.atoms], dtype=np.float64).reshape(-1, 3)
        arr.setflags(write=False)
        return arr

    @cached_property
    def heavy_mask(self) -> np.ndarray:
        mask = np.array([a.is_heavy for a in self.atoms], dtype=bool)
        mask.setflags(write=False)
        return mask

    @cached_property
    def element_codes(self) -> np.ndarray:
        codes = np.array([int(a.element) for a in self.atoms], dtype=np.int64)
        codes.setflags(write=False)
        return codes

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            nbrs[bond.a].append(bond.b)
            nbrs[bond.b].append(bond.a)
        return tuple(tuple(x) for x in nbrs)

    def with_positions(self, coords: np.ndarray) -> "Ligand":
        coords = np.asarray(coords, dtype=np.float64)
        if coords.shape != (self.n_atoms, 3):
            raise ValueError(f"expected {(self.n_atoms, 3)} coordinates, got {coords.shape}")
        atoms = tuple(
            Atom(a.element, (float(x), float(y), float(z))) for a, (x, y, z) in zip(self.atoms, coords)
        )
        return Ligand(self.name, atoms, self.bonds, self.torsions)

    def with_torsions(self, torsions: tuple[TorsionalBond, ...]) -> "Ligand":
        return Ligand(self.name, self.atoms, self.bonds, tuple(torsions))


@dataclass(frozen=True, eq=False)
class Pocket:
    """Rigid binding site: a steric score grid plus the protein atoms around it.

    Grid node ``(i, j, k)`` sits at ``origin + spacing * (i, j, k)``; ``values``
    has shape ``dims`` and is indexed ``values[i, j, k]``.
    """

    id: str
    origin: tuple[float, float, float]
    spacing: float
    dims: tuple[int, int, int]
    values: np.ndarray
    protein_elements: tuple[Element, ...] = ()
    protein_coords: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise ValueError("pocket spacing must be positive")
        if len(self.dims) != 3 or any(d < 2 for d in self.dims):
            raise ValueError(f"pocket dims must be >= 2 per axis, got {self.dims}")
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.size != int(np.prod(self.dims)):
            raise ValueError(f"grid has {values.size} values, dims need {int(np.prod(self.dims))}")
        values = values.reshape(self.dims)
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        values.setflags(write=False)
        coords = np.ascontiguousarray(self.protein_coords, dtype=np.float64).reshape(-1, 3)
        if coords.shape[0] != len(self.protein_elements):
            raise ValueError("protein element and coordinate counts differ")
        coords.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "protein_coords", coords)
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))
        object.__setattr__(self, "protein_elements", tuple(Element(e) for e in self.protein_elements))

    @cached_property
    def protein_element_codes(self) -> np.ndarray:
        codes = np.array([int(e) for e in self.protein_elements], dtype=np.int64)
        codes.setflags(write=False)
        return codes

    @property
    def center(self) -> np.ndarray:
        """Geometric center of the grid box; initial poses are placed here."""
        return np.asarray(self.origin) + self.spacing * (np.asarray(self.dims) - 1) / 2.0

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * (np.asarray(self.dims) - 1)

    def node(self, i: int, j: int, k: int) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * np.array([i, j, k], dtype=np.float64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pocket):
            return NotImplemented
        return (
            self.id == other.id
            and self.origin == other.origin
            and self.spacing == other.spacing
            and self.dims == other.dims
            and np.array_equal(self.values, other.values)
            and self.protein_elements == other.protein_elements
            and np.array_equal(self.protein_coords, other.protein_coords)
        )

    __hash__ = None  # type: ignore[assignment]
