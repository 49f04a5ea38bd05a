"""Parser for the organic SMILES subset used by screening libraries.

Supported: atoms ``B C N O P S F Cl Br I`` and aromatic ``c n o s``,
branches, single-digit ring closures and the bond symbols ``- = # :``.
Brackets, charges, isotopes and stereo marks are rejected by name.
Hydrogens stay implicit; see :func:`vscreen.geometry.add_hydrogens`.
"""

from __future__ import annotations

from typing import NamedTuple

from .graph import bridge_bonds, connected_components, cyclomatic_number
from .types import Atom, Bond, BondOrder, Element, Ligand


class SmilesError(ValueError):
    """Malformed SMILES; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}" + (f" in {text!r}" if text else ""))
        self.offset = offset


class UnsupportedFeatureError(SmilesError):
    def __init__(self, feature: str, offset: int, text: str = ""):
        super().__init__(f"unsupported SMILES feature: {feature}", offset, text)
        self.feature = feature


class DisconnectedMoleculeError(SmilesError):
    pass


_ALIPHATIC = {
    "B": Element.OTHER,
    "C": Element.C,
    "N": Element.N,
    "O": Element.O,
    "P": Element.P,
    "S": Element.S,
    "F": Element.F,
    "I": Element.I,
}
_AROMATIC = {"c": Element.C, "n": Element.N, "o": Element.O, "s": Element.S}
_BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE, ":": BondOrder.AROMATIC}
_UNSUPPORTED = {
    "[": "bracket atom",
    "]": "bracket atom",
    "@": "stereochemistry",
    "/": "bond stereochemistry",
    "\\": "bond stereochemistry",
    "%": "two-digit ring closure",
    "0": "ring-closure digit 0",
    "*": "wildcard atom",
    "+": "charge",
    "$": "quadruple bond",
    "b": "aromatic boron",
    "p": "aromatic phosphorus",
}


def parse_smiles(text: str) -> Ligand:
    """Parse ``text`` into a heavy-atom molecular graph.

    Positions are all zero and no torsions are assigned.

    Raises:
        SmilesError: syntax problems, with the offending byte offset.
        UnsupportedFeatureError: valid SMILES outside the supported subset.
        DisconnectedMoleculeError: a ``.`` separated mixture.
    """
    if not text:
        raise SmilesError("empty SMILES", 0)

    elements: list[Element] = []
    aromatic: list[bool] = []
    bonds: list[Bond] = []
    bonded: set[tuple[int, int]] = set()
    branch_stack: list[int] = []
    rings: dict[str, tuple[int, BondOrder | None, int]] = {}
    prev: int | None = None
    pending: BondOrder | None = None
    pending_at = 0

    def add_bond(a: int, b: int, order: BondOrder | None, at: int) -> None:
        key = (min(a, b), max(a, b))
        if a == b or key in bonded:
            raise SmilesError("ring closure duplicates an existing bond", at, text)
        if order is None:
            order = BondOrder.AROMATIC if aromatic[a] and aromatic[b] else BondOrder.SINGLE
        bonded.add(key)
        bonds.append(Bond(a, b, order))

    i = 0
    while i < len(text):
        ch = text[i]
        start = i
        element = None
        is_aromatic = False
        if ch in ("C", "B") and text[i + 1 : i + 2] == ("l" if ch == "C" else "r"):
            element = Element.Cl if ch == "C" else Element.Br
            i += 2
        elif ch in _ALIPHATIC:
            element = _ALIPHATIC[ch]
            i += 1
        elif ch in _AROMATIC:
            element = _AROMATIC[ch]
            is_aromatic = True
            i += 1

        if element is not None:
            idx = len(elements)
            elements.append(element)
            aromatic.append(is_aromatic)
            if prev is not None:
                add_bond(prev, idx, pending, start)
            elif pending is not None:
                raise SmilesError("bond symbol before first atom", pending_at, text)
            prev, pending = idx, None
            continue

        if ch in _UNSUPPORTED:
            raise UnsupportedFeatureError(_UNSUPPORTED[ch], i, text)
        if ch == ".":
            raise DisconnectedMoleculeError("disconnected molecule ('.')", i, text)
        if ch in _BOND_SYMBOLS:
            if prev is None or pending is not None:
                raise SmilesError(f"unexpected bond symbol {ch!r}", i, text)
            pending, pending_at = _BOND_SYMBOLS[ch], i
        elif ch == "(":
            if prev is None or pending is not None:
                raise SmilesError("branch must follow an atom", i, text)
            branch_stack.append(prev)
        elif ch == ")":
            if not branch_stack:
                raise SmilesError("unmatched ')'", i, text)
            if pending is not None:
                raise SmilesError("dangling bond before ')'", pending_at, text)
            if text[i - 1] == "(":
                raise SmilesError("empty branch", i, text)
            prev = branch_stack.pop()
        elif ch.isdigit():
            if prev is None:
                raise SmilesError("ring closure before first atom", i, text)
            if ch in rings:
                other, order, _ = rings.pop(ch)
                if order is not None and pending is not None and order != pending:
                    raise SmilesError(f"conflicting bond orders on ring closure {ch}", i, text)
                add_bond(other, prev, pending if pending is not None else order, i)
            else:
                rings[ch] = (prev, pending, i)
            pending = None
        else:
            raise SmilesError(f"unexpected character {ch!r}", i, text)
        i += 1

    if pending is not None:
        raise SmilesError("dangling bond at end of SMILES", pending_at, text)
    if branch_stack:
        raise SmilesError("unclosed branch", len(text), text)
    if rings:
        digit, (_, _, at) = min(rings.items(), key=lambda kv: kv[1][2])
        raise SmilesError(f"unclosed ring {digit}", at, text)
    if not elements:
        raise SmilesError("no atoms", 0, text)

    atoms = tuple(Atom(e) for e in elements)
    if len(connected_components(len(atoms), bonds)) != 1:
        raise DisconnectedMoleculeError("molecule is not connected", 0, text)
    return Ligand(text, atoms, tuple(bonds))


class FeatureVector(NamedTuple):
    n_heavy: int
    n_rings: int
    n_chains: int
    heavy_x_rings: int
    heavy_x_chains: int
    rings_x_chains: int


def graph_features(ligand: Ligand) -> FeatureVector:
    heavy = [a.is_heavy for a in ligand.atoms]
    heavy_idx = [i for i, h in enumerate(heavy) if h]
    remap = {old: new for new, old in enumerate(heavy_idx)}
    heavy_bonds = [Bond(remap[b.a], remap[b.b], b.order) for b in ligand.bonds if heavy[b.a] and heavy[b.b]]
    n = len(heavy_idx)
    rings = cyclomatic_number(n, heavy_bonds)
    chains = len(bridge_bonds(n, heavy_bonds))
    return FeatureVector(n, rings, chains, n * rings, n * chains, rings * chains)


def smiles_features(text: str) -> FeatureVector:
    """Cheap complexity descriptors read straight off a SMILES string.

    ``n_chains`` counts acyclic heavy-atom bonds; ``n_rings`` is the
    cyclomatic number. The last three entries are pairwise products.
    """
    return graph_features(parse_smiles(text))
