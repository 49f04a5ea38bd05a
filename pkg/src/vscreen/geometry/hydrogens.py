from __future__ import annotations

from ..molmodel.graph import detect_torsions
from ..molmodel.types import Atom, Bond, BondOrder, Element, Ligand

# allowed valences, lowest first; the implicit-H count fills up to the
# smallest one that is not below the explicit bond total
VALENCES: dict[Element, tuple[int, ...]] = {
    Element.C: (4,),
    Element.N: (3, 5),
    Element.O: (2,),
    Element.S: (2, 4, 6),
    Element.P: (3, 5),
    Element.F: (1,),
    Element.Cl: (1,),
    Element.Br: (1,),
    Element.I: (1,),
}


class ValenceError(ValueError):
    pass


def bond_valence(ligand: Ligand, atom: int) -> int:
    """Explicit valence used by ``atom``.

    Aromatic bonds count one each; an aromatic C or N adds one more for its
    share of the ring's double bonds.  Aromatic O and S donate a lone pair
    and get nothing extra.
    """
    used = 0
    aromatic = False
    for bond in ligand.bonds:
        if atom not in (bond.a, bond.b):
            continue
        if bond.order is BondOrder.AROMATIC:
            used += 1
            aromatic = True
        else:
            used += int(bond.order)
    if aromatic and ligand.atoms[atom].element in (Element.C, Element.N):
        used += 1
    return used


def implicit_hydrogens(ligand: Ligand, atom: int) -> int:
    element = ligand.atoms[atom].element
    allowed = VALENCES.get(element)
    if allowed is None:
        return 0
    used = bond_valence(ligand, atom)
    for valence in allowed:
        if valence >= used:
            return valence - used
    raise ValenceError(f"atom {atom} ({element.symbol}) has valence {used}, above maximum {allowed[-1]}")


def add_hydrogens(ligand: Ligand) -> Ligand:
    """Append implicit hydrogens after the heavy atoms.

    New atoms sit at the origin until :func:`embed_3d` places them.
    Existing torsions are re-detected because their fragments grow.
    """
    atoms = list(ligand.atoms)
    bonds = list(ligand.bonds)
    for idx, atom in enumerate(ligand.atoms):
        if not atom.is_heavy:
            continue
        for _ in range(implicit_hydrogens(ligand, idx)):
            atoms.append(Atom(Element.H))
            bonds.append(Bond(idx, len(atoms) - 1, BondOrder.SINGLE))
    out = Ligand(ligand.name, tuple(atoms), tuple(bonds))
    return detect_torsions(out) if ligand.torsions else out
