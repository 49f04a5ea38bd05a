"""Minimal TRIPOS Mol2 reader/writer (MOLECULE, ATOM and BOND sections).

Atom types are written as bare element symbols; unknown elements as ``Du``.
"""

from __future__ import annotations

from .types import Atom, Bond, BondOrder, Element, Ligand


class Mol2Error(ValueError):
    pass


_BOND_TYPES = {BondOrder.SINGLE: "1", BondOrder.DOUBLE: "2", BondOrder.TRIPLE: "3", BondOrder.AROMATIC: "ar"}
_BOND_FROM_TYPE = {v: k for k, v in _BOND_TYPES.items()}


def write_mol2(ligand: Ligand) -> str:
    lines = [
        "@<TRIPOS>MOLECULE",
        ligand.name,
        f"{ligand.n_atoms} {len(ligand.bonds)} 1 0 0",
        "SMALL",
        "NO_CHARGES",
        "",
        "@<TRIPOS>ATOM",
    ]
    counts: dict[Element, int] = {}
    for i, atom in enumerate(ligand.atoms, start=1):
        counts[atom.element] = counts.get(atom.element, 0) + 1
        sym = atom.element.symbol
        x, y, z = atom.position
        lines.append(
            f"{i:>7d} {sym + str(counts[atom.element]):<8s}{x:>10.4f}{y:>10.4f}{z:>10.4f} {sym:<8s}{1:>3d} LIG1{0.0:>14.4f}"
        )
    lines.append("@<TRIPOS>BOND")
    for i, bond in enumerate(ligand.bonds, start=1):
        lines.append(f"{i:>6d}{bond.a + 1:>6d}{bond.b + 1:>6d} {_BOND_TYPES[bond.order]:>4s}")
    return "\n".join(lines) + "\n"


def _sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("@"):
            if not line.startswith("@<TRIPOS>") or len(line) <= len("@<TRIPOS>"):
                raise Mol2Error(f"malformed section header {line!r} on line {lineno}")
            current = line[len("@<TRIPOS>") :]
            if current in sections:
                raise Mol2Error(f"duplicate section {current} on line {lineno}")
            sections[current] = []
        elif current is not None:
            sections[current].append(raw)
    return sections


def read_mol2(text: str) -> Ligand:
    """Parse one molecule.  Torsions are not stored in Mol2 and come back empty."""
    sections = _sections(text)
    for required in ("MOLECULE", "ATOM"):
        if required not in sections:
            raise Mol2Error(f"missing @<TRIPOS>{required} section")
    header = sections["MOLECULE"]
    if len(header) < 2:
        raise Mol2Error("MOLECULE section needs a name and a counts line")
    name = header[0].strip()
    try:
        counts = [int(x) for x in header[1].split()]
    except ValueError as exc:
        raise Mol2Error(f"bad counts line {header[1]!r}") from exc
    n_atoms = counts[0]
    n_bonds = counts[1] if len(counts) > 1 else 0

    atom_lines = [ln for ln in sections["ATOM"] if ln.strip()]
    bond_lines = [ln for ln in sections.get("BOND", []) if ln.strip()]
    if len(atom_lines) != n_atoms:
        raise Mol2Error(f"MOLECULE declares {n_atoms} atoms, ATOM section has {len(atom_lines)}")
    if len(bond_lines) != n_bonds:
        raise Mol2Error(f"MOLECULE declares {n_bonds} bonds, BOND section has {len(bond_lines)}")

    atoms = []
    for ln in atom_lines:
        f = ln.split()
        if len(f) < 6:
            raise Mol2Error(f"short ATOM line {ln!r}")
        element = Element.from_symbol(f[5].split(".")[0])
        atoms.append(Atom(element, (float(f[2]), float(f[3]), float(f[4]))))
    bonds = []
    for ln in bond_lines:
        f = ln.split()
        if len(f) < 4 or f[3] not in _BOND_FROM_TYPE:
            raise Mol2Error(f"unsupported BOND line {ln!r}")
        bonds.append(Bond(int(f[1]) - 1, int(f[2]) - 1, _BOND_FROM_TYPE[f[3]]))
    try:
        return Ligand(name, tuple(atoms), tuple(bonds))
    except ValueError as exc:
        raise Mol2Error(str(exc)) from exc
