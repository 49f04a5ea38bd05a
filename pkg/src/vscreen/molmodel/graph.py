"""Graph queries over a ligand's bond list: components, bridges, torsions."""

from __future__ import annotations

from collections.abc import Sequence

from .types import Bond, BondOrder, Element, Ligand, TorsionalBond


def _neighbors(n_atoms: int, bonds: Sequence[Bond]) -> list[list[tuple[int, int]]]:
    nbrs: list[list[tuple[int, int]]] = [[] for _ in range(n_atoms)]
    for idx, bond in enumerate(bonds):
        nbrs[bond.a].append((bond.b, idx))
        nbrs[bond.b].append((bond.a, idx))
    return nbrs


def connected_components(n_atoms: int, bonds: Sequence[Bond]) -> list[list[int]]:
    nbrs = _neighbors(n_atoms, bonds)
    seen = [False] * n_atoms
    comps = []
    for start in range(n_atoms):
        if seen[start]:
            continue
        seen[start] = True
        stack, comp = [start], []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v, _ in nbrs[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def bridge_bonds(n_atoms: int, bonds: Sequence[Bond]) -> set[int]:
    """Indices of bonds whose removal disconnects the graph (iterative Tarjan)."""
    nbrs = _neighbors(n_atoms, bonds)
    disc = [-1] * n_atoms
    low = [0] * n_atoms
    bridges: set[int] = set()
    timer = 0
    for root in range(n_atoms):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        # frame: (vertex, bond index used to enter it, iterator position)
        stack = [(root, -1, 0)]
        while stack:
            u, via, pos = stack[-1]
            if pos < len(nbrs[u]):
                stack[-1] = (u, via, pos + 1)
                v, bidx = nbrs[u][pos]
                if bidx == via:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, bidx, 0))
                else:
                    low[u] = min(low[u], disc[v])
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[u])
                    if low[u] > disc[parent]:
                        bridges.add(via)
    return bridges


def cyclomatic_number(n_atoms: int, bonds: Sequence[Bond]) -> int:
    return len(bonds) - n_atoms + len(connected_components(n_atoms, bonds))


def side_of(n_atoms: int, bonds: Sequence[Bond], removed: int, start: int) -> frozenset[int]:
    """Atoms reachable from ``start`` once bond ``removed`` is deleted."""
    nbrs = _neighbors(n_atoms, bonds)
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v, bidx in nbrs[u]:
            if bidx != removed and v not in seen:
                seen.add(v)
                stack.append(v)
    return frozenset(seen)


def torsion_for_bond(ligand: Ligand, bond_index: int) -> TorsionalBond:
    bond = ligand.bonds[bond_index]
    left = side_of(ligand.n_atoms, ligand.bonds, bond_index, bond.a)
    right = frozenset(range(ligand.n_atoms)) - left
    if bond.b not in right:
        raise ValueError(f"bond {bond_index} is not a bridge; cannot act as a torsion")
    return TorsionalBond(bond_index, left, right, (bond.a, bond.b))


def detect_torsions(ligand: Ligand) -> Ligand:
    """Return ``ligand`` with its rotatable bonds filled in.

    A bond qualifies when it is single, not in a ring, joins two heavy atoms,
    and both ends have at least two heavy neighbours.  Hydrogens never make a
    terminal bond rotatable.
    """
    heavy = [a.element is not Element.H for a in ligand.atoms]
    heavy_degree = [0] * ligand.n_atoms
    for bond in ligand.bonds:
        if heavy[bond.a] and heavy[bond.b]:
            heavy_degree[bond.a] += 1
            heavy_degree[bond.b] += 1
    bridges = bridge_bonds(ligand.n_atoms, ligand.bonds)
    torsions = []
    for idx, bond in enumerate(ligand.bonds):
        if (
            idx in bridges
            and bond.order is BondOrder.SINGLE
            and heavy[bond.a]
            and heavy[bond.b]
            and heavy_degree[bond.a] >= 2
            and heavy_degree[bond.b] >= 2
        ):
            torsions.append(torsion_for_bond(ligand, idx))
    return ligand.with_torsions(tuple(torsions))
