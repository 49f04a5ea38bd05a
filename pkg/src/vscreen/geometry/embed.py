"""Deterministic rule-based 3D embedding.

Atoms are placed breadth-first from atom 0 using tabulated bond lengths and
idealized bond angles, with staggered dihedrals assigned in discovery order.
Each ring system is laid out as a planar template (one cyclic polygon per
smallest cycle, fused cycles unfolded across their shared edge) and dropped
in as a rigid block when the walk first reaches it.  Bridged systems are
only approximate: atoms shared by more than one polygon get the average of
their placements.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from ..molmodel.graph import bridge_bonds
from ..molmodel.types import BondOrder, Element, Ligand

_E = Element
BOND_LENGTHS: dict[frozenset, float] = {
    frozenset((_E.C, _E.C)): 1.54,
    frozenset((_E.C, _E.O)): 1.43,
    frozenset((_E.C, _E.N)): 1.47,
    frozenset((_E.C, _E.H)): 1.09,
    frozenset((_E.N, _E.H)): 1.01,
    frozenset((_E.O, _E.H)): 0.96,
    frozenset((_E.S, _E.H)): 1.34,
    frozenset((_E.P, _E.H)): 1.42,
    frozenset((_E.C, _E.S)): 1.82,
    frozenset((_E.C, _E.P)): 1.84,
    frozenset((_E.C, _E.F)): 1.35,
    frozenset((_E.C, _E.Cl)): 1.77,
    frozenset((_E.C, _E.Br)): 1.94,
    frozenset((_E.C, _E.I)): 2.14,
    frozenset((_E.N, _E.N)): 1.45,
    frozenset((_E.N, _E.O)): 1.40,
    frozenset((_E.O, _E.O)): 1.48,
    frozenset((_E.S, _E.S)): 2.05,
    frozenset((_E.S, _E.O)): 1.58,
    frozenset((_E.P, _E.O)): 1.61,
}
DEFAULT_BOND_LENGTH = 1.5
MULTIPLE_BOND_SCALE = 0.87

_TETRAHEDRAL = math.acos(-1.0 / 3.0)


def bond_length(a: Element, b: Element, order: BondOrder = BondOrder.SINGLE) -> float:
    base = BOND_LENGTHS.get(frozenset((a, b)), DEFAULT_BOND_LENGTH)
    return base if order is BondOrder.SINGLE else base * MULTIPLE_BOND_SCALE


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _perpendicular(a: np.ndarray) -> np.ndarray:
    ref = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return _unit(ref - (ref @ a) * a)


def _rotation_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Smallest rotation matrix taking unit ``u`` onto unit ``v``."""
    c = float(np.clip(u @ v, -1.0, 1.0))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        k = _perpendicular(u)
        return 2.0 * np.outer(k, k) - np.eye(3)
    k = np.cross(u, v)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + kx + kx @ kx * (1.0 / (1.0 + c))


def _cyclic_polygon(sides: list[float]) -> np.ndarray:
    """2D vertices of a polygon inscribed in a circle with the given side lengths.

    Vertex ``i`` and ``i + 1`` are ``sides[i]`` apart.  Falls back to a
    regular polygon on the mean side if no circumscribed solution exists.
    """
    k = len(sides)
    s = np.asarray(sides, dtype=np.float64)
    if s.max() * 2 >= s.sum():
        s = np.full(k, s.mean())

    def total_angle(r: float) -> float:
        return float(np.sum(2.0 * np.arcsin(np.minimum(s / (2.0 * r), 1.0))))

    lo, hi = s.max() / 2.0, s.sum()
    if total_angle(lo) < 2 * math.pi:
        # the circle centre lies outside the polygon; regular is good enough
        s = np.full(k, s.mean())
        lo, hi = s.max() / 2.0, s.sum()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total_angle(mid) > 2 * math.pi:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    angles = np.concatenate(([0.0], np.cumsum(2.0 * np.arcsin(np.minimum(s / (2.0 * r), 1.0)))[:-1]))
    return np.stack([r * np.cos(angles), r * np.sin(angles)], axis=1)


class _Graph:
    def __init__(self, ligand: Ligand):
        self.ligand = ligand
        self.n = ligand.n_atoms
        self.elements = [a.element for a in ligand.atoms]
        self.nbrs: list[list[int]] = [[] for _ in range(self.n)]
        self.order: dict[tuple[int, int], BondOrder] = {}
        for bond in ligand.bonds:
            self.nbrs[bond.a].append(bond.b)
            self.nbrs[bond.b].append(bond.a)
            self.order[(bond.a, bond.b)] = self.order[(bond.b, bond.a)] = bond.order
        for lst in self.nbrs:
            lst.sort()

    def length(self, a: int, b: int) -> float:
        return bond_length(self.elements[a], self.elements[b], self.order[(a, b)])

    def hybrid_angle(self, atom: int) -> float:
        orders = [self.order[(atom, v)] for v in self.nbrs[atom]]
        doubles = sum(1 for o in orders if o is BondOrder.DOUBLE)
        if any(o is BondOrder.TRIPLE for o in orders) or doubles >= 2:
            return math.pi
        if doubles or any(o is BondOrder.AROMATIC for o in orders):
            return math.radians(120.0)
        return _TETRAHEDRAL


def _shortest_cycle_through(adj: dict[int, list[int]], u: int, v: int) -> list[int] | None:
    """Shortest path u -> v not using edge (u, v), closed into a cycle."""
    prev = {u: -1}
    queue = deque([u])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if x == u and y == v:
                continue
            if y not in prev:
                prev[y] = x
                if y == v:
                    path = [v]
                    while path[-1] != u:
                        path.append(prev[path[-1]])
                    return path[::-1]
                queue.append(y)
    return None


def _cycle_basis(atoms: list[int], edges: list[tuple[int, int]]) -> list[list[int]]:
    adj: dict[int, list[int]] = {a: [] for a in atoms}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    for lst in adj.values():
        lst.sort()
    edge_id = {frozenset(e): i for i, e in enumerate(edges)}
    candidates = {}
    for a, b in edges:
        cyc = _shortest_cycle_through(adj, a, b)
        if cyc is not None:
            key = frozenset(frozenset((cyc[i], cyc[(i + 1) % len(cyc)])) for i in range(len(cyc)))
            candidates.setdefault(key, cyc)
    ordered = sorted(candidates.items(), key=lambda kv: (len(kv[1]), sorted(kv[1])))
    need = len(edges) - len(atoms) + 1
    basis: list[list[int]] = []
    pivots: dict[int, int] = {}  # GF(2) elimination over edge bitmasks
    for key, cyc in ordered:
        mask = 0
        for e in key:
            mask |= 1 << edge_id[e]
        while mask:
            top = mask.bit_length() - 1
            if top not in pivots:
                pivots[top] = mask
                basis.append(cyc)
                break
            mask ^= pivots[top]
        if len(basis) == need:
            break
    return basis


def _ring_template(graph: _Graph, atoms: list[int], edges: list[tuple[int, int]]) -> dict[int, np.ndarray]:
    cycles = _cycle_basis(atoms, edges)
    placed: dict[int, list[np.ndarray]] = {}

    def pos(a: int) -> np.ndarray:
        return np.mean(placed[a], axis=0)

    remaining = list(cycles)
    first = remaining.pop(0)
    poly = _cyclic_polygon([graph.length(first[i], first[(i + 1) % len(first)]) for i in range(len(first))])
    for a, p in zip(first, poly):
        placed[a] = [p]
    while remaining:
        # prefer a cycle that shares an edge with what is already placed
        best = None
        for ci, cyc in enumerate(remaining):
            k = len(cyc)
            shared_edge = next(
                (i for i in range(k) if cyc[i] in placed and cyc[(i + 1) % k] in placed), None
            )
            shared_atom = next((i for i in range(k) if cyc[i] in placed), None)
            rank = 0 if shared_edge is not None else (1 if shared_atom is not None else 2)
            if best is None or rank < best[0]:
                best = (rank, ci, shared_edge if shared_edge is not None else shared_atom)
            if rank == 0:
                break
        rank, ci, start = best
        cyc = remaining.pop(ci)
        k = len(cyc)
        cyc = cyc[start:] + cyc[:start]  # rotate so the anchor comes first
        poly = _cyclic_polygon([graph.length(cyc[i], cyc[(i + 1) % k]) for i in range(k)])
        existing = np.mean([pos(a) for a in placed], axis=0)
        if rank == 0:
            pu, pv = pos(cyc[0]), pos(cyc[1])
            target = np.arctan2(*(pv - pu)[::-1])
            options = []
            for flip in (1.0, -1.0):
                q = poly.copy()
                q[:, 1] *= flip
                src = np.arctan2(*(q[1] - q[0])[::-1])
                rot = target - src
                m = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
                q = (q - q[0]) @ m.T + pu
                options.append(q)
            others = [pos(a) for a in placed if a not in cyc]

            def badness(opt: np.ndarray) -> float:
                mismatch = sum(float(np.sum((opt[i] - pos(a)) ** 2)) for i, a in enumerate(cyc) if a in placed)
                clashes = sum(
                    1 for i, a in enumerate(cyc) if a not in placed for o in others if np.linalg.norm(opt[i] - o) < 0.5
                )
                return mismatch + 100.0 * clashes - 1e-3 * float(np.linalg.norm(opt.mean(axis=0) - existing))

            q = min(options, key=badness)
        else:
            anchor = pos(cyc[0]) if rank == 1 else existing + np.array([10.0, 0.0])
            out = anchor - existing
            out = out / np.linalg.norm(out) if np.linalg.norm(out) > 1e-9 else np.array([1.0, 0.0])
            centre = poly.mean(axis=0)
            rel = poly - poly[0]
            src = centre - poly[0]
            rot = np.arctan2(out[1], out[0]) - np.arctan2(src[1], src[0])
            m = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
            q = rel @ m.T + anchor
        for a, p in zip(cyc, q):
            placed.setdefault(a, []).append(p)
    return {a: np.array([*pos(a), 0.0]) for a in atoms}


def _ring_systems(graph: _Graph) -> list[tuple[list[int], list[tuple[int, int]]]]:
    bridges = bridge_bonds(graph.n, graph.ligand.bonds)
    ring_edges = [(b.a, b.b) for i, b in enumerate(graph.ligand.bonds) if i not in bridges]
    parent = list(range(graph.n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in ring_edges:
        parent[find(a)] = find(b)
    members: dict[int, list[int]] = {}
    ring_atoms = sorted({a for e in ring_edges for a in e})
    for a in ring_atoms:
        members.setdefault(find(a), []).append(a)
    systems = []
    for root, atoms in sorted(members.items(), key=lambda kv: kv[1][0]):
        edges = [e for e in ring_edges if find(e[0]) == root]
        systems.append((atoms, edges))
    return systems


def _child_directions(
    graph: _Graph, p: int, pos: dict[int, np.ndarray], parent: dict[int, int], count: int
) -> list[np.ndarray]:
    placed = [v for v in graph.nbrs[p] if v in pos]
    if parent.get(p, -1) in placed:
        placed.remove(parent[p])
        placed.insert(0, parent[p])
    units = [_unit(pos[v] - pos[p]) for v in placed]
    theta = graph.hybrid_angle(p)

    if not units:
        first = np.array([1.0, 0.0, 0.0])
        return [first] + _fan(first, np.array([0.0, 1.0, 0.0]), count - 1, theta, shift=0.0)
    if len(units) == 1:
        a = units[0]
        g = placed[0]
        h = parent.get(g, -1)
        if h == p or h not in pos:
            h = next((v for v in graph.nbrs[g] if v != p and v in pos), -1)
        ref = pos[h] - pos[g] if h >= 0 else _perpendicular(a)
        ref = ref - (ref @ a) * a
        ref = _unit(ref) if np.linalg.norm(ref) > 1e-9 else _perpendicular(a)
        return _fan(a, ref, count, theta)
    if len(units) == 2:
        s = units[0] + units[1]
        b = _unit(s) if np.linalg.norm(s) > 1e-9 else _perpendicular(units[0])
        if count == 1:
            return [-b]
        nrm = np.cross(units[0], units[1])
        nrm = _unit(nrm) if np.linalg.norm(nrm) > 1e-9 else _perpendicular(b)
        half = _TETRAHEDRAL / 2.0
        dirs = [-b * math.cos(half) + nrm * math.sin(half), -b * math.cos(half) - nrm * math.sin(half)]
        return (dirs + _fan(-b, nrm, count - 2, math.radians(60.0), shift=math.pi / 2))[:count]
    s = np.sum(units, axis=0)
    b = -_unit(s) if np.linalg.norm(s) > 1e-9 else _perpendicular(units[0])
    if count == 1:
        return [b]
    return _fan(-b, _perpendicular(b), count, math.radians(150.0), shift=0.0)


def _fan(a: np.ndarray, ref: np.ndarray, count: int, theta: float, shift: float = math.pi) -> list[np.ndarray]:
    """Directions at polar angle ``theta`` from ``a``, azimuth measured from ``ref``.

    The first direction is anti to ``ref`` (staggered) when ``shift`` is pi.
    sp3 centres get slots every 120 degrees, sp2 every 180; overflow spreads evenly.
    """
    if count <= 0:
        return []
    if theta > math.pi - 1e-6:
        slots = 1
    elif abs(theta - math.radians(120.0)) < 1e-6:
        slots = 2
    else:
        slots = 3
    if count > slots:
        slots, theta = count, _TETRAHEDRAL if count <= 3 else math.radians(100.0)
    e2 = np.cross(a, ref)
    out = []
    for j in range(count):
        phi = shift + j * 2.0 * math.pi / slots
        d = math.cos(theta) * a + math.sin(theta) * (math.cos(phi) * ref + math.sin(phi) * e2)
        out.append(_unit(d))
    return out


def embed_3d(ligand: Ligand) -> np.ndarray:
    """Return deterministic starting coordinates for every atom of ``ligand``."""
    graph = _Graph(ligand)
    if graph.n == 0:
        return np.zeros((0, 3))
    block_of: dict[int, int] = {}
    templates: list[dict[int, np.ndarray]] = []
    for atoms, edges in _ring_systems(graph):
        for a in atoms:
            block_of[a] = len(templates)
        templates.append(_ring_template(graph, atoms, edges))

    pos: dict[int, np.ndarray] = {}
    parent: dict[int, int] = {}
    queue: deque[int] = deque()

    def place_block(block: int, entry: int, at: np.ndarray, toward: np.ndarray | None) -> None:
        tmpl = templates[block]
        rot = np.eye(3)
        if toward is not None:
            ring_nbrs = [v for v in graph.nbrs[entry] if block_of.get(v) == block]
            units = [_unit(tmpl[v] - tmpl[entry]) for v in ring_nbrs]
            inward = np.sum(units, axis=0)
            exo = -_unit(inward) if np.linalg.norm(inward) > 1e-9 else np.array([1.0, 0.0, 0.0])
            n_exo = len(graph.nbrs[entry]) - len(ring_nbrs)
            if len(units) == 2 and n_exo >= 2 and graph.hybrid_angle(entry) < math.radians(115.0):
                # sp3 entry with two exo bonds: put the parent on one tetrahedral slot
                nrm = np.cross(units[0], units[1])
                if np.linalg.norm(nrm) > 1e-9:
                    half = _TETRAHEDRAL / 2.0
                    exo = exo * math.cos(half) + _unit(nrm) * math.sin(half)
            rot = _rotation_between(exo, toward)
        for a in sorted(tmpl):
            pos[a] = at + rot @ (tmpl[a] - tmpl[entry])
            if a != entry:
                parent[a] = entry
        for a in sorted(tmpl):
            queue.append(a)

    for root in range(graph.n):
        if root in pos:
            continue
        if root in block_of:
            place_block(block_of[root], root, np.zeros(3), None)
        else:
            pos[root] = np.zeros(3)
            queue.append(root)
        while queue:
            p = queue.popleft()
            children = [v for v in graph.nbrs[p] if v not in pos]
            if not children:
                continue
            dirs = _child_directions(graph, p, pos, parent, len(children))
            for c, d in zip(children, dirs):
                if c in pos:  # placed as part of a ring block reached from a sibling
                    continue
                at = pos[p] + graph.length(p, c) * d
                parent[c] = p
                if c in block_of:
                    place_block(block_of[c], c, at, -d)
                else:
                    pos[c] = at
                    queue.append(c)
    return np.array([pos[i] for i in range(graph.n)], dtype=np.float64)
