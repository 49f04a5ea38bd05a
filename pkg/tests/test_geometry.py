from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vscreen.geometry import (
    DegenerateAxisError,
    RigidTransform,
    ValenceError,
    add_hydrogens,
    apply_rigid,
    apply_torsion,
    apply_torsions,
    bond_length,
    centroid,
    embed_3d,
    internal_distance_sum,
    rmsd,
)
from vscreen.molmodel import Element, detect_torsions, parse_smiles
from vscreen.prep import prepare_ligand

EMBED_CASES = [
    "C",
    "CC",
    "CCO",
    "CCCCCCCCCCCCCCCCCCCC",
    "c1ccccc1",
    "c1ccc2ccccc2c1",
    "c1ccc(cc1)-c1ccccc1",
    "c1cc2ccc3cccc4ccc(c1)c2c34",
    "CS(=O)(=O)Nc1ccccc1",
    "c1ccsc1",
    "CC#C",
    "C1CCC2(CC1)CCCC2",
    "O=C1CCC(=O)N1",
    "CC(C)(C)C(F)(Cl)Br",
    "OCC1CC(N)CC1CC(=O)O",
]


def unit_quaternions():
    return st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4).filter(lambda q: sum(c * c for c in q) > 1e-3)


def vectors(scale=20.0):
    return st.tuples(*[st.floats(-scale, scale, allow_nan=False)] * 3)


def transforms():
    return st.builds(RigidTransform, unit_quaternions(), vectors())


# -- embedding -----------------------------------------------------------------


def test_single_atom_at_origin():
    assert np.array_equal(embed_3d(parse_smiles("C")), np.zeros((1, 3)))


def test_ethane_bond_length():
    x = embed_3d(parse_smiles("CC"))
    assert np.linalg.norm(x[1] - x[0]) == pytest.approx(1.54, abs=1e-12)


@pytest.mark.parametrize("text", EMBED_CASES)
def test_embedding_bond_lengths_and_contacts(text):
    lig = prepare_ligand(text)
    x = lig.coords
    bonded = set()
    for b in lig.bonds:
        ideal = bond_length(lig.atoms[b.a].element, lig.atoms[b.b].element, b.order)
        assert abs(np.linalg.norm(x[b.a] - x[b.b]) - ideal) <= 0.10 * ideal
        bonded.add(frozenset((b.a, b.b)))
    for i, j in itertools.combinations(range(lig.n_atoms), 2):
        if frozenset((i, j)) not in bonded:
            assert np.linalg.norm(x[i] - x[j]) >= 0.8, (i, j)


def test_embedding_is_deterministic():
    a = prepare_ligand("CC(=O)Nc1ccc(O)cc1")
    b = prepare_ligand("CC(=O)Nc1ccc(O)cc1")
    assert np.array_equal(a.coords, b.coords)
    assert a == b


def test_benzene_ring_is_planar_hexagon():
    x = embed_3d(parse_smiles("c1ccccc1"))
    c = x - x.mean(axis=0)
    assert np.linalg.svd(c, compute_uv=False)[2] < 1e-9
    radii = np.linalg.norm(c, axis=1)
    assert np.ptp(radii) < 1e-9


# -- hydrogens -------------------------------------------------------------------


@pytest.mark.parametrize(
    "text, total",
    # totals from an independent cheminformatics toolkit
    [("C", 5), ("O", 3), ("c1ccccc1", 12), ("CCO", 9), ("C1CCCCC1", 18), ("CC(C)C(=O)O", 14), ("CCCC", 14)],
)
def test_hydrogen_counts(text, total):
    assert add_hydrogens(parse_smiles(text)).n_atoms == total


def test_hydrogens_follow_heavy_atoms_in_order():
    lig = add_hydrogens(parse_smiles("CO"))
    elements = [a.element for a in lig.atoms]
    assert elements == [Element.C, Element.O] + [Element.H] * 4
    owners = [b.a for b in lig.bonds[1:]]
    assert owners == [0, 0, 0, 1]


def test_valence_violation():
    with pytest.raises(ValenceError):
        add_hydrogens(parse_smiles("C(C)(C)(C)(C)C"))


# -- torsions --------------------------------------------------------------------


def butane():
    lig = detect_torsions(parse_smiles("CCCC"))
    return lig, embed_3d(lig)


def test_torsion_zero_is_identity():
    lig, x = butane()
    assert np.array_equal(apply_torsion(x, lig.torsions[0], 0.0), x)


def test_torsion_full_turn():
    lig, x = butane()
    assert np.abs(apply_torsion(x, lig.torsions[0], 2 * math.pi) - x).max() < 1e-9


def _end_to_end(phi_deg: float) -> float:
    # C1-C4 distance for tetrahedral angles, 1.54 A bonds, dihedral phi
    b, th = 1.54, math.acos(-1.0 / 3.0)
    p0 = np.zeros(3)
    p1 = np.array([b, 0.0, 0.0])
    p2 = p1 + b * np.array([-math.cos(th), math.sin(th), 0.0])
    bc = (p2 - p1) / b
    n = np.cross(p1 - p0, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    phi = math.radians(phi_deg)
    p3 = p2 + b * (-math.cos(th) * bc + math.sin(th) * math.cos(phi) * m + math.sin(th) * math.sin(phi) * n)
    return float(np.linalg.norm(p3 - p0))


def test_butane_half_turn_end_to_end_distance():
    lig, x = butane()
    anti = _end_to_end(180.0)
    eclipsed = _end_to_end(0.0)
    # frozen from the analytic construction above
    assert anti == pytest.approx(3.8755816767723, abs=1e-9)
    assert eclipsed == pytest.approx(2.5666666666667, abs=1e-9)
    assert np.linalg.norm(x[0] - x[3]) == pytest.approx(anti, abs=1e-9)
    y = apply_torsion(x, lig.torsions[0], math.pi)
    assert np.linalg.norm(y[0] - y[3]) == pytest.approx(eclipsed, abs=1e-9)


def test_degenerate_axis():
    lig, x = butane()
    x = x.copy()
    x[2] = x[1]
    with pytest.raises(DegenerateAxisError):
        apply_torsion(x, lig.torsions[0], 1.0)


@settings(max_examples=40, deadline=None)
@given(
    text=st.sampled_from(["CCCCCC", "CC(C)CCO", "c1ccccc1CCN", "OCC1CC(N)CC1CC"]),
    angles=st.lists(st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False), min_size=4, max_size=4),
)
def test_torsion_keeps_fragments_rigid(text, angles):
    lig = prepare_ligand(text)
    x = lig.coords
    for t, ang in zip(lig.torsions, angles):
        y = apply_torsion(x, t, ang)
        for side in (sorted(t.left_set), sorted(t.right_set)):
            d0 = np.linalg.norm(x[side][:, None] - x[side][None], axis=-1)
            d1 = np.linalg.norm(y[side][:, None] - y[side][None], axis=-1)
            assert np.abs(d0 - d1).max() < 1e-9
        a, b = t.axis
        assert abs(np.linalg.norm(y[a] - y[b]) - np.linalg.norm(x[a] - x[b])) < 1e-9
        assert np.array_equal(y[sorted(t.left_set)], x[sorted(t.left_set)])


def test_apply_torsions_is_sequential():
    lig = prepare_ligand("CCCCCC")
    x = lig.coords
    angles = [0.3, -1.1, 2.0]
    step = x
    for t, ang in zip(lig.torsions, angles):
        step = apply_torsion(step, t, ang)
    assert np.array_equal(apply_torsions(x, lig.torsions, angles), step)
    with pytest.raises(ValueError):
        apply_torsions(x, lig.torsions, angles[:2])


# -- rigid transforms ----------------------------------------------------------------


def test_identity_transform():
    x = prepare_ligand("CCO").coords
    assert np.array_equal(apply_rigid(x, RigidTransform.identity()), x)


def test_translation_moves_centroid():
    x = prepare_ligand("CCO").coords
    y = apply_rigid(x, RigidTransform(translation=(1.0, -2.0, 3.5)))
    assert np.allclose(centroid(y) - centroid(x), [1.0, -2.0, 3.5], atol=1e-12)
    assert np.allclose(y[1:] - y[:-1], x[1:] - x[:-1], atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(t=transforms())
def test_transform_inverse(t):
    x = prepare_ligand("CC(C)C(=O)O").coords
    back = apply_rigid(apply_rigid(x, t), t.inverse())
    assert np.abs(back - x).max() < 1e-9


@settings(max_examples=80, deadline=None)
@given(t=transforms())
def test_rigid_preserves_distances(t):
    x = prepare_ligand("c1ccccc1CCO").coords
    y = apply_rigid(x, t)
    d0 = internal_distance_sum(x)
    assert abs(internal_distance_sum(y) - d0) <= 1e-9 * d0


@settings(max_examples=60, deadline=None)
@given(a=transforms(), b=transforms(), c=transforms())
def test_composition_associative_and_unit(a, b, c):
    x = prepare_ligand("CCCO").coords
    left = a.compose(b).compose(c)
    right = a.compose(b.compose(c))
    assert np.abs(apply_rigid(x, left) - apply_rigid(x, right)).max() < 1e-9
    assert np.abs(apply_rigid(x, a.compose(b)) - apply_rigid(apply_rigid(x, b), a)).max() < 1e-9
    assert abs(np.linalg.norm(left.rotation) - 1.0) < 1e-9


# -- metrics ---------------------------------------------------------------------


def test_distance_sum_small_cases():
    assert internal_distance_sum(np.array([[0, 0, 0], [1.54, 0, 0]])) == pytest.approx(1.54)
    tri = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])
    assert internal_distance_sum(tri) == pytest.approx(3.0)


def test_distance_sum_matches_double_loop():
    x = np.random.default_rng(7).normal(size=(10, 3))
    ref = 0.0
    for i in range(10):
        for j in range(i + 1, 10):
            ref += math.sqrt(sum((x[i][k] - x[j][k]) ** 2 for k in range(3)))
    assert internal_distance_sum(x) == pytest.approx(ref, rel=1e-12)


def test_rmsd_cases():
    x = np.random.default_rng(3).normal(size=(8, 3))
    assert rmsd(x, x) == 0.0
    assert rmsd(x, x + [3.0, 0.0, 0.0]) == pytest.approx(3.0)
    y = np.random.default_rng(4).normal(size=(8, 3))
    ref = math.sqrt(sum(sum((x[i][k] - y[i][k]) ** 2 for k in range(3)) for i in range(8)) / 8)
    assert rmsd(x, y) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        rmsd(x, y[:7])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rmsd_is_a_metric(seed):
    a, b, c = np.random.default_rng(seed).normal(scale=3.0, size=(3, 6, 3))
    assert rmsd(a, b) >= 0
    assert rmsd(a, b) == pytest.approx(rmsd(b, a))
    assert rmsd(a, c) <= rmsd(a, b) + rmsd(b, c) + 1e-12
