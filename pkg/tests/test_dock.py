from __future__ import annotations

import math

import numpy as np
import pytest
import reference
from hypothesis import given, settings
from hypothesis import strategies as st

from vscreen import _kernels
from vscreen.dock import (
    OracleLimitError,
    PocketError,
    Pose,
    ScoringConfig,
    build_pocket,
    chem_score,
    cluster_and_select,
    cluster_assignments,
    dock_and_score,
    exhaustive_dock,
    fibonacci_axes,
    flatten,
    geo_score,
    initial_poses,
    local_search,
    materialize,
    read_pocket,
    write_pocket,
)
from vscreen.dock.search import Searcher, heavy_centroid, start_transforms
from vscreen.geometry import RigidTransform, apply_rigid, apply_torsions, internal_distance_sum
from vscreen.molmodel import Atom, Element, Ligand, Pocket, detect_torsions, parse_smiles
from vscreen.prep import prepare_ligand


def grid_pocket(values, origin=(0.0, 0.0, 0.0), spacing=1.0, protein=()):
    values = np.asarray(values, dtype=float)
    elements = tuple(e for e, _ in protein)
    coords = np.array([x for _, x in protein], dtype=float).reshape(-1, 3)
    return Pocket("t", origin, spacing, values.shape, values, elements, coords)


def gaussian_pocket(seed, half=5.0, spacing=0.5, bumps=3):
    rng = np.random.default_rng(seed)
    n = int(round(2 * half / spacing)) + 1
    ax = -half + spacing * np.arange(n)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1)
    vals = np.zeros(pts.shape[:3])
    for _ in range(bumps):
        c = rng.uniform(-2.5, 2.5, 3)
        vals += rng.uniform(0.5, 1.0) * np.exp(-((pts - c) ** 2).sum(-1) / 2.0)
    return Pocket(f"g{seed}", (-half,) * 3, spacing, (n, n, n), vals)


def single_atom(x=(0.0, 0.0, 0.0), element=Element.C):
    return Ligand("C", (Atom(element, tuple(x)),))


def rigid(smiles):
    lig = parse_smiles(smiles)
    from vscreen.geometry import embed_3d

    return lig.with_positions(embed_3d(lig))


# -- kernels against plain numpy ------------------------------------------------------


@pytest.mark.parametrize("smiles", ["CCCCCC", "c1ccccc1CCN", "OCC1CC(N)CC1CC(=O)O"])
def test_materialize_matches_numpy(smiles):
    lig = prepare_ligand(smiles)
    rng = np.random.default_rng(1)
    for _ in range(5):
        angles = rng.uniform(-math.pi, math.pi, lig.n_torsions)
        q = rng.normal(size=4)
        transform = RigidTransform(tuple(q / np.linalg.norm(q)), tuple(rng.normal(size=3)))
        ref = apply_rigid(apply_torsions(lig.coords, lig.torsions, angles), transform)
        assert np.abs(materialize(lig, angles, transform) - ref).max() < 1e-12


def test_distance_sum_kernel_matches_numpy():
    x = np.random.default_rng(2).normal(size=(25, 3))
    assert _kernels.distance_sum(x) == pytest.approx(internal_distance_sum(x), rel=1e-13)


def test_geo_score_matches_scipy_interpolation():
    pocket = gaussian_pocket(4)
    lig = prepare_ligand("CC(=O)Nc1ccc(O)cc1")
    rng = np.random.default_rng(5)
    for _ in range(20):
        conf = lig.coords - lig.coords.mean(axis=0) + rng.uniform(-6, 6, 3)
        assert geo_score(pocket, lig, conf) == pytest.approx(reference.geo(pocket, lig, conf), abs=1e-10)


# -- pocket construction and scoring ------------------------------------------------------


def test_build_pocket_clash_and_contact():
    pocket = build_pocket([Element.C], [[0.0, 0.0, 0.0]], (0.0, 0.0, 0.0), 5.0, 0.5)
    i0 = 10  # node at the center
    assert np.allclose(pocket.node(i0, i0, i0), 0.0)
    assert pocket.values[i0 + 2, i0, i0] == -10.0  # 1.0 A away
    assert pocket.values[i0 + 6, i0, i0] == 1.0  # 3.0 A away
    assert pocket.values[i0 + 9, i0, i0] == 0.0  # 4.5 A away


def test_build_pocket_counts_match_voxel_loop():
    protein = [[0.3, -0.2, 0.1], [2.1, 1.0, -0.7]]
    center, radius, spacing = np.array([1.0, 0.5, 0.0]), 4.0, 0.5
    pocket = build_pocket([Element.C, Element.O], protein, center, radius, spacing)
    counts = {-10.0: 0, 0.0: 0, 1.0: 0}
    n = int(math.floor(2 * radius / spacing)) + 1
    for i in range(n):
        for j in range(n):
            for k in range(n):
                x = center - radius + spacing * np.array([i, j, k])
                d = min(math.dist(x, p) for p in protein)
                if d < 1.5:
                    counts[-10.0] += 1
                elif d <= 4.0 and math.dist(x, center) <= radius:
                    counts[1.0] += 1
                else:
                    counts[0.0] += 1
    got = {v: int((pocket.values == v).sum()) for v in counts}
    assert got == counts


def test_build_pocket_rejects_bad_inputs():
    with pytest.raises(PocketError):
        build_pocket([], np.zeros((0, 3)), (0, 0, 0), 4.0, 0.5)
    with pytest.raises(PocketError):
        build_pocket([Element.C], [[0, 0, 0]], (0, 0, 0), 4.0, 2.0)


def test_geo_score_outside_box():
    pocket = grid_pocket(np.ones((3, 3, 3)))
    lig = prepare_ligand("CCO")
    conf = lig.coords + 100.0
    assert geo_score(pocket, lig, conf) == -10.0 * lig.n_heavy


def test_geo_score_on_node():
    values = np.zeros((3, 3, 3))
    values[1, 2, 1] = 1.0
    pocket = grid_pocket(values, origin=(-1.0, -1.0, -1.0))
    assert geo_score(pocket, single_atom(), [[0.0, 1.0, 0.0]]) == 1.0


def test_geo_score_hand_trilinear():
    values = np.zeros((2, 2, 2))
    values[1, 0, 0] = 1.0
    values[1, 1, 1] = 0.8
    pocket = grid_pocket(values, spacing=2.0)
    # midpoint of the (0,0,0)-(1,0,0) edge: half the +1 corner
    assert geo_score(pocket, single_atom(), [[1.0, 0.0, 0.0]]) == pytest.approx(0.5, abs=1e-15)
    # fractional (0.25, 0.5, 0.75): 0.25*0.5*0.25*1.0 + 0.25*0.5*0.75*0.8
    assert geo_score(pocket, single_atom(), [[0.5, 1.0, 1.5]]) == pytest.approx(0.03125 + 0.075, abs=1e-15)


def test_geo_score_counts_heavy_atoms_only():
    pocket = grid_pocket(np.ones((5, 5, 5)), origin=(-2.0, -2.0, -2.0))
    lig = prepare_ligand("CCO")
    conf = lig.coords - lig.coords.mean(axis=0)
    assert geo_score(pocket, lig, conf) == pytest.approx(3.0)


def test_chem_score_cases():
    pocket = grid_pocket(np.zeros((2, 2, 2)), protein=[(Element.C, (0.0, 0.0, 0.0))])
    assert chem_score(pocket, single_atom((10.0, 0.0, 0.0)), [[10.0, 0.0, 0.0]]) == 0.0
    assert chem_score(pocket, single_atom(), [[3.0, 0.0, 0.0]]) == pytest.approx(0.4)
    assert chem_score(pocket, single_atom(), [[4.0, 0.0, 0.0]]) == pytest.approx(0.2)
    assert chem_score(pocket, single_atom(), [[1.0, 0.0, 0.0]]) == pytest.approx(0.4 - 5.0)


def test_chem_score_matches_double_loop():
    protein = [(Element.O, (0.0, 0.0, 0.0)), (Element.S, (3.0, 1.0, 0.0))]
    pocket = grid_pocket(np.zeros((2, 2, 2)), protein=protein)
    lig = Ligand(
        "x",
        (Atom(Element.C, (1.2, 2.5, 0.3)), Atom(Element.N, (2.0, 3.2, 1.1)), Atom(Element.Cl, (3.9, 0.2, 0.0))),
    )
    rng = np.random.default_rng(11)
    for _ in range(25):
        conf = lig.coords + rng.normal(scale=1.2, size=3)
        assert chem_score(pocket, lig, conf) == pytest.approx(reference.chem(pocket, lig, conf), abs=1e-12)


def test_pocket_file_round_trip(tmp_path):
    pocket = build_pocket([Element.C, Element.N], [[0, 0, 0], [1.5, 2.0, -0.5]], (0.5, 0.5, 0.5), 3.0, 0.75, "site")
    path = tmp_path / "site.pkt"
    write_pocket(path, pocket)
    assert read_pocket(path) == pocket
    text = path.read_text().splitlines()
    assert text[0] == "pocket site"
    assert text[3] == "dims 9 9 9"


def test_pocket_file_grid_is_x_fastest(tmp_path):
    values = np.arange(24, dtype=float).reshape(2, 3, 4)
    path = tmp_path / "p.pkt"
    write_pocket(path, grid_pocket(values))
    flat = [float(v) for ln in path.read_text().split("grid\n")[1].split("\n") for v in ln.split()]
    assert flat[:3] == [values[0, 0, 0], values[1, 0, 0], values[0, 1, 0]]


def test_pocket_file_errors(tmp_path):
    path = tmp_path / "bad.pkt"
    path.write_text("pocket x\norigin 0 0 0\nspacing 1\ndims 2 2 2\nprotein_atoms 0\ngrid\n1 2 3\n")
    with pytest.raises(PocketError, match="grid has 3"):
        read_pocket(path)
    path.write_text("pocket x\norigin 0 0\n")
    with pytest.raises(PocketError):
        read_pocket(path)


# -- flattening ----------------------------------------------------------------------


def test_flatten_rigid_is_identity():
    lig = prepare_ligand("c1ccccc1")
    conf, angles = flatten(lig)
    assert angles == ()
    assert np.array_equal(conf, lig.coords)


@pytest.mark.parametrize("smiles", ["CCCC", "CCCO", "c1ccccc1CC", "CC(C)(C)CO", "NCC(=O)O"])
def test_flatten_single_torsion_is_exhaustive(smiles):
    lig = prepare_ligand(smiles)
    assert lig.n_torsions == 1
    conf, angles = flatten(lig)
    best, _ = reference.flatten_scan(lig, lig.coords)
    assert internal_distance_sum(conf) == pytest.approx(best, rel=1e-12)


@pytest.mark.parametrize("smiles", ["CCCCC", "OCCCO", "CCCCCC", "CC(C)CCCO"])
def test_flatten_near_exhaustive_for_small_m(smiles):
    lig = prepare_ligand(smiles)
    assert lig.n_torsions in (2, 3)
    conf, _ = flatten(lig)
    best, _ = reference.flatten_scan(lig, lig.coords)
    assert internal_distance_sum(conf) >= 0.99 * best


def test_flatten_angles_reproduce_conformation():
    lig = prepare_ligand("CC(=O)NCCCc1ccccc1")
    conf, angles = flatten(lig)
    assert all(abs(a / (2 * math.pi / 36) - round(a / (2 * math.pi / 36))) < 1e-12 for a in angles)
    assert np.abs(apply_torsions(lig.coords, lig.torsions, angles) - conf).max() < 1e-12


# -- restarts -------------------------------------------------------------------------


def test_single_restart_centered():
    lig = prepare_ligand("CC(=O)Nc1ccc(O)cc1")
    pocket = gaussian_pocket(0)
    flat, angles = flatten(lig)
    (pose,) = initial_poses(lig, flat, pocket, 1, angles)
    assert np.allclose(heavy_centroid(lig, pose.conformation), pocket.center, atol=1e-12)


def test_restarts_distinct_and_deterministic():
    lig = prepare_ligand("CCCCO")
    pocket = gaussian_pocket(0)
    flat, angles = flatten(lig)
    poses = initial_poses(lig, flat, pocket, 256, angles)
    assert len({p.transform.rotation for p in poses}) == 256
    again = initial_poses(lig, flat, pocket, 256, angles)
    assert all(a == b for a, b in zip(poses, again))
    assert all(p.torsion_angles == tuple(angles) for p in poses)


def test_restart_axes_separation():
    axes = fibonacci_axes(256)
    cos = np.clip(axes @ axes.T, -1, 1)
    np.fill_diagonal(cos, -1)
    min_sep = math.degrees(math.acos(cos.max()))
    # computed offline from the closed-form sphere points
    assert min_sep == pytest.approx(11.087473654846384, abs=1e-9)
    assert min_sep > 5.0


# -- local search -------------------------------------------------------------------------


def test_local_optimum_unchanged():
    values = np.zeros((9, 9, 9))
    values[4, 4, 4] = 1.0
    pocket = grid_pocket(values, origin=(-4.0, -4.0, -4.0))
    start = Pose(RigidTransform(), (), [[0.0, 0.0, 0.0]], 1.0)
    out = local_search(pocket, single_atom(), start)
    assert out.transform == start.transform
    assert np.array_equal(out.conformation, start.conformation)
    assert out.geo_score == 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), restart=st.integers(0, 63))
def test_local_search_never_descends(seed, restart):
    lig = prepare_ligand("CCCCO")
    pocket = gaussian_pocket(seed % 7)
    flat, angles = flatten(lig)
    start = initial_poses(lig, flat, pocket, 64, angles)[restart]
    shift = np.random.default_rng(seed).uniform(-2, 2, 3)
    moved = RigidTransform(start.transform.rotation, tuple(np.asarray(start.transform.translation) + shift))
    conf = materialize(lig, start.torsion_angles, moved)
    pose = Pose(moved, start.torsion_angles, conf, geo_score(pocket, lig, conf), None, restart)
    out = local_search(pocket, lig, pose)
    assert out.geo_score >= pose.geo_score
    assert out.geo_score == geo_score(pocket, lig, out.conformation)


@pytest.mark.parametrize("smiles, seed", [("CCCC", 1), ("CCO", 2), ("CC(C)CO", 3)])
def test_local_search_matches_reference(smiles, seed):
    lig = prepare_ligand(smiles)
    pocket = gaussian_pocket(seed)
    flat, angles = flatten(lig)
    searcher = Searcher(pocket, lig)
    for pose in initial_poses(lig, flat, pocket, 8, angles):
        outcome = searcher.run(pose)
        q, t, a, score, iters = reference.local_search(
            pocket, lig, pose.transform.rotation, pose.transform.translation, pose.torsion_angles
        )
        assert outcome.iterations == iters
        assert outcome.pose.geo_score == pytest.approx(score, abs=1e-9)
        assert np.allclose(outcome.pose.transform.translation, t, atol=1e-8)
        assert np.allclose(outcome.pose.torsion_angles, a, atol=1e-8)


def test_evaluation_count_per_iteration():
    lig = prepare_ligand("CCCCCC")
    pocket = grid_pocket(np.zeros((41, 41, 41)), origin=(-20.0,) * 3)
    flat, angles = flatten(lig)
    (pose,) = initial_poses(lig, flat, pocket, 1, angles)
    outcome = Searcher(pocket, lig).run(pose)
    # flat field: nothing improves, the step halves until it drops below 0.1 A
    assert outcome.iterations == 4
    assert outcome.evaluations == lig.n_heavy * (1 + 4 * (12 + 2 * lig.n_torsions))


def test_rigid_micro_ligand_close_to_oracle():
    rng = np.random.default_rng(104)
    v = rng.normal(size=(40, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    v = v[v[:, 2] > -0.2]
    protein = v * 5.0
    pocket = build_pocket([Element.C] * len(protein), protein, (0, 0, 0), 4.0, 0.5)
    lig = rigid("CCO")
    flat, angles = flatten(lig)
    searcher = Searcher(pocket, lig)
    best = max(searcher.run(p).pose.geo_score for p in initial_poses(lig, flat, pocket, 256, angles))
    oracle = exhaustive_dock(pocket, lig)
    assert best <= oracle.geo_score + 1e-9
    assert best >= 0.95 * oracle.geo_score


# -- clustering ------------------------------------------------------------------------------


def fake_pose(conf, score, restart):
    return Pose(RigidTransform(), (), conf, score, None, restart)


def test_cluster_all_close():
    base = np.zeros((3, 3))
    poses = [fake_pose(base + 0.1 * i, float(s), i) for i, s in enumerate([3, 9, 1, 5])]
    out = cluster_and_select(poses, 3.0, 10)
    assert [p.restart for p in out] == [1, 3, 0, 2]
    assert len(set(cluster_assignments(poses, 3.0))) == 1


def test_cluster_all_far():
    poses = [fake_pose(np.full((2, 3), 10.0 * i), float(s), i) for i, s in enumerate([3, 9, 1, 5])]
    out = cluster_and_select(poses, 3.0, 2)
    assert [p.restart for p in out] == [1, 3]
    assert cluster_assignments(poses, 3.0) == [0, 1, 2, 3]


def test_cluster_ties_use_restart_index():
    poses = [fake_pose(np.full((1, 3), 10.0 * i), 1.0, i) for i in (2, 0, 1)]
    assert [p.restart for p in cluster_and_select(poses, 1.0, 3)] == [0, 1, 2]


def test_cluster_twelve_constructed_poses():
    # points on a line: known pairwise RMSDs = |x_i - x_j| for single-atom poses
    xs = [0.0, 1.0, 2.5, 3.2, 5.9, 6.0, 8.8, 9.1, 12.0, 12.5, 15.2, 18.0]
    scores = [5.0, 7.0, 6.5, 1.0, 7.0, 2.0, 9.0, 3.0, 4.0, 8.0, 0.5, 6.5]
    poses = [fake_pose([[x, 0.0, 0.0]], s, i) for i, (x, s) in enumerate(zip(xs, scores))]
    leaders, order = reference.leader_clusters([p.conformation for p in poses], scores, 3.0)
    assert cluster_assignments(poses, 3.0) == leaders
    assert [p.restart for p in cluster_and_select(poses, 3.0, 12)] == order
    assert [p.restart for p in cluster_and_select(poses, 3.0, 5)] == order[:5]


def test_cluster_heavy_mask():
    a = np.zeros((2, 3))
    b = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    poses = [fake_pose(a, 2.0, 0), fake_pose(b, 1.0, 1)]
    assert cluster_assignments(poses, 3.0) == [0, 1]
    assert cluster_assignments(poses, 3.0, [True, False]) == [0, 0]


def test_cluster_empty():
    with pytest.raises(ValueError):
        cluster_and_select([], 3.0, 30)


# -- full dock --------------------------------------------------------------------------------


def test_single_atom_finds_best_region():
    n = 17
    ax = -4.0 + 0.5 * np.arange(n)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1)
    peak = np.array([1.5, -1.0, 2.0])
    values = 3.0 * np.exp(-((pts - peak) ** 2).sum(-1) / 4.0)
    pocket = grid_pocket(values, origin=(-4.0,) * 3, spacing=0.5, protein=[(Element.C, (1.5, -1.0, 5.5))])
    result = dock_and_score(pocket, single_atom())
    assert np.linalg.norm(result.best_pose.conformation[0] - peak) <= 0.5
    assert result.poses_evaluated == 256


def test_dock_is_deterministic():
    lig = prepare_ligand("CC(=O)Nc1ccc(O)cc1")
    rng = np.random.default_rng(3)
    v = rng.normal(size=(50, 3))
    protein = v / np.linalg.norm(v, axis=1)[:, None] * 6.0
    pocket = build_pocket([Element.C, Element.O] * 25, protein, (0, 0, 0), 7.0, 0.5)
    a = dock_and_score(pocket, lig)
    b = dock_and_score(pocket, lig)
    assert a.best_pose == b.best_pose
    assert (a.best_score, a.scoring_evals, a.smiles) == (b.best_score, b.scoring_evals, b.smiles)
    assert a.best_score == max(p.chem_score for p in a.rescored)
    assert len(a.rescored) == 30
    assert a.rescored[0].geo_score == max(p.geo_score for p in a.rescored)


def test_dock_scores_recompute_from_pose():
    lig = prepare_ligand("CCCCCCO")
    pocket = gaussian_pocket(9)
    res = dock_and_score(pocket, lig, ScoringConfig(restarts=16, rescored=4))
    pose = res.best_pose
    assert np.array_equal(materialize(lig, pose.torsion_angles, pose.transform), pose.conformation)
    assert geo_score(pocket, lig, pose.conformation) == pose.geo_score
    assert chem_score(pocket, lig, pose.conformation) == res.best_score


def test_scoring_config_validation():
    with pytest.raises(ValueError):
        ScoringConfig(restarts=0)
    with pytest.raises(ValueError):
        ScoringConfig(rescored=0)
    with pytest.raises(ValueError):
        ScoringConfig(rmsd_threshold=0.0)


# -- oracle -----------------------------------------------------------------------------------


def test_oracle_single_atom_hits_grid_max():
    rng = np.random.default_rng(8)
    values = rng.uniform(-1, 1, size=(13, 13, 13))
    values[9, 3, 7] = 2.0
    pocket = grid_pocket(values, origin=(-3.0,) * 3, spacing=0.5)
    pose = exhaustive_dock(pocket, single_atom())
    assert np.array_equal(pose.conformation[0], pocket.node(9, 3, 7))
    assert pose.geo_score == 2.0


def test_oracle_tie_prefers_first_lattice_point():
    values = np.zeros((9, 9, 9))
    values[2, 4, 4] = 1.0
    values[6, 4, 4] = 1.0
    pocket = grid_pocket(values, origin=(-2.0,) * 3, spacing=0.5)
    pose = exhaustive_dock(pocket, single_atom())
    assert np.allclose(pose.conformation[0], pocket.node(2, 4, 4))


def test_oracle_limits():
    pocket = grid_pocket(np.zeros((5, 5, 5)))
    with pytest.raises(OracleLimitError):
        exhaustive_dock(pocket, rigid("CCCCCC"))
    with pytest.raises(OracleLimitError):
        exhaustive_dock(pocket, detect_torsions(rigid("CCCC")))
    with pytest.raises(OracleLimitError):
        exhaustive_dock(grid_pocket(np.zeros((18, 2, 2))), single_atom())
    with pytest.raises(OracleLimitError):
        exhaustive_dock(pocket, single_atom(), orientations=100)


@pytest.mark.parametrize("smiles", ["CC(=O)Nc1ccc(O)cc1", "CCCCCCO"])
def test_batch_search_matches_single_searches(smiles):
    lig = prepare_ligand(smiles)
    pocket = gaussian_pocket(2)
    flat, angles = flatten(lig)
    searcher = Searcher(pocket, lig)
    starts = initial_poses(lig, flat, pocket, 16, angles)
    Q, T = start_transforms(lig, flat, pocket, 16)
    batch, evals = searcher.run_batch(Q, T, angles)
    singles = [searcher.run(p) for p in starts]
    assert batch == [s.pose for s in singles]
    assert evals == sum(s.evaluations for s in singles)
