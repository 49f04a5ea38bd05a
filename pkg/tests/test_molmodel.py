from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vscreen.molmodel import (
    Atom,
    Bond,
    BondOrder,
    CorruptStreamError,
    DisconnectedMoleculeError,
    Element,
    Ligand,
    Mol2Error,
    SmilesError,
    UnsupportedFeatureError,
    decode_record,
    detect_torsions,
    encode_record,
    find_record_start,
    parse_smiles,
    read_ligand_file,
    read_mol2,
    smiles_features,
    write_ligand_file,
    write_mol2,
)
from vscreen.molmodel.codec import (
    HEADER_SIZE,
    BadSyncError,
    LengthMismatchError,
    TruncatedRecordError,
    UnknownVersionError,
    iter_records,
)
from vscreen.molmodel.graph import bridge_bonds, cyclomatic_number, side_of
from vscreen.prep import prepare_ligand

LIBRARY = [
    "CCO",
    "C1CCCCC1",
    "CC(C)C(=O)O",
    "c1ccccc1",
    "CCCC",
    "c1ccc2ccccc2c1",
    "CC(=O)Nc1ccc(O)cc1",
    "CS(=O)(=O)N",
    "C#CCBr",
    "c1ccsc1CCl",
    "OCC1CC(N)CC1",
    "FC(F)(F)c1ccncc1",
]


def float32_ligand(smiles: str) -> Ligand:
    """A prepared ligand whose coordinates are exactly representable in the record."""
    lig = prepare_ligand(smiles)
    return lig.with_positions(lig.coords.astype(np.float32).astype(np.float64))


# -- SMILES --------------------------------------------------------------------


def test_ethanol_graph():
    lig = parse_smiles("CCO")
    assert [a.element for a in lig.atoms] == [Element.C, Element.C, Element.O]
    assert len(lig.bonds) == 2
    assert all(b.order is BondOrder.SINGLE for b in lig.bonds)
    assert np.all(lig.coords == 0.0)
    assert lig.torsions == ()


def test_cyclohexane_single_ring():
    lig = parse_smiles("C1CCCCC1")
    assert lig.n_atoms == 6 and len(lig.bonds) == 6
    assert cyclomatic_number(lig.n_atoms, lig.bonds) == 1


def test_isobutyric_acid_counts_match_reference_toolkit():
    # counts taken from an independent cheminformatics toolkit
    lig = parse_smiles("CC(C)C(=O)O")
    assert lig.n_heavy == 6
    assert len(lig.bonds) == 5
    assert sum(b.order is BondOrder.DOUBLE for b in lig.bonds) == 1


def test_aromatic_ring_bonds():
    lig = parse_smiles("c1ccccc1")
    assert all(b.order is BondOrder.AROMATIC for b in lig.bonds)
    assert len(lig.bonds) == 6


def test_two_letter_halogens_and_ring_bond_symbols():
    lig = parse_smiles("ClCC=1CC1Br")
    assert lig.atoms[0].element is Element.Cl
    assert lig.atoms[-1].element is Element.Br
    ring = [b for b in lig.bonds if {b.a, b.b} == {2, 4}]
    assert ring and ring[0].order is BondOrder.DOUBLE


@pytest.mark.parametrize(
    "text, feature",
    [
        ("C[NH3+]", "bracket atom"),
        ("C[C@H](O)N", "bracket atom"),
        ("F/C=C/F", "bond stereochemistry"),
        ("C%10CC%10", "two-digit ring closure"),
        ("*C", "wildcard atom"),
    ],
)
def test_unsupported_features_are_named(text, feature):
    with pytest.raises(UnsupportedFeatureError) as info:
        parse_smiles(text)
    assert info.value.feature == feature


@pytest.mark.parametrize("text, offset", [("CC(", 3), ("C)C", 1), ("C1CC", 1), ("CX", 1), ("", 0)])
def test_syntax_errors_carry_offset(text, offset):
    with pytest.raises(SmilesError) as info:
        parse_smiles(text)
    assert not isinstance(info.value, UnsupportedFeatureError)
    assert info.value.offset == offset


def test_disconnected_molecule_rejected():
    with pytest.raises(DisconnectedMoleculeError):
        parse_smiles("CC.O")


@pytest.mark.parametrize(
    "text, expected",
    [
        ("CCO", (3, 0, 2, 0, 6, 0)),
        ("C1CCCCC1", (6, 1, 0, 6, 0, 0)),
        ("C1CCCCC1CC", (8, 1, 2, 8, 16, 2)),
    ],
)
def test_features(text, expected):
    assert tuple(smiles_features(text)) == expected


def _brute_rings_and_chains(lig: Ligand) -> tuple[int, int]:
    # bridges found by deleting each bond and checking connectivity by flood fill
    chains = 0
    for idx, bond in enumerate(lig.bonds):
        if bond.b not in side_of(lig.n_atoms, lig.bonds, idx, bond.a):
            chains += 1
    seen, comps = set(), 0
    for start in range(lig.n_atoms):
        if start not in seen:
            comps += 1
            seen |= side_of(lig.n_atoms, lig.bonds, -1, start)
    return len(lig.bonds) - lig.n_atoms + comps, chains


@pytest.mark.parametrize("text", LIBRARY)
def test_features_agree_with_graph_oracle(text):
    lig = parse_smiles(text)
    rings, chains = _brute_rings_and_chains(lig)
    f = smiles_features(text)
    assert (f.n_rings, f.n_chains) == (rings, chains)
    assert f.heavy_x_rings == f.n_heavy * f.n_rings
    assert f.rings_x_chains == f.n_rings * f.n_chains


def test_features_deterministic():
    assert smiles_features("CC(=O)Nc1ccc(O)cc1") == smiles_features("CC(=O)Nc1ccc(O)cc1")


# -- torsions -------------------------------------------------------------------


@pytest.mark.parametrize("text, count", [("CCO", 0), ("c1ccccc1", 0), ("CCCC", 1), ("C1CCCCC1CC", 1), ("CCCCC", 2)])
def test_torsion_counts(text, count):
    assert detect_torsions(parse_smiles(text)).n_torsions == count
    assert prepare_ligand(text).n_torsions == count


def test_butane_torsion_is_central_bond():
    lig = detect_torsions(parse_smiles("CCCC"))
    (t,) = lig.torsions
    assert {lig.bonds[t.bond_index].a, lig.bonds[t.bond_index].b} == {1, 2}
    assert t.left_set == {0, 1} and t.right_set == {2, 3}


@pytest.mark.parametrize("text", LIBRARY)
def test_torsion_partition(text):
    lig = prepare_ligand(text)
    everything = frozenset(range(lig.n_atoms))
    for t in lig.torsions:
        assert t.left_set | t.right_set == everything
        assert not t.left_set & t.right_set
        a, b = t.axis
        assert a in t.left_set and b in t.right_set
        assert side_of(lig.n_atoms, lig.bonds, t.bond_index, a) == t.left_set
        assert t.bond_index in bridge_bonds(lig.n_atoms, lig.bonds)


def test_torsion_order_is_ascending_bond_index():
    lig = prepare_ligand("CCCCCCCC")
    idx = [t.bond_index for t in lig.torsions]
    assert idx == sorted(idx) and len(idx) == 5


# -- binary codec -----------------------------------------------------------------


@pytest.mark.parametrize("text", LIBRARY)
def test_record_round_trip(text):
    lig = float32_ligand(text)
    rec = encode_record(lig)
    back, nxt = decode_record(rec)
    assert nxt == len(rec)
    assert back == lig


def test_record_length_field_matches_bytes():
    rec = encode_record(parse_smiles("CCO"))
    assert int.from_bytes(rec[2:6], "little") == len(rec) - 6
    # 6 prefix + 2 + 3 name + 6 counts + 3 atoms * 14 + 2 bonds * 5
    assert len(rec) == 69


def test_element_codes_survive_codec():
    lig = Ligand(
        "x",
        tuple(Atom(e, (float(i), 0.0, 0.0)) for i, e in enumerate(Element)),
    )
    back, _ = decode_record(encode_record(lig))
    assert [a.element for a in back.atoms] == list(Element)


def test_decode_off_marker_is_bad_sync():
    rec = encode_record(parse_smiles("CCO"))
    with pytest.raises(BadSyncError):
        decode_record(rec, 1)


def test_decode_truncated_and_length_mismatch():
    rec = encode_record(parse_smiles("CCO"))
    with pytest.raises(TruncatedRecordError):
        decode_record(rec[:-1])
    bad = bytearray(rec)
    bad[2:6] = (len(rec) - 6 - 5).to_bytes(4, "little")
    with pytest.raises(LengthMismatchError):
        decode_record(bytes(bad))


def test_unknown_file_version(tmp_path):
    path = tmp_path / "lib.xslb"
    write_ligand_file(path, [parse_smiles("CCO")])
    data = bytearray(path.read_bytes())
    data[4] = 7
    with pytest.raises(UnknownVersionError):
        list(iter_records(bytes(data)))


def three_record_stream() -> tuple[bytes, list[int]]:
    recs = [encode_record(parse_smiles(s)) for s in ("CCO", "c1ccccc1", "CC(C)C(=O)O")]
    return b"".join(recs), [0, len(recs[0]), len(recs[0]) + len(recs[1])]


def test_find_record_start_known_offsets():
    buf, starts = three_record_stream()
    # lengths computed by hand: 69 and 136 bytes
    assert starts == [0, 69, 205]
    assert find_record_start(buf, 0) == 0
    assert find_record_start(buf, 70) == 205
    assert find_record_start(buf, 69) == 69
    assert find_record_start(buf, 206) == len(buf)


def test_find_record_start_with_file_header(tmp_path):
    path = tmp_path / "three.xslb"
    offsets = write_ligand_file(path, [parse_smiles(s) for s in ("CCO", "c1ccccc1", "CC(C)C(=O)O")])
    assert offsets == [HEADER_SIZE, HEADER_SIZE + 69, HEADER_SIZE + 205]
    data = path.read_bytes()
    assert find_record_start(data, HEADER_SIZE + 100) == HEADER_SIZE + 205
    assert [lig.name for lig in read_ligand_file(path)] == ["CCO", "c1ccccc1", "CC(C)C(=O)O"]


def test_find_record_start_corrupt_stream():
    junk = b"\x00" * 10 + b"\xd0\xc5" + b"\xff" * 20
    with pytest.raises(CorruptStreamError):
        find_record_start(junk, 0)
    assert find_record_start(b"\x00" * 32, 0) == 32


def test_find_record_start_ignores_planted_marker():
    # marker bytes inside a record body must not be mistaken for a record start
    rec = encode_record(Ligand("C", (Atom(Element.C),)))
    tricky = bytearray(rec)
    tricky[-14:-12] = b"\xd0\xc5"  # marker bytes inside the atom coordinates
    buf = bytes(tricky) + encode_record(parse_smiles("CCO"))
    assert find_record_start(buf, 1) == len(tricky)


@settings(max_examples=60, deadline=None)
@given(
    picks=st.lists(st.sampled_from(LIBRARY), min_size=1, max_size=12),
    cut=st.floats(0.0, 1.0),
)
def test_find_record_start_lands_on_boundary(picks, cut):
    recs = [encode_record(float32_ligand(s)) for s in picks]
    starts = np.cumsum([0] + [len(r) for r in recs])
    buf = b"".join(recs)
    offset = int(cut * len(buf))
    expected = next((int(s) for s in starts if s >= offset), len(buf))
    assert find_record_start(buf, offset) == expected


def test_find_record_start_partial_buffer_requests_more():
    buf, starts = three_record_stream()
    with pytest.raises(TruncatedRecordError):
        find_record_start(buf[:100], 1, eof=False)
    with pytest.raises(TruncatedRecordError):
        find_record_start(buf[:150], 0, eof=False)
    assert find_record_start(buf[:210], 0, eof=False) == 0


# -- Mol2 ------------------------------------------------------------------------


@pytest.mark.parametrize("text", LIBRARY)
def test_mol2_round_trip(text):
    lig = prepare_ligand(text)
    back = read_mol2(write_mol2(lig))
    assert back.name == lig.name
    assert back.bonds == lig.bonds
    assert [a.element for a in back.atoms] == [a.element for a in lig.atoms]
    assert np.abs(back.coords - lig.coords).max() <= 5e-5 + 1e-12


def test_mol2_count_mismatch():
    text = write_mol2(prepare_ligand("CC"))
    lines = text.splitlines()
    counts_line = lines.index("@<TRIPOS>MOLECULE") + 2
    n_atoms, rest = lines[counts_line].split(" ", 1)
    lines[counts_line] = f"{int(n_atoms) + 1} {rest}"
    with pytest.raises(Mol2Error, match="declares"):
        read_mol2("\n".join(lines))


def test_mol2_malformed_header():
    with pytest.raises(Mol2Error, match="malformed"):
        read_mol2("@<TRIPOS>MOLECULE\nx\n1 0\n@ATOM\n")


def test_mol2_larger_than_binary_for_big_ligands():
    for text in ("CC(=O)Nc1ccc(O)cc1", "CCCCCCCCCCCC", "OCC1CC(N)CC1CCCC"):
        lig = prepare_ligand(text)
        assert lig.n_atoms >= 20
        assert len(write_mol2(lig).encode()) >= 3 * len(encode_record(lig))


def test_bond_rejects_self_loop():
    with pytest.raises(ValueError):
        Bond(1, 1)


def test_ligand_rejects_duplicate_bond():
    atoms = (Atom(Element.C), Atom(Element.C))
    with pytest.raises(ValueError, match="duplicate"):
        Ligand("CC", atoms, (Bond(0, 1), Bond(1, 0)))
