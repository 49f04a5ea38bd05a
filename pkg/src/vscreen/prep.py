"""SMILES to dock-ready ligand: hydrogens, 3D coordinates, torsions, flattening."""

from __future__ import annotations

from .dock.search import flatten
from .geometry.embed import embed_3d
from .geometry.hydrogens import add_hydrogens
from .molmodel.codec import decode_record, encode_record
from .molmodel.graph import detect_torsions
from .molmodel.smiles import parse_smiles
from .molmodel.types import Ligand


def prepare_ligand(smiles: str) -> Ligand:
    ligand = add_hydrogens(parse_smiles(smiles))
    ligand = ligand.with_positions(embed_3d(ligand))
    return detect_torsions(ligand)


def prepare_record(smiles: str) -> bytes:
    """The binary record a library file stores for ``smiles``: prepared and flattened."""
    ligand = prepare_ligand(smiles)
    flat, _ = flatten(ligand)
    return encode_record(ligand.with_positions(flat))


def prepare_for_docking(smiles: str) -> Ligand:
    """The ligand exactly as a docker decodes it from a library file.

    Coordinates pass through the record's float32 storage, so docking the
    result matches docking the stored record bit for bit.
    """
    return decode_record(prepare_record(smiles))[0]
