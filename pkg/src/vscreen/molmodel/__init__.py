from .codec import (
    CorruptStreamError,
    RecordError,
    decode_record,
    encode_record,
    find_record_start,
    read_ligand_file,
    write_ligand_file,
)
from .graph import detect_torsions
from .mol2 import Mol2Error, read_mol2, write_mol2
from .smiles import (
    DisconnectedMoleculeError,
    FeatureVector,
    SmilesError,
    UnsupportedFeatureError,
    parse_smiles,
    smiles_features,
)
from .types import Atom, Bond, BondOrder, Element, Ligand, Pocket, TorsionalBond

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "CorruptStreamError",
    "DisconnectedMoleculeError",
    "Element",
    "FeatureVector",
    "Ligand",
    "Mol2Error",
    "Pocket",
    "RecordError",
    "SmilesError",
    "TorsionalBond",
    "UnsupportedFeatureError",
    "decode_record",
    "detect_torsions",
    "encode_record",
    "find_record_start",
    "parse_smiles",
    "read_ligand_file",
    "read_mol2",
    "smiles_features",
    "write_ligand_file",
    "write_mol2",
]
