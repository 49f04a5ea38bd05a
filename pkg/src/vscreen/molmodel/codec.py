"""Compact binary ligand records (``.xslb``) and slab-safe record discovery.

File layout::

    header  b"XSLB" | version u8 (=1) | 3 zero bytes
    record  0xD0 0xC5 | record_len u32 | name_len u16 | name | n_atoms u16
            | n_bonds u16 | n_torsions u16 | atoms | bonds | torsions

All integers and floats are little-endian.  ``record_len`` counts every byte
after the length field.  Each atom is ``x y z`` as float32 plus an element
code byte and a flags byte (bit 0: heavy); each bond is ``a u16, b u16,
order u8``; each torsion is a bond index u16.  There is no padding.
"""

from __future__ import annotations

import struct
from collections.abc import Iterator

import numpy as np

from .graph import torsion_for_bond
from .types import Atom, Bond, BondOrder, Element, Ligand

MAGIC = b"XSLB"
VERSION = 1
HEADER = MAGIC + bytes([VERSION, 0, 0, 0])
HEADER_SIZE = len(HEADER)
SYNC = b"\xd0\xc5"
PREFIX_SIZE = 6  # sync marker + record_len

_U16 = struct.Struct("<H")
_LEN = struct.Struct("<I")
_COUNTS = struct.Struct("<HHH")
_ATOM = np.dtype([("xyz", "<f4", (3,)), ("element", "u1"), ("flags", "u1")])
_BOND = np.dtype([("a", "<u2"), ("b", "<u2"), ("order", "u1")])
_TORSION = np.dtype("<u2")
MAX_RECORD_LEN = 2 + 0xFFFF + _COUNTS.size + 0xFFFF * (_ATOM.itemsize + _BOND.itemsize + _TORSION.itemsize)


class RecordError(ValueError):
    """Base class for framing and decoding failures."""


class BadSyncError(RecordError):
    pass


class TruncatedRecordError(RecordError):
    pass


class LengthMismatchError(RecordError):
    pass


class UnknownVersionError(RecordError):
    pass


class CorruptStreamError(RecordError):
    pass


class InvalidContentError(RecordError):
    """Framing is intact but the payload does not describe a valid ligand."""


def encode_record(ligand: Ligand) -> bytes:
    name = ligand.name.encode("ascii")
    if max(len(name), ligand.n_atoms, len(ligand.bonds), ligand.n_torsions) > 0xFFFF:
        raise ValueError(f"ligand {ligand.name!r} is too large for the record format")
    atoms = np.zeros(ligand.n_atoms, dtype=_ATOM)
    atoms["xyz"] = ligand.coords
    atoms["element"] = [int(a.element) for a in ligand.atoms]
    atoms["flags"] = [1 if a.is_heavy else 0 for a in ligand.atoms]
    bonds = np.zeros(len(ligand.bonds), dtype=_BOND)
    bonds["a"] = [b.a for b in ligand.bonds]
    bonds["b"] = [b.b for b in ligand.bonds]
    bonds["order"] = [int(b.order) for b in ligand.bonds]
    torsions = np.array([t.bond_index for t in ligand.torsions], dtype=_TORSION)
    body = b"".join(
        (
            _U16.pack(len(name)),
            name,
            _COUNTS.pack(ligand.n_atoms, len(ligand.bonds), ligand.n_torsions),
            atoms.tobytes(),
            bonds.tobytes(),
            torsions.tobytes(),
        )
    )
    return SYNC + _LEN.pack(len(body)) + body


def record_end(buf, offset: int) -> int:
    """Validate the framing of the record at ``offset`` and return where it ends.

    Checks the sync marker, that the buffer holds the whole record, and that
    the counts inside the body account for exactly ``record_len`` bytes.
    """
    head = bytes(buf[offset : offset + 2])
    if head != SYNC[: len(head)] or (not head and offset < len(buf)):
        raise BadSyncError(f"no sync marker at offset {offset}")
    if offset + PREFIX_SIZE > len(buf):
        raise TruncatedRecordError(f"record header at {offset} runs past end of data")
    (record_len,) = _LEN.unpack_from(buf, offset + 2)
    if record_len > MAX_RECORD_LEN:
        raise LengthMismatchError(f"record at {offset} declares {record_len} bytes, more than any record can hold")
    end = offset + PREFIX_SIZE + record_len
    if end > len(buf):
        raise TruncatedRecordError(f"record at {offset} needs {record_len} bytes, data ends at {len(buf)}")
    pos = offset + PREFIX_SIZE
    if record_len < 2:
        raise LengthMismatchError(f"record at {offset} is too short")
    (name_len,) = _U16.unpack_from(buf, pos)
    pos += 2 + name_len
    if pos + _COUNTS.size > end:
        raise LengthMismatchError(f"record at {offset}: name overruns declared length")
    n_atoms, n_bonds, n_torsions = _COUNTS.unpack_from(buf, pos)
    pos += _COUNTS.size
    pos += n_atoms * _ATOM.itemsize + n_bonds * _BOND.itemsize + n_torsions * _TORSION.itemsize
    if pos != end:
        raise LengthMismatchError(f"record at {offset}: body is {pos - offset - PREFIX_SIZE} bytes, length says {record_len}")
    return end


def decode_record(buf, offset: int = 0) -> tuple[Ligand, int]:
    """Decode the record starting at ``offset``; return it and the next offset."""
    end = record_end(buf, offset)
    pos = offset + PREFIX_SIZE
    (name_len,) = _U16.unpack_from(buf, pos)
    pos += 2
    try:
        name = bytes(buf[pos : pos + name_len]).decode("ascii")
    except UnicodeDecodeError as exc:
        raise InvalidContentError(f"record at {offset}: name is not ASCII") from exc
    pos += name_len
    n_atoms, n_bonds, n_torsions = _COUNTS.unpack_from(buf, pos)
    pos += _COUNTS.size
    atoms = np.frombuffer(buf, dtype=_ATOM, count=n_atoms, offset=pos)
    pos += atoms.nbytes
    bonds = np.frombuffer(buf, dtype=_BOND, count=n_bonds, offset=pos)
    pos += bonds.nbytes
    torsions = np.frombuffer(buf, dtype=_TORSION, count=n_torsions, offset=pos)

    try:
        atom_list = []
        for rec in atoms:
            element = Element(int(rec["element"]))
            if bool(rec["flags"] & 1) != (element is not Element.H):
                raise InvalidContentError(f"record at {offset}: heavy flag disagrees with element")
            atom_list.append(Atom(element, tuple(float(c) for c in rec["xyz"])))
        bond_list = tuple(Bond(int(b["a"]), int(b["b"]), BondOrder(int(b["order"]))) for b in bonds)
        ligand = Ligand(name, tuple(atom_list), bond_list)
        torsion_list = tuple(torsion_for_bond(ligand, int(t)) for t in torsions)
    except (ValueError, IndexError) as exc:
        if isinstance(exc, RecordError):
            raise
        raise InvalidContentError(f"record at {offset}: invalid content ({exc})") from exc
    return ligand.with_torsions(torsion_list), end


def _chains(buf, offset: int, eof: bool) -> bool:
    try:
        end = record_end(buf, offset)
    except TruncatedRecordError:
        if eof:
            return False
        raise
    except RecordError:
        return False
    if end == len(buf):
        if eof:
            return True
        raise TruncatedRecordError("cannot confirm record chain before end of buffer")
    if not eof and end + PREFIX_SIZE > len(buf):
        raise TruncatedRecordError("cannot confirm record chain before end of buffer")
    # the follower must itself be a complete, well-formed record
    try:
        record_end(buf, end)
    except TruncatedRecordError:
        if eof:
            return False
        raise
    except RecordError:
        return False
    return True


def find_record_start(buf, slab_start: int, slab_stop: int | None = None, *, eof: bool = True) -> int:
    """Smallest offset ``>= slab_start`` where a genuine record begins.

    A candidate must carry a sync marker, have a self-consistent body, and be
    followed by another sync marker or the end of data.  Returns ``len(buf)``
    when no record starts at or after ``slab_start``.

    With ``eof=False`` the buffer is a prefix of a longer stream and
    :class:`TruncatedRecordError` signals that more data is needed.

    Raises:
        CorruptStreamError: marker candidates exist inside
            ``[slab_start, slab_stop)`` but no valid record follows them.
    """
    if isinstance(buf, memoryview):
        buf = bytes(buf)
    pos = max(0, slab_start)
    stop = len(buf) if slab_stop is None else slab_stop
    saw_candidate = False
    while True:
        cand = buf.find(SYNC, pos)
        if cand < 0:
            break
        if _chains(buf, cand, eof):
            return cand
        if cand < stop:
            saw_candidate = True
        pos = cand + 1
    if saw_candidate and eof:
        raise CorruptStreamError(f"no valid record chain at or after offset {slab_start}")
    if not eof:
        raise TruncatedRecordError("no record start found in buffer yet")
    return len(buf)


def check_header(buf) -> None:
    if len(buf) < HEADER_SIZE:
        raise TruncatedRecordError("file shorter than its header")
    if bytes(buf[:4]) != MAGIC:
        raise BadSyncError("missing XSLB magic")
    if buf[4] != VERSION:
        raise UnknownVersionError(f"unknown ligand file version {buf[4]}")


def write_ligand_file(path, ligands) -> list[int]:
    """Write ligands to ``path``; return the file offset of every record."""
    offsets = []
    with open(path, "wb") as fh:
        fh.write(HEADER)
        pos = HEADER_SIZE
        for ligand in ligands:
            rec = encode_record(ligand)
            offsets.append(pos)
            fh.write(rec)
            pos += len(rec)
    return offsets


def iter_records(buf) -> Iterator[tuple[int, Ligand]]:
    """Yield ``(offset, ligand)`` for each record of a whole ``.xslb`` buffer."""
    check_header(buf)
    pos = HEADER_SIZE
    while pos < len(buf):
        ligand, nxt = decode_record(buf, pos)
        yield pos, ligand
        pos = nxt


def read_ligand_file(path) -> list[Ligand]:
    with open(path, "rb") as fh:
        data = fh.read()
    return [lig for _, lig in iter_records(data)]
