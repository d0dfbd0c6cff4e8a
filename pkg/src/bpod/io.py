"""Binary "BPR1" container for snapshots, mode bases, matrices, ROMs and 3-D fields.

Layout (little-endian): magic ``b"BPR1"``, version ``u32``, kind ``u8``,
``n`` and ``m`` as ``u64``, then ``m`` float64 times, ``m`` float64 weights
and the ``n x m`` complex data column-major as (re, im) float64 pairs.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .balancing import Provenance, ReducedOrderModel
from .dynamics import SnapshotKind, SnapshotSet
from .errors import FormatError, VersionMismatchError
from .field3d import Box3D, Field3D
from .modal import BasisKind, ModeBasis
from .system import Weight

MAGIC = b"BPR1"
VERSION = 1
_HEADER = struct.Struct("<4sIBQQ")


class Kind(IntEnum):
    DIRECT = 0
    ADJOINT = 1
    POD_MODES = 2
    BALANCING_MODES = 3
    ADJOINT_MODES = 4
    MATRIX = 5
    FIELD = 6


@dataclass(frozen=True)
class Block:
    kind: Kind
    times: np.ndarray
    weights: np.ndarray
    data: np.ndarray


def encode(kind: Kind, times, weights, data) -> bytes:
    data = np.asarray(data)
    if data.ndim != 2:
        raise FormatError("data must be a matrix")
    n, m = data.shape
    times = np.ascontiguousarray(times, dtype="<f8")
    weights = np.ascontiguousarray(weights, dtype="<f8")
    if times.shape != (m,) or weights.shape != (m,):
        raise FormatError("times and weights need one entry per column")
    body = np.asarray(data, dtype="<c16").tobytes(order="F")
    return _HEADER.pack(MAGIC, VERSION, int(kind), n, m) + times.tobytes() + weights.tobytes() + body


def decode(buf, offset: int = 0) -> tuple[Block, int]:
    """Parse one block from ``buf`` starting at ``offset``; returns the block and the next offset."""
    if len(buf) - offset < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, kind, n, m = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"container version {version}, this reader supports {VERSION}")
    try:
        kind = Kind(kind)
    except ValueError:
        raise FormatError(f"unknown kind byte {kind}") from None
    pos = offset + _HEADER.size
    need = 16 * m + 16 * n * m
    if len(buf) - pos < need:
        raise FormatError(f"truncated body: need {need} bytes, have {len(buf) - pos}")
    times = np.frombuffer(buf, "<f8", m, pos).copy()
    weights = np.frombuffer(buf, "<f8", m, pos + 8 * m).copy()
    data = np.frombuffer(buf, "<c16", n * m, pos + 16 * m).reshape((n, m), order="F").copy()
    return Block(kind, times, weights, data), pos + need


def write_block(path, kind: Kind, times, weights, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(kind, times, weights, data))
    return path


def read_block(path) -> Block:
    buf = Path(path).read_bytes()
    block, end = decode(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after block")
    return block


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------- typed wrappers

def save_snapshots(path, snaps: SnapshotSet) -> Path:
    kind = Kind.DIRECT if snaps.kind is SnapshotKind.DIRECT else Kind.ADJOINT
    return write_block(path, kind, snaps.times, snaps.weights, snaps.data)


def load_snapshots(path) -> SnapshotSet:
    b = read_block(path)
    if b.kind not in (Kind.DIRECT, Kind.ADJOINT):
        raise FormatError(f"{path}: expected snapshots, found {b.kind.name}")
    kind = SnapshotKind.DIRECT if b.kind is Kind.DIRECT else SnapshotKind.ADJOINT
    return SnapshotSet(b.data, b.times, b.weights, kind, str(path))


def save_basis(path, basis: ModeBasis) -> list[Path]:
    """POD bases use one file; balancing bases write ``path`` and ``<stem>_adjoint``."""
    path = Path(path)
    ones = np.ones(basis.rank)
    if basis.kind is BasisKind.POD:
        return [write_block(path, Kind.POD_MODES, basis.values, ones, basis.modes)]
    adj = path.with_name(path.stem + "_adjoint" + path.suffix)
    return [write_block(path, Kind.BALANCING_MODES, basis.values, ones, basis.modes),
            write_block(adj, Kind.ADJOINT_MODES, basis.values, ones, basis.adjoint_modes)]


def load_basis(path, weight: Weight) -> ModeBasis:
    path = Path(path)
    b = read_block(path)
    if b.kind is Kind.POD_MODES:
        return ModeBasis(b.data, b.times, weight, BasisKind.POD)
    if b.kind is Kind.BALANCING_MODES:
        a = read_block(path.with_name(path.stem + "_adjoint" + path.suffix))
        if a.kind is not Kind.ADJOINT_MODES or a.data.shape != b.data.shape:
            raise FormatError(f"{path}: adjoint modes missing or inconsistent")
        return ModeBasis(b.data, b.times, weight, BasisKind.BALANCING, a.data)
    raise FormatError(f"{path}: expected a mode basis, found {b.kind.name}")


def _matrix(kind: Kind, A) -> bytes:
    A = np.atleast_2d(np.asarray(A))
    return encode(kind, np.arange(A.shape[1], dtype=float), np.ones(A.shape[1]), A)


_ROM_BLOCKS = ("Ar", "Br", "Cr", "Ar_conv", "Ar_diff", "lift")


def save_rom(path, rom: ReducedOrderModel) -> Path:
    """Text header (``key: value`` lines, ending with ``---``) then BPR1 matrix blocks."""
    header = {
        "format": f"BPR1-ROM {VERSION}",
        "provenance": rom.provenance.value,
        "rank": rom.rank,
        "output_projection_rank": rom.output_projection_rank,
        "inputs": rom.n_inputs,
        "design_Re": repr(float(rom.design_Re)),
        "Re": repr(float(rom.Re)),
        "real": int(rom.real),
        "blocks": ",".join(k for k in _ROM_BLOCKS if getattr(rom, k) is not None),
    }
    out = io.BytesIO()
    out.write("".join(f"{k}: {v}\n" for k, v in header.items()).encode())
    out.write(b"---\n")
    for name in header["blocks"].split(","):
        out.write(_matrix(Kind.MATRIX, getattr(rom, name)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(out.getvalue())
    return path


def load_rom(path) -> ReducedOrderModel:
    buf = Path(path).read_bytes()
    sep = buf.find(b"\n---\n")
    if sep < 0:
        raise FormatError(f"{path}: missing ROM header terminator")
    header = dict(line.split(": ", 1) for line in buf[:sep].decode().splitlines())
    fmt = header.get("format", "")
    if not fmt.startswith("BPR1-ROM"):
        raise FormatError(f"{path}: not a ROM file")
    if int(fmt.split()[1]) != VERSION:
        raise VersionMismatchError(f"{path}: ROM format version {fmt.split()[1]}")
    off = sep + 5
    mats = {}
    for name in header["blocks"].split(","):
        block, off = decode(buf, off)
        mats[name] = block.data
    if off != len(buf):
        raise FormatError(f"{path}: trailing bytes")
    real = bool(int(header["real"]))
    fix = (lambda a: a.real.copy()) if real else (lambda a: a)
    return ReducedOrderModel(
        Ar=fix(mats["Ar"]), Br=fix(mats["Br"]), Cr=fix(mats["Cr"]),
        Ar_conv=fix(mats["Ar_conv"]), Ar_diff=fix(mats["Ar_diff"]),
        design_Re=float(header["design_Re"]), provenance=Provenance(header["provenance"]),
        lift=mats.get("lift"), Re=float(header["Re"]), real=real)


def save_field(path, field: Field3D) -> Path:
    b = field.box
    data = np.stack([field.v.ravel(), field.eta.ravel(), np.zeros(field.v.size)], axis=1)
    return write_block(path, Kind.FIELD, [b.Nx, b.Ny, b.Nz], [b.Lx, b.Lz, 0.0], data)


def load_field(path) -> Field3D:
    blk = read_block(path)
    if blk.kind is not Kind.FIELD or blk.data.shape[1] != 3:
        raise FormatError(f"{path}: expected a field block")
    Nx, Ny, Nz = (int(v) for v in blk.times)
    box = Box3D(Nx=Nx, Nz=Nz, N=Ny - 1, Lx=float(blk.weights[0]), Lz=float(blk.weights[1]))
    shape = (Nx, Ny, Nz)
    return Field3D(box, blk.data[:, 0].real.reshape(shape).copy(),
                   blk.data[:, 1].real.reshape(shape).copy())
