import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpod import io as bio
from bpod.balancing import Provenance, ReducedOrderModel, bpod, reduce
from bpod.dynamics import SnapshotKind, SnapshotSet
from bpod.errors import FormatError, VersionMismatchError
from bpod.field3d import Box3D, gaussian_actuator
from bpod.modal import output_projection


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_block_round_trip_is_bit_exact(n, m, seed):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    t, w = np.cumsum(rng.uniform(0.1, 1, m)), rng.uniform(0.1, 1, m)
    blk, end = bio.decode(bio.encode(bio.Kind.DIRECT, t, w, data))
    assert end == 25 + 16 * m + 16 * n * m
    assert blk.kind is bio.Kind.DIRECT
    assert blk.data.tobytes() == data.tobytes()
    assert blk.times.tobytes() == t.tobytes() and blk.weights.tobytes() == w.tobytes()


def test_snapshot_files(tmp_path, small):
    _, X, _, Y = small
    for snaps, name in ((X, "x.bpr"), (Y, "y.bpr")):
        back = bio.load_snapshots(bio.save_snapshots(tmp_path / name, snaps))
        assert np.array_equal(back.data, snaps.data) and back.kind is snaps.kind
        assert np.array_equal(back.times, snaps.times)
    assert bio.sha256(tmp_path / "x.bpr") != bio.sha256(tmp_path / "y.bpr")


def test_basis_files(tmp_path, small):
    sys, X, P, Y = small
    paths = bio.save_basis(tmp_path / "pod.bpr", P)
    back = bio.load_basis(paths[0], sys.E)
    assert np.array_equal(back.modes, P.modes) and np.array_equal(back.values, P.values)
    B = bpod(X, Y, sys.M, r=6)
    paths = bio.save_basis(tmp_path / "bal.bpr", B)
    assert [p.name for p in paths] == ["bal.bpr", "bal_adjoint.bpr"]
    back = bio.load_basis(paths[0], sys.M)
    assert np.array_equal(back.adjoint_modes, B.adjoint_modes)
    paths[1].unlink()
    with pytest.raises(FileNotFoundError):
        bio.load_basis(paths[0], sys.M)
    with pytest.raises(FormatError):
        bio.load_snapshots(tmp_path / "pod.bpr")


def test_rom_files(tmp_path, small):
    sys, X, P, Y = small
    rom = reduce(sys, bpod(X, Y, sys.M, r=4), output_projection(P, 4))
    back = bio.load_rom(bio.save_rom(tmp_path / "r.rom", rom))
    for name in ("Ar", "Br", "Cr", "Ar_conv", "Ar_diff", "lift"):
        assert np.array_equal(getattr(back, name), getattr(rom, name)), name
    assert back.provenance is Provenance.BPOD and back.real and back.design_Re == rom.design_Re
    text = (tmp_path / "r.rom").read_bytes()
    (tmp_path / "v.rom").write_bytes(text.replace(b"BPR1-ROM 1", b"BPR1-ROM 9"))
    with pytest.raises(VersionMismatchError):
        bio.load_rom(tmp_path / "v.rom")
    (tmp_path / "t.rom").write_bytes(text + b"x")
    with pytest.raises(FormatError):
        bio.load_rom(tmp_path / "t.rom")


def test_field_files(tmp_path):
    f = gaussian_actuator(Box3D(Nx=8, Nz=4, N=8))
    back = bio.load_field(bio.save_field(tmp_path / "f.bpr", f))
    assert back.box == f.box
    assert np.array_equal(back.v, f.v) and np.array_equal(back.eta, f.eta)


def test_corrupt_containers(tmp_path):
    good = bio.encode(bio.Kind.MATRIX, [0.0], [1.0], np.ones((2, 1)))
    with pytest.raises(FormatError, match="magic"):
        bio.decode(b"XXXX" + good[4:])
    with pytest.raises(VersionMismatchError):
        bio.decode(good[:4] + struct.pack("<I", 2) + good[8:])
    with pytest.raises(FormatError, match="kind"):
        bio.decode(good[:8] + bytes([99]) + good[9:])
    with pytest.raises(FormatError, match="truncated"):
        bio.decode(good[:-1])
    with pytest.raises(FormatError, match="truncated"):
        bio.decode(good[:10])
    (tmp_path / "a.bpr").write_bytes(good + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        bio.read_block(tmp_path / "a.bpr")
    with pytest.raises(FormatError):
        bio.encode(bio.Kind.MATRIX, [0.0, 1.0], [1.0], np.ones((2, 2)))
