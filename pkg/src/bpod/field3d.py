"""Periodic-box fields, the localized Gaussian actuator and the block-diagonal 3-D system.

A real field on the ``(Nx, Ny, Nz)`` grid is expanded as

    f(x, y, z) = sum_k c_k(y) exp(i(alpha_k x + beta_k z)),  c_{-k} = conj(c_k).

Each independent wavenumber ``k`` (one per conjugate pair, Nyquist modes and
the mean excluded) contributes one Orr-Sommerfeld/Squire block whose state is
``(v, eta)`` at the interior Chebyshev nodes.  The physical field is
``sum_k 2 Re(q_k exp(i k.x))``, so the global weights carry a factor
``2 Lx Lz`` and the state inner product equals the physical-space one.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import WavenumberPair, build_os_squire, recover_velocities
from .dynamics import Schedule, SnapshotSet, direct_impulse_snapshots
from .errors import InvalidParameterError
from .spectral import Grid1D, chebyshev_grid, quadrature_weights
from .system import BlockDiag, LinearSystem, Weight

MEAN_TOL = 1e-10


@dataclass(frozen=True)
class Box3D:
    Nx: int = 16
    Nz: int = 16
    N: int = 32
    Lx: float = 2 * math.pi
    Lz: float = 2 * math.pi

    def __post_init__(self):
        for n in (self.Nx, self.Nz):
            if n < 4 or n & (n - 1):
                raise InvalidParameterError("Nx and Nz must be powers of two >= 4")
        if self.Lx <= 0 or self.Lz <= 0:
            raise InvalidParameterError("box periods must be positive")
        chebyshev_grid(self.N)

    @property
    def grid1d(self) -> Grid1D:
        return chebyshev_grid(self.N)

    @property
    def Ny(self) -> int:
        return self.N + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.Nx, self.Ny, self.Nz)

    @property
    def area(self) -> float:
        return self.Lx * self.Lz

    def x(self) -> np.ndarray:
        return np.arange(self.Nx) * self.Lx / self.Nx

    def z(self) -> np.ndarray:
        return np.arange(self.Nz) * self.Lz / self.Nz

    def center(self) -> tuple[float, float]:
        return self.Lx / 2, self.Lz / 2

    def kx_index(self) -> np.ndarray:
        """Signed integer streamwise wavenumber for each FFT row."""
        return np.fft.fftfreq(self.Nx, 1.0 / self.Nx).astype(int)

    @functools.cached_property
    def blocks(self) -> list[tuple[int, int]]:
        """``(row, kz)`` FFT indices of the independent wavenumbers, in state order."""
        out = []
        kx = self.kx_index()
        for kz in range(0, self.Nz // 2):
            for row in range(self.Nx):
                if abs(kx[row]) == self.Nx // 2:
                    continue
                if kz == 0 and kx[row] <= 0:
                    continue
                out.append((row, kz))
        return out

    def wavenumbers(self) -> list[WavenumberPair]:
        kx = self.kx_index()
        return [WavenumberPair(2 * math.pi * kx[row] / self.Lx, 2 * math.pi * kz / self.Lz)
                for row, kz in self.blocks]

    @property
    def block_size(self) -> int:
        return 2 * (self.N - 1)

    @property
    def n_states(self) -> int:
        return len(self.blocks) * self.block_size


@dataclass(frozen=True)
class Field3D:
    """Real ``v`` and ``eta`` on the ``(Nx, Ny, Nz)`` grid (y from +1 to -1)."""

    box: Box3D
    v: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        for a in (self.v, self.eta):
            if a.shape != self.box.shape:
                raise InvalidParameterError(f"field shape {a.shape} != {self.box.shape}")
            if np.iscomplexobj(a):
                raise InvalidParameterError("physical fields are real")

    @property
    def spectral(self) -> dict[WavenumberPair, tuple[np.ndarray, np.ndarray]]:
        """Independent coefficients ``{(alpha, beta): (v_hat, eta_hat)}`` on all y nodes."""
        V, H = to_spectral(self, check_mean=False)
        kx = self.box.kx_index()
        out = {}
        for row, kz in self.box.blocks:
            wn = WavenumberPair(2 * math.pi * kx[row] / self.box.Lx, 2 * math.pi * kz / self.box.Lz)
            out[wn] = (V[row, :, kz], H[row, :, kz])
        return out


def gaussian_actuator(box: Box3D, A: float = 1.0, alpha: float = 0.7, alpha_y: float = 0.6) -> Field3D:
    """Localized wall-normal velocity disturbance centred in the box, ``eta = 0``.

    ``v = A (1 - r^2/alpha^2) exp(-r^2/alpha^2 - y^2/alpha_y^2) (cos(pi y) + 1)``
    with ``r`` the horizontal distance from the box centre.
    """
    if A <= 0 or alpha <= 0 or alpha_y <= 0:
        raise InvalidParameterError("actuator parameters must be positive")
    xc, zc = box.center()
    X, Y, Z = np.meshgrid(box.x(), box.grid1d.points, box.z(), indexing="ij")
    r2 = ((X - xc) ** 2 + (Z - zc) ** 2) / alpha**2
    v = A * (1 - r2) * np.exp(-r2 - Y**2 / alpha_y**2) * (np.cos(np.pi * Y) + 1)
    return Field3D(box, v, np.zeros_like(v))


def horizontal_mean(a: np.ndarray) -> np.ndarray:
    """Plane average at each y (exact for the periodic trapezoid rule)."""
    return a.mean(axis=(0, 2))


def to_spectral(field: Field3D, check_mean: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Half-spectrum coefficients ``(v_hat, eta_hat)``, shape ``(Nx, Ny, Nz//2 + 1)``.

    Normalized so that ``f = sum_k c_k exp(i k.x)``.  Raises if the horizontal
    mean exceeds ``1e-10`` of the field peak (the disturbance class is mean-free).
    """
    n = field.box.Nx * field.box.Nz
    V = np.fft.rfft2(field.v, axes=(0, 2)) / n
    H = np.fft.rfft2(field.eta, axes=(0, 2)) / n
    if check_mean:
        for name, a, c in (("v", field.v, V), ("eta", field.eta, H)):
            peak = np.max(np.abs(a))
            if peak > 0 and np.max(np.abs(c[0, :, 0])) > MEAN_TOL * peak:
                raise InvalidParameterError(
                    f"{name} has a nonzero horizontal mean "
                    f"({np.max(np.abs(c[0, :, 0])):.3e} vs peak {peak:.3e}); "
                    "the (0,0) mode is pinned to zero")
    return V, H


def from_spectral(box: Box3D, V: np.ndarray, H: np.ndarray) -> Field3D:
    n = box.Nx * box.Nz
    v = np.fft.irfft2(V * n, s=(box.Nx, box.Nz), axes=(0, 2))
    eta = np.fft.irfft2(H * n, s=(box.Nx, box.Nz), axes=(0, 2))
    return Field3D(box, v, eta)


def remove_mean(field: Field3D) -> Field3D:
    """Subtract the horizontal mean of v and eta at each y."""
    return Field3D(field.box, field.v - horizontal_mean(field.v)[None, :, None],
                   field.eta - horizontal_mean(field.eta)[None, :, None])


def field_to_state(field: Field3D, check_mean: bool = True) -> np.ndarray:
    """Stacked block states (interior nodes); Nyquist rows/columns are dropped."""
    V, H = to_spectral(field, check_mean)
    box = field.box
    k = box.N - 1
    x = np.empty((len(box.blocks), 2 * k), dtype=complex)
    for b, (row, kz) in enumerate(box.blocks):
        x[b, :k] = V[row, 1:-1, kz]
        x[b, k:] = H[row, 1:-1, kz]
    return x.ravel()


def state_to_spectral(box: Box3D, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = box.N - 1
    xb = np.asarray(x).reshape(len(box.blocks), 2 * k)
    V = np.zeros((box.Nx, box.Ny, box.Nz // 2 + 1), dtype=complex)
    H = np.zeros_like(V)
    for b, (row, kz) in enumerate(box.blocks):
        V[row, 1:-1, kz] = xb[b, :k]
        H[row, 1:-1, kz] = xb[b, k:]
        if kz == 0:
            # conjugate partner within the kz = 0 column
            V[-row, 1:-1, 0] = np.conj(xb[b, :k])
            H[-row, 1:-1, 0] = np.conj(xb[b, k:])
    return V, H


def state_to_field(box: Box3D, x: np.ndarray) -> Field3D:
    return from_spectral(box, *state_to_spectral(box, x))


def velocity_fields(box: Box3D, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Physical ``(u, v, w)`` recovered from a block state."""
    g = box.grid1d
    k = box.N - 1
    xb = np.asarray(x).reshape(len(box.blocks), 2 * k)
    shape = (box.Nx, box.Ny, box.Nz // 2 + 1)
    U, Vv, W = (np.zeros(shape, dtype=complex) for _ in range(3))
    for b, ((row, kz), wn) in enumerate(zip(box.blocks, box.wavenumbers())):
        u, v, w = recover_velocities(xb[b], wn, g)
        for C, c in ((U, u), (Vv, v), (W, w)):
            C[row, :, kz] = c
            if kz == 0:
                C[-row, :, 0] = np.conj(c)
    n = box.Nx * box.Nz
    back = lambda C: np.fft.irfft2(C * n, s=(box.Nx, box.Nz), axes=(0, 2))
    return back(U), back(Vv), back(W)


def physical_energy(box: Box3D, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    """``(1/2) int (u^2 + v^2 + w^2) dx dy dz`` by trapezoid (x, z) and Clenshaw-Curtis (y)."""
    wy = quadrature_weights(box.grid1d).weights
    dA = box.area / (box.Nx * box.Nz)
    e = (u**2 + v**2 + w**2).sum(axis=(0, 2)) * dA
    return 0.5 * float(wy @ e)


@functools.lru_cache(maxsize=8)
def build_system(box: Box3D, Re: float) -> LinearSystem:
    """Block-diagonal real-field system over all independent wavenumbers of ``box``."""
    g = box.grid1d
    models = [build_os_squire(wn, Re, g) for wn in box.wavenumbers()]
    f = 2 * box.area
    stackm = lambda attr, c=1.0: BlockDiag(np.stack([c * getattr(m, attr) for m in models]))
    return LinearSystem(
        A=stackm("A"), A_conv=stackm("A_conv"), A_diff=stackm("A_diff"),
        B=np.zeros((box.n_states, 1), dtype=complex),
        M=Weight(stackm("M_weight", f), real=True, name="M"),
        E=Weight(stackm("E_weight", f), real=True, name="E"),
        Re=float(Re), real=True, label=f"box {box.Nx}x{box.Ny}x{box.Nz}",
    )


def actuator_system(box: Box3D, Re: float, field: Field3D) -> LinearSystem:
    """The block system with the field (as a state) as its single input column."""
    return build_system(box, float(Re)).with_input(field_to_state(field)[:, np.newaxis])


def evolve_field(field: Field3D, Re: float, schedule: Schedule) -> SnapshotSet:
    """Impulse response of the field under the block system (snapshots in block-state form)."""
    sys = actuator_system(field.box, Re, field)
    return direct_impulse_snapshots(sys, 0, schedule)


def block_energies(box: Box3D, E: Weight, x: np.ndarray) -> np.ndarray:
    """Energy in each independent wavenumber (conjugate pair counted)."""
    k = box.block_size
    xb = np.asarray(x).reshape(len(box.blocks), k, 1)
    Ex = np.matmul(E.matrix.blocks, xb)
    return np.real(np.sum(xb.conj() * Ex, axis=(1, 2)))


def streamwise_constant_fraction(box: Box3D, E: Weight, x: np.ndarray) -> float:
    """Fraction of the energy in wavenumbers with ``alpha = 0``."""
    e = block_energies(box, E, x)
    mask = np.array([wn.alpha == 0 for wn in box.wavenumbers()])
    return float(e[mask].sum() / e.sum())


def slice_rows(field: Field3D, j: int):
    """``(x, z, v)`` rows of the wall-parallel plane at y-node ``j``."""
    box = field.box
    for i, x in enumerate(box.x()):
        for k, z in enumerate(box.z()):
            yield (x, z, field.v[i, j, k])
