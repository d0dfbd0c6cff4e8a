"""Single-wavenumber Orr-Sommerfeld/Squire operators for plane Poiseuille flow.

The state at one wavenumber pair ``(alpha, beta)`` is ``x = (v, eta)`` on the
interior Chebyshev nodes: wall-normal velocity ``v`` (clamped at the walls)
and wall-normal vorticity ``eta`` (Dirichlet).  The dynamics are

    d/dt M x = L x,   M = [-Lap, 0; 0, I],   A = M^{-1} L,

with ``Lap = D^2 - k^2`` and ``d/dx -> i alpha``, ``d/dz -> i beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
import scipy.linalg as sla

from .errors import InvalidParameterError, NumericalFailure, UnstableSystemError
from .spectral import Grid1D, chebyshev_grid, diff_matrix, quadrature_weights


@dataclass(frozen=True)
class WavenumberPair:
    alpha: float
    beta: float

    @property
    def k2(self) -> float:
        return self.alpha**2 + self.beta**2

    def conjugate(self) -> "WavenumberPair":
        return WavenumberPair(-self.alpha, -self.beta)


@dataclass(frozen=True)
class BaseFlow:
    U: np.ndarray
    Uprime: np.ndarray
    Udoubleprime: np.ndarray

    @classmethod
    def poiseuille(cls, y: np.ndarray) -> "BaseFlow":
        return cls(U=1.0 - y**2, Uprime=-2.0 * y, Udoubleprime=np.full_like(y, -2.0))


@dataclass(frozen=True)
class StateVector:
    v: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        if np.shape(self.v) != np.shape(self.eta):
            raise InvalidParameterError("v and eta must have the same length")

    @classmethod
    def from_array(cls, x: np.ndarray) -> "StateVector":
        x = np.asarray(x)
        if x.ndim != 1 or x.size % 2:
            raise InvalidParameterError("state array must be 1-D with even length")
        half = x.size // 2
        return cls(v=x[:half], eta=x[half:])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.eta])


StateLike = Union[StateVector, np.ndarray]


def _as_array(q: StateLike) -> np.ndarray:
    return q.to_array() if isinstance(q, StateVector) else np.asarray(q)


@dataclass(frozen=True)
class StateSpaceModel:
    """Dense complex system ``(A, B, C)`` for one wavenumber pair.

    ``M_weight`` is the Gram matrix of the state inner product
    ``int (|Dv|^2 + k^2 |v|^2 + |eta|^2) dy`` (the mass-operator inner product
    after integrating by parts) and ``E_weight`` the Gram matrix of the kinetic
    energy ``1/2 int (|u|^2 + |v|^2 + |w|^2) dy`` of the recovered velocity.
    Both are per unit wall area.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    M_weight: np.ndarray
    E_weight: np.ndarray
    A_conv: np.ndarray
    A_diff: np.ndarray
    Re: float
    wavenumber: WavenumberPair
    grid: Grid1D = field(repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def interior_count(self) -> int:
        return self.grid.interior_count

    def with_input(self, B: np.ndarray) -> "StateSpaceModel":
        B = np.asarray(B, dtype=complex)
        if B.ndim == 1:
            B = B[:, np.newaxis]
        if B.shape[0] != self.n:
            raise InvalidParameterError("input matrix has the wrong number of rows")
        return replace(self, B=B)

    def with_output(self, C: np.ndarray) -> "StateSpaceModel":
        C = np.atleast_2d(np.asarray(C, dtype=complex))
        if C.shape[1] != self.n:
            raise InvalidParameterError("output matrix has the wrong number of columns")
        return replace(self, C=C)

    def at_reynolds(self, Re: float) -> "StateSpaceModel":
        """Same operators evaluated at another Reynolds number."""
        if Re <= 0:
            raise InvalidParameterError("Re must be positive")
        return replace(self, A=self.A_conv + (1.0 / Re) * self.A_diff, Re=float(Re))

    def eigenvalues(self) -> np.ndarray:
        lam = np.linalg.eigvals(self.A)
        return lam[np.argsort(-lam.real)]

    def max_growth_rate(self) -> float:
        return float(self.eigenvalues()[0].real)


def _operators(wn: WavenumberPair, grid: Grid1D):
    """Collocation blocks shared by the direct and adjoint constructions."""
    ni = grid.interior_count
    y = grid.interior
    flow = BaseFlow.poiseuille(y)
    D1 = diff_matrix(grid, 1).matrix[1:-1, 1:-1]
    D2 = diff_matrix(grid, 2).matrix[1:-1, 1:-1]
    D4 = diff_matrix(grid, 4, "clamped").matrix
    eye = np.eye(ni)
    k2 = wn.k2
    lap = D2 - k2 * eye
    bilap = D4 - 2 * k2 * D2 + k2**2 * eye
    return flow, D1, lap, bilap, eye


def _weights(wn: WavenumberPair, grid: Grid1D):
    """Velocity-recovery maps and the M / E Gram matrices."""
    ni = grid.interior_count
    w = quadrature_weights(grid).weights
    # derivative of the zero-padded interior v, evaluated at every node
    Dv = diff_matrix(grid, 1).matrix[:, 1:-1]
    pad = np.zeros((grid.n_points, ni))
    pad[1:-1] = np.eye(ni)
    k2 = wn.k2
    a, b = wn.alpha, wn.beta
    zero = np.zeros_like(pad)
    # rows: values at all N+1 nodes; columns: (v, eta) interior state
    Ru = (1j / k2) * np.hstack([a * Dv, -b * pad])
    Rv = np.hstack([pad, zero])
    Rw = (1j / k2) * np.hstack([b * Dv, a * pad])
    W = np.diag(w)
    E = 0.5 * (Ru.conj().T @ W @ Ru + Rv.conj().T @ W @ Rv + Rw.conj().T @ W @ Rw)
    Mvv = Dv.T @ W @ Dv + k2 * (pad.T @ W @ pad)
    Mee = pad.T @ W @ pad
    M = sla.block_diag(Mvv, Mee).astype(complex)
    E = 0.5 * (E + E.conj().T)
    return M, E, (Ru, Rv, Rw)


def build_os_squire(wn: WavenumberPair, Re: float, grid: Grid1D | int) -> StateSpaceModel:
    """Assemble the Orr-Sommerfeld/Squire state-space model at ``(alpha, beta, Re)``.

    ``grid`` may be a :class:`Grid1D` or the polynomial degree ``N``.  The input
    and output maps default to the identity; use :meth:`StateSpaceModel.with_input`
    to attach an actuator or initial condition.
    """
    if isinstance(grid, (int, np.integer)):
        grid = chebyshev_grid(int(grid))
    if Re <= 0:
        raise InvalidParameterError("Re must be positive")
    if wn.k2 <= 0:
        raise InvalidParameterError("the (0, 0) wavenumber pair has no operator")
    if grid.N < 4:
        raise InvalidParameterError("need N >= 4 for the clamped fourth derivative")

    flow, D1, lap, bilap, eye = _operators(wn, grid)
    U, Up, Upp = np.diag(flow.U), np.diag(flow.Uprime), np.diag(flow.Udoubleprime)
    ia, ib = 1j * wn.alpha, 1j * wn.beta
    ni = grid.interior_count

    mass = -lap
    try:
        lu = sla.lu_factor(mass)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(f"mass operator factorization failed: {exc}") from exc
    if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
        raise NumericalFailure("mass operator is singular")

    os_conv = sla.lu_solve(lu, ia * (U @ lap) - ia * Upp)
    os_diff = sla.lu_solve(lu, -bilap.astype(complex))

    A_conv = np.zeros((2 * ni, 2 * ni), dtype=complex)
    A_diff = np.zeros((2 * ni, 2 * ni), dtype=complex)
    A_conv[:ni, :ni] = os_conv
    A_conv[ni:, :ni] = -ib * Up
    A_conv[ni:, ni:] = -ia * U
    A_diff[:ni, :ni] = os_diff
    A_diff[ni:, ni:] = lap

    M, E, _ = _weights(wn, grid)
    n = 2 * ni
    return StateSpaceModel(
        A=A_conv + (1.0 / Re) * A_diff,
        B=np.eye(n, dtype=complex),
        C=np.eye(n, dtype=complex),
        M_weight=M,
        E_weight=E,
        A_conv=A_conv,
        A_diff=A_diff,
        Re=float(Re),
        wavenumber=wn,
        grid=grid,
    )


def build_adjoint(model: StateSpaceModel) -> np.ndarray:
    """Adjoint of ``A`` in the M inner product: ``M^{-1} A^H M``."""
    M = model.M_weight
    return sla.solve(M, model.A.conj().T @ M, assume_a="pos")


def continuous_adjoint(model: StateSpaceModel) -> np.ndarray:
    """Collocation of the adjoint equations derived by integration by parts.

    ``M dz/dt = [L_OS^*, U' d/dz; 0, L_SQ^*] z`` with
    ``L_OS^* = -U d/dx Lap - 2 U' d/dx d/dy - Lap^2 / Re`` and
    ``L_SQ^* = U d/dx + Lap / Re``.  Independent of :func:`build_adjoint`;
    the two agree up to discretization error.
    """
    wn, grid, Re = model.wavenumber, model.grid, model.Re
    flow, D1, lap, bilap, eye = _operators(wn, grid)
    U, Up = np.diag(flow.U), np.diag(flow.Uprime)
    ia, ib = 1j * wn.alpha, 1j * wn.beta
    ni = grid.interior_count
    los = -ia * (U @ lap) - 2 * ia * (Up @ D1) - bilap / Re
    lsq = ia * U + lap / Re
    L = np.block([[los, ib * Up], [np.zeros((ni, ni)), lsq]])
    mass = sla.block_diag(-lap, eye)
    return np.linalg.solve(mass, L)


def m_inner_product(q1: StateLike, q2: StateLike, model: StateSpaceModel) -> complex:
    x1, x2 = _as_array(q1), _as_array(q2)
    if x1.shape != (model.n,) or x2.shape != (model.n,):
        raise InvalidParameterError("state dimension does not match the model")
    return complex(x1.conj() @ model.M_weight @ x2)


def energy_inner_product(q1: StateLike, q2: StateLike, model: StateSpaceModel) -> complex:
    if model.wavenumber.k2 <= 0:
        raise InvalidParameterError("velocity recovery needs k^2 > 0")
    x1, x2 = _as_array(q1), _as_array(q2)
    if x1.shape != (model.n,) or x2.shape != (model.n,):
        raise InvalidParameterError("state dimension does not match the model")
    return complex(x1.conj() @ model.E_weight @ x2)


def recover_velocities(q: StateLike, wn: WavenumberPair, grid: Grid1D):
    """Return ``(u, v, w)`` at all ``N + 1`` nodes from continuity and ``eta``.

    ``u = i (alpha Dv - beta eta) / k^2`` and ``w = i (beta Dv + alpha eta) / k^2``.
    """
    if wn.k2 <= 0:
        raise InvalidParameterError("velocity recovery needs k^2 > 0")
    x = _as_array(q)
    ni = grid.interior_count
    if x.shape != (2 * ni,):
        raise InvalidParameterError("state dimension does not match the grid")
    v = np.zeros(grid.n_points, dtype=complex)
    eta = np.zeros(grid.n_points, dtype=complex)
    v[1:-1], eta[1:-1] = x[:ni], x[ni:]
    Dv = diff_matrix(grid, 1).matrix @ v
    u = 1j * (wn.alpha * Dv - wn.beta * eta) / wn.k2
    w = 1j * (wn.beta * Dv + wn.alpha * eta) / wn.k2
    return u, v, w


def energy_factor(weight: np.ndarray) -> np.ndarray:
    """Upper-triangular ``F`` with ``F^H F = weight`` so that ``||F x||_2 = ||x||_W``."""
    return sla.cholesky(weight, lower=False)


@dataclass(frozen=True)
class GrowthCurve:
    times: np.ndarray
    gain: np.ndarray
    t_peak: float
    g_max: float


def _gain_and_input(A: np.ndarray, F: np.ndarray, Finv: np.ndarray, t: float):
    P = F @ sla.expm(A * t) @ Finv
    U, s, Vh = np.linalg.svd(P)
    return s[0] ** 2, Vh[0].conj()


def optimal_perturbation(model: StateSpaceModel, horizon: float | str = "global",
                         t_max: float = 100.0, samples: int = 201):
    """Unit-energy initial condition of maximal energy amplification.

    Returns ``(state, curve)``: the optimal state (normalized to unit kinetic
    energy) and the envelope ``G(t) = ||exp(A t)||_E^2`` sampled on
    ``[0, t_max]``.  With ``horizon="global"`` the optimization time is the
    maximizer of ``G`` (refined by golden-section search around the sampled
    peak); otherwise it is the given time.
    """
    if model.max_growth_rate() >= 0:
        raise UnstableSystemError("transient growth is unbounded for an unstable model")
    F = energy_factor(model.E_weight)
    Finv = sla.solve_triangular(F, np.eye(model.n))
    times = np.linspace(0.0, t_max, samples)
    gain = np.array([_gain_and_input(model.A, F, Finv, t)[0] for t in times])
    gain[0] = 1.0

    if horizon == "global":
        j = int(np.argmax(gain))
        lo, hi = times[max(j - 1, 0)], times[min(j + 1, samples - 1)]
        t_opt = _golden_max(lambda t: _gain_and_input(model.A, F, Finv, t)[0], lo, hi)
    else:
        t_opt = float(horizon)
        if t_opt < 0:
            raise InvalidParameterError("horizon must be non-negative")
    g_opt, z = _gain_and_input(model.A, F, Finv, t_opt)
    x0 = Finv @ z
    # fix the arbitrary phase: largest v-component real and positive
    k = int(np.argmax(np.abs(x0)))
    x0 = x0 * np.exp(-1j * np.angle(x0[k]))
    x0 = x0 / np.sqrt((x0.conj() @ model.E_weight @ x0).real)
    curve = GrowthCurve(times=times, gain=gain, t_peak=float(t_opt), g_max=float(g_opt))
    return StateVector.from_array(x0), curve


def _golden_max(f, a: float, b: float, tol: float = 1e-6) -> float:
    g = (np.sqrt(5.0) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol * max(1.0, abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)
