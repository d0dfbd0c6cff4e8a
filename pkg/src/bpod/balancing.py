"""Balanced POD from direct/adjoint snapshots, exact balanced truncation, ROM assembly."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .dynamics import SnapshotSet
from .errors import InvalidParameterError, NumericalFailure, UnstableSystemError
from .modal import BasisKind, ModeBasis, OutputProjection
from .system import LinearSystem, Weight, complexify_vectors, realify_vectors

log = logging.getLogger(__name__)

HSV_RANK_TOL = 1e-10
TIE_TOL = 0.02


class Provenance(str, Enum):
    POD = "pod"
    BPOD = "bpod"
    EXACT_BT = "exact_bt"


def _is_tie(values: np.ndarray, r: int, tol: float = TIE_TOL) -> bool:
    if r < 1 or r >= values.size:
        return False
    a, b = values[r - 1], values[r]
    return abs(a - b) <= tol * a


def pair_boundary(values: np.ndarray, r: int, tol: float = TIE_TOL) -> int:
    """Smallest rank ``>= r`` that does not split a group of (nearly) equal values."""
    values = np.asarray(values)
    while r < values.size and _is_tie(values, r, tol):
        r += 1
    return r


def bpod(X: SnapshotSet | np.ndarray, Y: SnapshotSet | np.ndarray, M: Weight,
         r: int | None = None, tol: float = HSV_RANK_TOL) -> ModeBasis:
    """Balancing and adjoint modes from the SVD of ``Y^+ X = Y^H M X``.

    Returns ``Phi = X V S^{-1/2}`` as modes and ``Psi = Y U S^{-1/2}`` as
    adjoint modes, biorthogonal in ``M``; values are the Hankel singular values.
    """
    Xd = X.data if isinstance(X, SnapshotSet) else np.asarray(X)
    Yd = Y.data if isinstance(Y, SnapshotSet) else np.asarray(Y)
    if Xd.shape[0] != M.n or Yd.shape[0] != M.n:
        raise InvalidParameterError("snapshot rows must match the state dimension")
    H = M.gram(Yd, Xd)
    U, s, Vh = np.linalg.svd(H, full_matrices=False)
    if s[0] <= 0:
        raise NumericalFailure("Y^+ X vanishes; direct and adjoint data are orthogonal")
    p = int(np.sum(s > tol * s[0]))
    want = p if r is None else int(r)
    if want < 1:
        raise InvalidParameterError("requested rank must be positive")
    truncated = want > p
    if truncated:
        log.warning("requested rank %d exceeds the %d nonzero Hankel singular values", want, p)
    k = min(want, p)
    if _is_tie(s, k):
        warnings.warn(f"cut at r={k} splits nearly equal Hankel singular values "
                      f"({s[k - 1]:.6g}, {s[k]:.6g}); stability is not guaranteed",
                      RuntimeWarning)
    scale = 1.0 / np.sqrt(s[:k])
    Phi = Xd @ (Vh[:k].conj().T * scale)
    Psi = Yd @ (U[:, :k] * scale)
    return ModeBasis(Phi, s[:k].copy(), M, BasisKind.BALANCING, Psi, truncated, s[:p].copy())


@dataclass(frozen=True)
class ReducedOrderModel:
    """``da/dt = Ar a + Br u``, ``y = Cr a``.

    ``lift`` maps outputs back to full (complex-storage) states, so that
    ``lift @ y`` approximates the full state; for POD models ``lift`` is the
    mode matrix, for output-projected BPOD models it is ``Theta_s``.
    """

    Ar: np.ndarray
    Br: np.ndarray
    Cr: np.ndarray
    Ar_conv: np.ndarray
    Ar_diff: np.ndarray
    design_Re: float
    provenance: Provenance
    lift: np.ndarray | None = None
    Re: float | None = None
    real: bool = False

    def __post_init__(self):
        if self.Re is None:
            object.__setattr__(self, "Re", self.design_Re)

    @property
    def rank(self) -> int:
        return self.Ar.shape[0]

    @property
    def output_projection_rank(self) -> int:
        return self.Cr.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.Br.shape[1]

    def eigenvalues(self) -> np.ndarray:
        lam = np.linalg.eigvals(self.Ar)
        return lam[np.argsort(-lam.real, kind="stable")]

    def max_growth_rate(self) -> float:
        return float(self.eigenvalues()[0].real)

    def at_reynolds(self, Re: float) -> "ReducedOrderModel":
        if Re <= 0:
            raise InvalidParameterError("Re must be positive")
        return replace(self, Ar=self.Ar_conv + self.Ar_diff / Re, Re=float(Re))

    def state_map(self) -> np.ndarray:
        """Matrix taking ROM states to full states (``lift @ Cr``)."""
        if self.lift is None:
            raise InvalidParameterError("model has no lift to the full state")
        return self.lift @ self.Cr


def reduce(system: LinearSystem, basis: ModeBasis,
           output: OutputProjection | None = None, weight: str = "E") -> ReducedOrderModel:
    """Petrov-Galerkin (balancing) or Galerkin (POD) reduced-order model.

    Balancing bases use ``Psi^+ = Psi^H M``.  POD bases are projected
    orthogonally in the inner product named by ``weight`` (``"E"`` by default,
    the one the modes are orthonormal in).  With ``output`` the ROM outputs
    are its POD coefficients; otherwise a POD model outputs its own
    coefficients and a balancing model outputs all r balanced states.
    """
    Phi = basis.modes
    if Phi.shape[0] != system.n:
        raise InvalidParameterError("basis dimension does not match the system")
    if basis.kind is BasisKind.BALANCING:
        if basis.adjoint_modes is None:
            raise InvalidParameterError("balancing basis needs adjoint modes")
        W, Psi = system.M, basis.adjoint_modes
        provenance = Provenance.BPOD
    else:
        W = {"E": system.E, "M": system.M}[weight]
        G = W.gram(Phi)
        # test functions dual to Phi in W (identity when W is the POD weight)
        Psi = Phi @ np.linalg.inv(G).conj().T if weight != "E" else Phi
        provenance = Provenance.POD

    Ar = W.gram(Psi, system.A @ Phi)
    Ac = W.gram(Psi, system.A_conv @ Phi)
    Ad = W.gram(Psi, system.A_diff @ Phi)
    Br = W.gram(Psi, system.B)
    if output is not None:
        Cr, lift = output(Phi), output.modes
    else:
        Cr, lift = np.eye(Phi.shape[1]), Phi
    return ReducedOrderModel(Ar, Br, Cr, Ac, Ad, system.Re, provenance, lift, real=system.real)


@dataclass(frozen=True)
class GramianPair:
    Wc: np.ndarray
    Wo: np.ndarray
    hsv: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def residuals(self) -> tuple[float, float]:
        """Relative Lyapunov residuals for the controllability and observability equations."""
        A, B, C = self.A, self.B, self.C
        BB, CC = B @ B.conj().T, C.conj().T @ C
        rc = np.linalg.norm(A @ self.Wc + self.Wc @ A.conj().T + BB) / np.linalg.norm(BB)
        ro = np.linalg.norm(A.conj().T @ self.Wo + self.Wo @ A + CC) / np.linalg.norm(CC)
        return float(rc), float(ro)


def _psd_factor(W: np.ndarray) -> np.ndarray:
    """``L`` with ``W = L L^H`` for a Hermitian positive semidefinite matrix."""
    W = 0.5 * (W + W.conj().T)
    d, Q = np.linalg.eigh(W)
    d = np.clip(d, 0, None)
    keep = d > 1e-14 * max(d.max(), np.finfo(float).tiny)
    return Q[:, keep] * np.sqrt(d[keep])


def output_matrix(system: LinearSystem, output: OutputProjection | None = None) -> np.ndarray:
    """Dense output matrix in the realified (if real) coordinates.

    Full-state output is ``F x`` with ``F^T F = E``, so the Euclidean output
    norm is the energy norm; a projection outputs POD coefficients.
    """
    _, _, _, E = system.dense()
    if output is None:
        return sla.cholesky(0.5 * (E + E.conj().T), lower=False)
    if system.real:
        return realify_vectors(output.modes).T @ E
    return output.modes.conj().T @ E


def gramians(system: LinearSystem, output: OutputProjection | None = None,
             C: np.ndarray | None = None) -> GramianPair:
    """Controllability/observability Gramians with the plain-transpose adjoint."""
    A, B, _, _ = system.dense()
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise UnstableSystemError("Gramians are undefined for an unstable system")
    C = output_matrix(system, output) if C is None else C
    Wc = sla.solve_continuous_lyapunov(A, -B @ B.conj().T)
    Wo = sla.solve_continuous_lyapunov(A.conj().T, -C.conj().T @ C)
    Wc, Wo = 0.5 * (Wc + Wc.conj().T), 0.5 * (Wo + Wo.conj().T)
    Lc, Lo = _psd_factor(Wc), _psd_factor(Wo)
    hsv = np.linalg.svd(Lo.conj().T @ Lc, compute_uv=False)
    return GramianPair(Wc, Wo, hsv, A, B, C)


def weighted_hsv(system: LinearSystem, output: OutputProjection | None = None) -> np.ndarray:
    """HSVs from Gramians defined with the M-weighted adjoint.

    ``G_c`` solves ``A G + G A^+ + B B^+ = 0`` and ``G_o`` solves
    ``A^+ G + G A + C^+ C = 0`` with ``A^+ = M^{-1} A^T M``, ``B^+ = B^T M``,
    ``C^+ = M^{-1} C^T``; the HSVs are square roots of the eigenvalues of
    ``G_c G_o``.
    """
    A, B, M, _ = system.dense()
    C = output_matrix(system, output)
    Ap = np.linalg.solve(M, A.conj().T @ M)
    Bp = B.conj().T @ M
    Cp = np.linalg.solve(M, C.conj().T)
    Gc = sla.solve_sylvester(A, Ap, -B @ Bp)
    Go = sla.solve_sylvester(Ap, A, -Cp @ C)
    ev = np.linalg.eigvals(Gc @ Go)
    return np.sort(np.sqrt(np.abs(ev.real)))[::-1]


def exact_balanced_truncation(system: LinearSystem, r: int,
                              output: OutputProjection | None = None):
    """Square-root balanced truncation of the dense system.

    Returns ``(rom, gramians, basis)``; ``basis`` holds the balancing and
    adjoint modes mapped back to the system's complex storage, so the ROM
    equals ``reduce(system, basis)`` up to round-off.
    """
    if system.n > 4000:
        raise InvalidParameterError("exact balanced truncation is limited to small dense systems")
    g = gramians(system, output)
    Lc, Lo = _psd_factor(g.Wc), _psd_factor(g.Wo)
    U, s, Vh = np.linalg.svd(Lo.conj().T @ Lc, full_matrices=False)
    p = int(np.sum(s > HSV_RANK_TOL * s[0]))
    if r < 1 or r > p:
        raise InvalidParameterError(f"rank {r} outside 1..{p} (nonzero Hankel singular values)")
    if _is_tie(s, r) or s[r - 1] < 1e-12 * s[0]:
        warnings.warn(f"truncation at r={r} with sigma_r={s[r - 1]:.6g}, "
                      f"sigma_r+1={s[r] if r < s.size else 0:.6g}", RuntimeWarning)
    scale = 1.0 / np.sqrt(s[:r])
    T = Lc @ (Vh[:r].conj().T * scale)            # right (balancing) vectors
    Ti = (U[:, :r] * scale).conj().T @ Lo.conj().T  # left vectors, Ti T = I

    A, B, M, _ = system.dense()
    Ac, Ad = system.dense_split()
    C = g.C
    rom = ReducedOrderModel(Ti @ A @ T, Ti @ B, C @ T, Ti @ Ac @ T, Ti @ Ad @ T,
                            system.Re, Provenance.EXACT_BT, real=system.real)
    # adjoint modes Psi with Psi^+ = Psi^H M = Ti
    Psi = np.linalg.solve(M, Ti.conj().T)
    if system.real:
        Phi_c, Psi_c = complexify_vectors(T), complexify_vectors(Psi)
    else:
        Phi_c, Psi_c = T, Psi
    basis = ModeBasis(Phi_c, s[:r].copy(), system.M, BasisKind.BALANCING, Psi_c, False, s[:p].copy())
    if output is None:
        rom = replace(rom, Cr=np.eye(r), lift=Phi_c)
    else:
        rom = replace(rom, lift=output.modes)
    return rom, g, basis
