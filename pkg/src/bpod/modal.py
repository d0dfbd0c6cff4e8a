"""POD by the method of snapshots and POD-coefficient output projections."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .dynamics import SnapshotSet
from .errors import InvalidParameterError
from .system import Weight

log = logging.getLogger(__name__)

POD_RANK_TOL = 1e-12


class BasisKind(str, Enum):
    POD = "pod"
    BALANCING = "balancing"


@dataclass(frozen=True)
class ModeBasis:
    """Modes as columns plus their values (POD eigenvalues or Hankel singular values).

    POD modes are orthonormal in ``weight``; balancing modes are biorthogonal
    to ``adjoint_modes`` in ``weight``.  ``truncated`` records that fewer
    modes than requested were numerically available.
    """

    modes: np.ndarray
    values: np.ndarray
    weight: Weight
    kind: BasisKind = BasisKind.POD
    adjoint_modes: np.ndarray | None = None
    truncated: bool = False
    all_values: np.ndarray | None = None

    def __post_init__(self):
        if self.modes.shape[1] != self.values.size:
            raise InvalidParameterError("one value per mode required")
        if self.adjoint_modes is not None and self.adjoint_modes.shape != self.modes.shape:
            raise InvalidParameterError("adjoint modes must match the modes in shape")
        if self.all_values is None:
            object.__setattr__(self, "all_values", self.values)

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    def leading(self, r: int) -> "ModeBasis":
        if r < 0 or r > self.rank:
            raise InvalidParameterError(f"rank {r} outside 0..{self.rank}")
        adj = None if self.adjoint_modes is None else self.adjoint_modes[:, :r]
        return ModeBasis(self.modes[:, :r], self.values[:r], self.weight, self.kind, adj,
                         self.truncated, self.all_values)

    def test_modes(self) -> np.ndarray:
        """Modes used on the left of a projection (the modes themselves for POD)."""
        return self.modes if self.adjoint_modes is None else self.adjoint_modes

    def energy_fractions(self) -> np.ndarray:
        """Cumulative fraction of the total (all eigenvalues, POD only)."""
        v = self.all_values
        return np.cumsum(v) / np.sum(v)


def pod(snapshots: SnapshotSet | np.ndarray, W: Weight, r: int | None = None,
        tol: float = POD_RANK_TOL) -> ModeBasis:
    """POD modes of the weighted snapshot matrix via the ``m x m`` eigenproblem.

    For real-semantics weights the snapshot Gram matrix is real and so are
    the mode coefficients, so modes stay in the real field space.
    """
    X = snapshots.data if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots)
    if X.ndim != 2 or X.shape[0] != W.n:
        raise InvalidParameterError("snapshot rows must match the weight dimension")
    K = W.gram(X)
    lam, U = np.linalg.eigh(K)
    order = np.argsort(lam)[::-1]
    lam, U = lam[order].real, U[:, order]
    if lam[0] <= 0:
        raise InvalidParameterError("snapshot set has zero energy")
    keep = int(np.sum(lam > tol * lam[0]))
    want = keep if r is None else int(r)
    if want < 1:
        raise InvalidParameterError("requested rank must be positive")
    truncated = want > keep
    if truncated:
        log.warning("requested %d POD modes but only %d are above tolerance", want, keep)
    k = min(want, keep)
    modes = (X @ U[:, :k]) / np.sqrt(lam[:k])
    # trailing modes lose orthogonality like eps * lam[0] / lam[j]; one
    # Gram-Schmidt pass (triangular, so leading spans are unchanged) restores it
    L = np.linalg.cholesky(W.gram(modes))
    modes = sla.solve_triangular(L, modes.conj().T, lower=True).conj().T
    return ModeBasis(modes, lam[:k].copy(), W, BasisKind.POD, None, truncated,
                     np.clip(lam[:keep], 0, None))


@dataclass(frozen=True)
class OutputProjection:
    """Map ``x -> Theta_s^+ x``: POD coefficients of the state in the E inner product."""

    modes: np.ndarray
    weight: Weight

    @property
    def s(self) -> int:
        return self.modes.shape[1]

    def matrix(self) -> np.ndarray:
        """``Theta_s^H E`` (rows act on complex states)."""
        return self.weight.apply(self.modes).conj().T

    def __call__(self, X) -> np.ndarray:
        return self.weight.gram(self.modes, X)

    def project(self, X) -> np.ndarray:
        """``P_s X = Theta_s Theta_s^+ X``."""
        return self.modes @ self(X)


def output_projection(basis: ModeBasis, s: int) -> OutputProjection:
    if basis.kind is not BasisKind.POD:
        raise InvalidParameterError("output projections are built from POD modes")
    if s < 1 or s > basis.rank:
        raise InvalidParameterError(f"s={s} exceeds POD rank {basis.rank}")
    return OutputProjection(basis.modes[:, :s], basis.weight)


def orthonormalize(Q: np.ndarray, W: Weight) -> np.ndarray:
    """W-orthonormal basis for the column span of ``Q`` (real combinations if W is real)."""
    G = W.gram(Q)
    lam, U = np.linalg.eigh(G)
    keep = lam > 1e-12 * max(lam.max(), np.finfo(float).tiny)
    return (Q @ U[:, keep]) / np.sqrt(lam[keep])
