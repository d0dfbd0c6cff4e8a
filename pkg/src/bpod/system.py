"""Block-diagonal linear systems and weighted inner products.

A wavenumber-decoupled system is stored as a stack of dense complex blocks
``(n_blocks, k, k)`` acting on a flat state of length ``n_blocks * k``.  A
single-wavenumber model is the one-block case.

Two inner-product semantics are supported.  With ``real=False`` the state is
a genuine complex vector and ``<x, y> = x^H W y``.  With ``real=True`` the
complex array stores Fourier amplitudes of a *real* physical field; the
space is then a real vector space and ``<x, y> = Re(x^H W y)``.  Linear
combinations in that space must use real coefficients, which is what POD and
BPOD produce when their Gram matrices are real.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .errors import InvalidParameterError, NumericalFailure


class BlockDiag:
    """Immutable stack of square blocks forming a block-diagonal matrix."""

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        blocks = np.asarray(blocks)
        if blocks.ndim == 2:
            blocks = blocks[np.newaxis]
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
            raise InvalidParameterError("blocks must have shape (n_blocks, k, k)")
        blocks = blocks.copy()
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    def __setattr__(self, name, value):
        raise AttributeError("BlockDiag is immutable")

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]

    @property
    def n(self) -> int:
        return self.n_blocks * self.block_size

    def _split(self, X: np.ndarray):
        X = np.asarray(X)
        vec = X.ndim == 1
        X2 = X[:, np.newaxis] if vec else X
        if X2.shape[0] != self.n:
            raise InvalidParameterError(f"expected {self.n} rows, got {X2.shape[0]}")
        return X2.reshape(self.n_blocks, self.block_size, -1), vec

    @staticmethod
    def _join(Y: np.ndarray, vec: bool) -> np.ndarray:
        Y = Y.reshape(-1, Y.shape[-1])
        return Y[:, 0] if vec else Y

    def __matmul__(self, X):
        Xb, vec = self._split(X)
        return self._join(np.matmul(self.blocks, Xb), vec)

    def solve(self, X) -> np.ndarray:
        Xb, vec = self._split(X)
        return self._join(np.linalg.solve(self.blocks, Xb), vec)

    def conj_transpose(self) -> "BlockDiag":
        return BlockDiag(np.conj(np.swapaxes(self.blocks, 1, 2)))

    def __add__(self, other: "BlockDiag") -> "BlockDiag":
        return BlockDiag(self.blocks + other.blocks)

    def scale(self, c: float) -> "BlockDiag":
        return BlockDiag(c * self.blocks)

    def dense(self) -> np.ndarray:
        return sla.block_diag(*self.blocks)

    def eigenvalues(self) -> np.ndarray:
        lam = np.linalg.eigvals(self.blocks).ravel()
        return lam[np.argsort(-lam.real, kind="stable")]


@dataclass(frozen=True)
class Weight:
    """Gram matrix of an inner product, stored block-diagonally."""

    matrix: BlockDiag
    real: bool = False
    name: str = ""

    @classmethod
    def of(cls, W, real: bool = False, name: str = "") -> "Weight":
        return cls(W if isinstance(W, BlockDiag) else BlockDiag(W), real, name)

    @property
    def n(self) -> int:
        return self.matrix.n

    def apply(self, X) -> np.ndarray:
        return self.matrix @ X

    def solve(self, X) -> np.ndarray:
        return self.matrix.solve(X)

    def gram(self, X, Y=None) -> np.ndarray:
        """``X^H W Y`` (its real part when ``real``)."""
        X = np.asarray(X)
        Xv = X[:, np.newaxis] if X.ndim == 1 else X
        WY = self.apply(Xv if Y is None else (Y[:, np.newaxis] if np.ndim(Y) == 1 else Y))
        # one complex GEMM; strided .real/.imag views would bypass BLAS
        G = Xv.conj().T @ WY
        if self.real:
            G = G.real
        if Y is None:
            G = 0.5 * (G + G.conj().T)
        return G

    def inner(self, x, y):
        g = self.gram(x, y)
        return g.item() if g.size == 1 else g

    def norm(self, x) -> np.ndarray:
        """Column norms of ``x``."""
        x = np.asarray(x)
        xv = x[:, np.newaxis] if x.ndim == 1 else x
        Wx = self.apply(xv)
        sq = np.real(np.sum(xv.conj() * Wx, axis=0))
        out = np.sqrt(np.maximum(sq, 0.0))
        return out[0] if x.ndim == 1 else out

    def realified(self) -> np.ndarray:
        """Dense real Gram matrix on ``[Re x; Im x]`` (real semantics only)."""
        W = self.matrix.dense()
        return np.block([[W.real, -W.imag], [W.imag, W.real]])


def realify(Z: np.ndarray) -> np.ndarray:
    """Real matrix acting on ``[Re x; Im x]`` equivalent to complex ``Z``."""
    return np.block([[Z.real, -Z.imag], [Z.imag, Z.real]])


def realify_vectors(X: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(X), np.imag(X)], axis=0)


def complexify_vectors(Xr: np.ndarray) -> np.ndarray:
    n = Xr.shape[0] // 2
    return Xr[:n] + 1j * Xr[n:]


@dataclass(frozen=True)
class LinearSystem:
    """Stable LTI system ``dx/dt = A x + B u`` with state (M) and output (E) weights.

    ``A = A_conv + A_diff / Re``.  The full-state output is measured in the
    E inner product; an output projection replaces it by POD coefficients.
    """

    A: BlockDiag
    A_conv: BlockDiag
    A_diff: BlockDiag
    B: np.ndarray
    M: Weight
    E: Weight
    Re: float
    real: bool = False
    label: str = ""

    def __post_init__(self):
        B = np.asarray(self.B, dtype=complex)
        if B.ndim == 1:
            B = B[:, np.newaxis]
        if B.shape[0] != self.A.n:
            raise InvalidParameterError("B has the wrong number of rows")
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @classmethod
    def from_model(cls, model, B=None, real: bool = False, label: str = "") -> "LinearSystem":
        """Wrap a single-wavenumber :class:`~bpod.channel.StateSpaceModel`.

        With ``real=True`` the state is the real field
        ``Re{x(y) exp(i(alpha x + beta z))}`` and inner products are real parts.
        """
        B = model.B if B is None else B
        return cls(
            A=BlockDiag(model.A),
            A_conv=BlockDiag(model.A_conv),
            A_diff=BlockDiag(model.A_diff),
            B=B,
            M=Weight.of(model.M_weight, real, "M"),
            E=Weight.of(model.E_weight, real, "E"),
            Re=model.Re,
            real=real,
            label=label,
        )

    def at_reynolds(self, Re: float) -> "LinearSystem":
        if Re <= 0:
            raise InvalidParameterError("Re must be positive")
        A = self.A_conv + self.A_diff.scale(1.0 / Re)
        return replace(self, A=A, Re=float(Re))

    def with_input(self, B) -> "LinearSystem":
        return replace(self, B=B)

    def adjoint(self) -> BlockDiag:
        """``A^+ = M^{-1} A^H M``, the adjoint in the state inner product."""
        M = self.M.matrix.blocks
        AhM = np.matmul(np.conj(np.swapaxes(self.A.blocks, 1, 2)), M)
        return BlockDiag(np.linalg.solve(M, AhM))

    def eigenvalues(self) -> np.ndarray:
        """Spectrum of A; for real systems includes the conjugate copies."""
        lam = self.A.eigenvalues()
        if self.real:
            lam = np.concatenate([lam, lam.conj()])
            lam = lam[np.argsort(-lam.real, kind="stable")]
        return lam

    def is_stable(self) -> bool:
        return bool(self.A.eigenvalues()[0].real < 0)

    def dense(self):
        """Dense ``(A, B, M, E)``; realified when the system has real semantics."""
        if self.A.n_blocks != 1 and self.n > 4000:
            raise NumericalFailure("system too large for dense linear algebra")
        A = self.A.dense()
        if not self.real:
            return A, self.B, self.M.matrix.dense(), self.E.matrix.dense()
        return realify(A), realify_vectors(self.B), self.M.realified(), self.E.realified()

    def dense_split(self):
        Ac, Ad = self.A_conv.dense(), self.A_diff.dense()
        if self.real:
            return realify(Ac), realify(Ad)
        return Ac, Ad
