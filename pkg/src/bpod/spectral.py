"""Chebyshev collocation on [-1, 1]: grids, differentiation matrices, quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParameterError


class Boundary(str, Enum):
    NONE = "none"
    CLAMPED = "clamped"


@dataclass(frozen=True)
class Grid1D:
    """Gauss-Lobatto points ``y_j = cos(pi j / N)``, ordered from +1 to -1."""

    N: int
    points: np.ndarray

    @property
    def n_points(self) -> int:
        return self.N + 1

    @property
    def interior_count(self) -> int:
        return self.N - 1

    @property
    def interior(self) -> np.ndarray:
        return self.points[1:-1]


@dataclass(frozen=True)
class DiffOperator:
    order: int
    matrix: np.ndarray
    boundary_treatment: Boundary = Boundary.NONE

    def __matmul__(self, other):
        return self.matrix @ other


@dataclass(frozen=True)
class Quadrature:
    weights: np.ndarray

    def integrate(self, f: np.ndarray) -> float:
        return self.weights @ f


def chebyshev_grid(N: int) -> Grid1D:
    """Return the ``N + 1`` Gauss-Lobatto nodes for an even polynomial degree ``N``."""
    if int(N) != N or N < 2 or N % 2:
        raise InvalidParameterError(f"N must be an even integer >= 2, got {N!r}")
    N = int(N)
    # sin form keeps the nodes exactly antisymmetric
    points = np.sin(np.pi * np.arange(N, -N - 1, -2) / (2 * N))
    return Grid1D(N=N, points=points)


def _chebdif(N: int, max_order: int) -> list[np.ndarray]:
    """Differentiation matrices of orders 1..max_order on the N+1 Lobatto nodes.

    Recursion of Welfert with the trigonometric-difference and flipping
    tricks of Don & Solomonoff for round-off control.
    """
    n = N + 1
    k = np.arange(n)
    th = k * np.pi / N
    x = np.sin(np.pi * np.arange(N, -N - 1, -2) / (2 * N))

    T = np.tile(th / 2, (n, 1)).T
    DX = 2 * np.sin(T.T + T) * np.sin(T.T - T)
    n1, n2 = n // 2, (n + 1) // 2
    DX[n1:, :] = -np.flipud(np.fliplr(DX[:n2, :]))
    DX[np.diag_indices(n)] = 1.0

    sign = (-1.0) ** k
    C = np.outer(sign, sign)
    C[0, :] *= 2
    C[-1, :] *= 2
    C[:, 0] /= 2
    C[:, -1] /= 2

    Z = 1.0 / DX
    Z[np.diag_indices(n)] = 0.0

    out = []
    D = np.eye(n)
    for ell in range(1, max_order + 1):
        D = ell * Z * (C * np.tile(np.diag(D), (n, 1)).T - D)
        D[np.diag_indices(n)] = -D.sum(axis=1)
        out.append(D.copy())
    return out, x


def diff_matrix(grid: Grid1D, order: int, boundary: Boundary | str = Boundary.NONE) -> DiffOperator:
    """Collocation differentiation matrix of the given order on ``grid``.

    With ``boundary="clamped"`` (order 4 only) the result acts on interior
    nodal values of functions with ``f(+-1) = f'(+-1) = 0``: the interpolant is
    ``f = (1 - y^2) g`` with ``g(+-1) = 0``, so

        f'''' = (1 - y^2) g'''' - 8 y g''' - 12 g''.

    The returned matrix is ``(N-1) x (N-1)``.
    """
    boundary = Boundary(boundary)
    if order not in (1, 2, 4):
        raise InvalidParameterError(f"unsupported derivative order {order!r}")
    if boundary is Boundary.CLAMPED and order != 4:
        raise InvalidParameterError("clamped treatment is only defined for order 4")

    mats = _matrices(grid.N)
    if boundary is Boundary.NONE:
        return DiffOperator(order, mats[order - 1].copy(), Boundary.NONE)

    y = grid.points
    D2, D3, D4 = mats[1], mats[2], mats[3]
    P = (np.diag(1 - y**2) @ D4 - 8 * np.diag(y) @ D3 - 12 * D2)[1:-1, 1:-1]
    S = 1.0 / (1 - grid.interior**2)
    return DiffOperator(4, P * S[np.newaxis, :], Boundary.CLAMPED)


_CACHE: dict[int, list[np.ndarray]] = {}


def _matrices(N: int) -> list[np.ndarray]:
    if N not in _CACHE:
        mats, _ = _chebdif(N, 4)
        for m in mats:
            m.setflags(write=False)
        _CACHE[N] = mats
    return _CACHE[N]


def quadrature_weights(grid: Grid1D) -> Quadrature:
    """Clenshaw-Curtis weights on the Gauss-Lobatto nodes (exact to degree N)."""
    N = grid.N
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    interior = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[interior]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
    w[interior] = 2 * v / N
    return Quadrature(weights=w)
