"""Evaluation of full and reduced models: error norms, frequency response, spectra, subspaces."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .balancing import ReducedOrderModel
from .dynamics import SnapshotSet
from .errors import InvalidParameterError
from .modal import ModeBasis, OutputProjection, orthonormalize
from .system import BlockDiag, LinearSystem, Weight

BOUND_SLACK = 0.02


# --------------------------------------------------------------------------- time domain

@dataclass(frozen=True)
class OutputSeries:
    """Output samples as columns, with the time-quadrature weights of the run.

    ``weight`` is the inner product of the output space (``None``: Euclidean).
    """

    times: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    weight: Weight | None = None

    def norms(self) -> np.ndarray:
        if self.weight is None:
            return np.linalg.norm(self.values, axis=0)
        return self.weight.norm(self.values)

    def two_norm(self) -> float:
        return float(np.sqrt(np.sum(self.weights * self.norms() ** 2)))


def full_outputs(snapshots: SnapshotSet, weight: Weight,
                 output: OutputProjection | None = None) -> OutputSeries:
    """Full-model outputs: the state itself (E norm) or its POD coefficients."""
    X = snapshots.states()
    if output is None:
        return OutputSeries(snapshots.times, snapshots.weights, X, weight)
    return OutputSeries(snapshots.times, snapshots.weights, output(X))


def rom_states(rom: ReducedOrderModel, times: np.ndarray, column: int = 0) -> np.ndarray:
    """Impulse response ``exp(Ar t) Br[:, column]`` at the given times (exact exponential)."""
    times = np.asarray(times, dtype=float)
    a = np.asarray(rom.Br[:, column], dtype=complex)
    out = np.empty((rom.rank, times.size), dtype=complex)
    cache: dict[float, np.ndarray] = {}
    t_prev = 0.0
    for j, t in enumerate(times):
        h = round(t - t_prev, 12)
        if h != 0.0:
            if h not in cache:
                cache[h] = sla.expm(rom.Ar * h)
            a = cache[h] @ a
        out[:, j] = a
        t_prev = t
    return out.real if rom.real else out


def rom_outputs(rom: ReducedOrderModel, template: OutputSeries, weight: Weight | None = None,
                output: OutputProjection | None = None, column: int = 0) -> OutputSeries:
    """ROM outputs on the sample times of ``template``, in the same output space."""
    a = rom_states(rom, template.times, column)
    if output is None and template.weight is not None:
        return OutputSeries(template.times, template.weights, rom.state_map() @ a, template.weight)
    if output is None:
        raise InvalidParameterError("need an output projection or a weighted template")
    return OutputSeries(template.times, template.weights, output(rom.state_map() @ a))


def impulse_error_2norm(full: OutputSeries, rom: OutputSeries) -> float:
    """``||G - G_r||_2 / ||G||_2`` from sampled impulse-response outputs."""
    if full.times.shape != rom.times.shape or np.any(np.abs(full.times - rom.times) > 1e-9):
        raise InvalidParameterError("full and reduced outputs are sampled at different times")
    if full.values.shape != rom.values.shape:
        raise InvalidParameterError("full and reduced outputs have different shapes")
    diff = OutputSeries(full.times, full.weights, full.values - rom.values, full.weight)
    ref = full.two_norm()
    return diff.two_norm() / ref if ref > 0 else 0.0


def energy_curve(states: np.ndarray, E: Weight) -> np.ndarray:
    return E.norm(states) ** 2


# --------------------------------------------------------------------------- frequency domain

@dataclass(frozen=True)
class FrequencyResponse:
    omegas: np.ndarray
    sigma_max: np.ndarray
    label: str = ""

    def peak(self) -> tuple[float, float]:
        j = int(np.argmax(self.sigma_max))
        return float(self.omegas[j]), float(self.sigma_max[j])


def _resolvent(A: BlockDiag | np.ndarray, B: np.ndarray, s: complex) -> np.ndarray:
    if isinstance(A, BlockDiag):
        shift = s * np.eye(A.block_size)[np.newaxis]
        return BlockDiag(shift - A.blocks).solve(B)
    return np.linalg.solve(s * np.eye(A.shape[0]) - A, B)


def _gram_pair(Xa: np.ndarray, Xb: np.ndarray, weight: Weight | None) -> np.ndarray:
    """Hermitian Gram of the complexified columns ``Xa + j Xb`` (real-field semantics)."""
    if weight is None:
        g = lambda P, Q: (P.conj().T @ Q).real
    else:
        g = weight.gram
    Gab = g(Xa, Xb)
    return g(Xa, Xa) + g(Xb, Xb) + 1j * (Gab - Gab.T)


class _Response:
    """Evaluates the complexified frequency response of a model at one frequency.

    Returned as the pair ``(Xa, Xb)`` of output columns (real semantics) or a
    single complex matrix ``Z`` (complex semantics, ``Xb`` is ``None``).
    """

    def __init__(self, model, output: OutputProjection | None):
        self.model, self.output = model, output

    def _out(self, X):
        return X if self.output is None else self.output(X)

    def __call__(self, w: float):
        m = self.model
        if isinstance(m, LinearSystem):
            z1 = _resolvent(m.A, m.B, 1j * w)
            if not m.real:
                return self._out(z1), None
            z2 = _resolvent(m.A, m.B, -1j * w)
            return self._out(0.5 * (z1 + z2)), self._out((z1 - z2) / 2j)
        ah = _resolvent(m.Ar, m.Br, 1j * w)
        P = m.state_map()
        if not m.real:
            return self._out(P @ ah), None
        return self._out(P @ ah.real), self._out(P @ ah.imag)


def _sigma(pair_a, pair_b, weight: Weight | None) -> float:
    Xa = pair_a[0] if pair_b is None else pair_a[0] - pair_b[0]
    Xb = pair_a[1] if pair_b is None else (None if pair_a[1] is None else pair_a[1] - pair_b[1])
    if Xb is None:
        G = Xa.conj().T @ Xa if weight is None else weight.gram(Xa)
    else:
        G = _gram_pair(Xa, Xb, weight)
    lam = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    return float(np.sqrt(max(lam[-1], 0.0)))


def frequency_response(model, omegas, E: Weight | None = None,
                       output: OutputProjection | None = None, label: str = "") -> FrequencyResponse:
    """``sigma_max`` of the transfer function on a frequency grid.

    ``model`` is a :class:`LinearSystem` or a :class:`ReducedOrderModel`; the
    output is the full state in the ``E`` norm, or POD coefficients if
    ``output`` is given.  Real-field systems are evaluated on the
    complexification of the real state space.
    """
    omegas = np.asarray(omegas, dtype=float)
    if np.any(omegas < 0):
        raise InvalidParameterError("frequencies must be non-negative")
    weight = None if output is not None else E
    if weight is None and output is None:
        raise InvalidParameterError("need the energy weight or an output projection")
    resp = _Response(model, output)
    sig = np.array([_sigma(resp(w), None, weight) for w in omegas])
    return FrequencyResponse(omegas, sig, label)


def log_grid(lo: float = 1e-3, hi: float = 1e2, count: int = 400) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), count)


def _golden_max(f, a: float, b: float, tol: float = 1e-6) -> tuple[float, float]:
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol * max(1.0, abs(b) + abs(a)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def hinf_norm(model, E: Weight | None = None, output: OutputProjection | None = None,
              rom: ReducedOrderModel | None = None, omegas=None) -> tuple[float, float]:
    """Peak ``sigma_max`` of ``G`` (or of ``G - G_r``) and its frequency.

    Dense log sweep plus ``omega = 0``, then golden-section refinement
    around the best sample.
    """
    omegas = log_grid() if omegas is None else np.asarray(omegas, dtype=float)
    grid = np.concatenate([[0.0], omegas])
    weight = None if output is not None else E
    full = _Response(model, output)
    red = None if rom is None else _Response(rom, output)
    f = lambda w: _sigma(full(w), None if red is None else red(w), weight)
    vals = np.array([f(w) for w in grid])
    j = int(np.argmax(vals))
    lo = grid[max(j - 1, 0)]
    hi = grid[min(j + 1, grid.size - 1)]
    if hi > lo:
        w, v = _golden_max(f, lo, hi)
        if v > vals[j]:
            return v, w
    return float(vals[j]), float(grid[j])


@dataclass(frozen=True)
class ErrorReport:
    rank: int
    two_norm_rel: float
    hinf_est: float
    hsv_lower: float
    hsv_upper: float

    def within_bounds(self, slack: float = BOUND_SLACK) -> bool:
        return (self.hsv_lower * (1 - slack) <= self.hinf_est <= self.hsv_upper * (1 + slack))


def hsv_bounds(hsv: np.ndarray, r: int) -> tuple[float, float]:
    """Lower bound ``sigma_{r+1}`` and upper bound ``2 sum_{j>r} sigma_j`` (real systems)."""
    tail = np.asarray(hsv)[r:]
    if tail.size == 0:
        return 0.0, 0.0
    return float(tail[0]), float(2 * np.sum(tail))


def hinf_error(system: LinearSystem, rom: ReducedOrderModel, hsv: np.ndarray,
               two_norm_rel: float = float("nan"), output: OutputProjection | None = None,
               omegas=None) -> ErrorReport:
    """H-infinity error estimate of ``rom`` against ``system`` with the HSV bounds."""
    h, _ = hinf_norm(system, system.E, output, rom, omegas)
    lo, hi = hsv_bounds(hsv, rom.rank)
    return ErrorReport(rom.rank, two_norm_rel, h, lo, hi)


def frequency_two_norm(model, E: Weight, omegas: np.ndarray) -> float:
    """``sqrt((1/pi) int_0^inf sigma^2 d omega)`` by trapezoid rule on ``omegas``.

    Exact 2-norm (Frobenius sum) for single-input real systems.
    """
    fr = frequency_response(model, omegas, E)
    return float(np.sqrt(np.trapezoid(fr.sigma_max**2, fr.omegas) / np.pi))


# --------------------------------------------------------------------------- spectra

def spectrum(model) -> np.ndarray:
    """Eigenvalues sorted by real part, descending."""
    if isinstance(model, ReducedOrderModel):
        return model.eigenvalues()
    if isinstance(model, LinearSystem):
        return model.A.eigenvalues()
    lam = np.linalg.eigvals(np.asarray(model))
    return lam[np.argsort(-lam.real, kind="stable")]


def match_eigenvalues(reference: np.ndarray, approx: np.ndarray) -> list[tuple[complex, complex]]:
    """Greedy nearest-neighbour pairing, dominant reference eigenvalues first."""
    ref = reference[np.argsort(-reference.real, kind="stable")]
    pool = list(approx)
    pairs = []
    for lam in ref:
        if not pool:
            break
        j = int(np.argmin([abs(lam - mu) for mu in pool]))
        pairs.append((complex(lam), complex(pool.pop(j))))
    return pairs


def modal_controllability(system: LinearSystem, column: int = 0):
    """Eigenvalues of A with the residual ``|<w, b>_M| / ||b||_M`` per mode.

    ``w`` runs over the M-normalized eigenvectors of the adjoint ``A^+``
    (conjugate eigenvalues), so a zero residual means the mode is not
    excited by input ``b``.
    """
    if system.A.n_blocks != 1:
        raise InvalidParameterError("modal controllability is for single-block systems")
    A = system.A.blocks[0]
    Ap = system.adjoint().blocks[0]
    lam, _ = np.linalg.eig(A)
    mu, Wv = np.linalg.eig(Ap)
    M = system.M.matrix.blocks[0]
    b = system.B[:, column]
    nb = np.sqrt((b.conj() @ M @ b).real)
    res = np.empty(lam.size)
    for i, l in enumerate(lam):
        k = int(np.argmin(np.abs(mu - np.conj(l))))
        w = Wv[:, k]
        w = w / np.sqrt((w.conj() @ M @ w).real)
        res[i] = abs(w.conj() @ M @ b) / nb
    order = np.argsort(-lam.real, kind="stable")
    return lam[order], res[order]


def reynolds_continuation(rom: ReducedOrderModel, Re_new: float) -> ReducedOrderModel:
    return rom.at_reynolds(Re_new)


# --------------------------------------------------------------------------- subspaces

def subspace_trace(QA: np.ndarray, QB: np.ndarray, W: Weight) -> float:
    """``Tr(P_A P_B P_A)`` for W-orthogonal projectors onto the two column spans."""
    if QA.shape[0] != QB.shape[0]:
        raise InvalidParameterError("bases live in different spaces")
    if QA.shape[1] == 0 or QB.shape[1] == 0:
        return 0.0
    A = orthonormalize(QA, W)
    B = orthonormalize(QB, W)
    G = W.gram(A, B)
    return float(np.sum(np.abs(G) ** 2))


def input_projection_norm(basis: ModeBasis, B: np.ndarray, W: Weight, r: int,
                          mode: str = "orthogonal") -> float:
    """``||P_r b||_W / ||b||_W`` for the orthogonal or the Petrov-Galerkin projector."""
    b = np.asarray(B)
    b = b[:, 0] if b.ndim == 2 else b
    nb = W.norm(b)
    if r == 0:
        return 0.0
    if r > basis.rank:
        raise InvalidParameterError(f"rank {r} exceeds basis rank {basis.rank}")
    if mode == "orthogonal":
        Q = orthonormalize(basis.modes[:, :r], W)
        pb = Q @ W.gram(Q, b[:, np.newaxis])
    elif mode == "petrov":
        if basis.adjoint_modes is None:
            raise InvalidParameterError("Petrov projection needs adjoint modes")
        coeff = basis.weight.gram(basis.adjoint_modes[:, :r], b[:, np.newaxis])
        pb = basis.modes[:, :r] @ coeff
    else:
        raise InvalidParameterError(f"unknown projection mode {mode!r}")
    return float(W.norm(pb[:, 0]) / nb)


# --------------------------------------------------------------------------- CSV output

def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def eigen_table_csv(path, values: np.ndarray) -> Path:
    v = np.asarray(values, dtype=float)
    cum = np.cumsum(v) / np.sum(v)
    return write_csv(path, ["index", "value", "cumulative_fraction"],
                     zip(range(1, v.size + 1), v, cum))


def freq_response_csv(path, responses: list[FrequencyResponse]) -> Path:
    rows = [(fr.label, w, s) for fr in responses for w, s in zip(fr.omegas, fr.sigma_max)]
    return write_csv(path, ["system", "omega", "sigma_max"], rows)


def error_norms_csv(path, reports: dict[str, list[ErrorReport]]) -> Path:
    rows = [(label, e.rank, e.two_norm_rel, e.hinf_est, e.hsv_lower, e.hsv_upper)
            for label, reps in reports.items() for e in reps]
    return write_csv(path, ["system", "rank", "two_norm", "hinf", "lower", "upper"], rows)


def spectrum_csv(path, spectra: dict[str, np.ndarray]) -> Path:
    rows = [(lam.real, lam.imag, label) for label, lams in spectra.items() for lam in lams]
    return write_csv(path, ["re", "im", "system"], rows)


def energy_csv(path, curves: dict[str, tuple[np.ndarray, np.ndarray]]) -> Path:
    rows = [(label, t, e) for label, (ts, es) in curves.items() for t, e in zip(ts, es)]
    return write_csv(path, ["system", "t", "E"], rows)


def trace_csv(path, traces: dict[str, list[tuple[int, float]]]) -> Path:
    rows = [(label, r, T) for label, vals in traces.items() for r, T in vals]
    return write_csv(path, ["comparison", "rank", "T"], rows)
