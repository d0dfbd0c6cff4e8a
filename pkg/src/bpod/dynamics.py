"""Explicit RK4 time integration and impulse-response snapshot generation.

For a linear autonomous system one RK4 step is multiplication by the
amplification matrix ``S = I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24``.  The
trajectory between two samples ``k`` steps apart is therefore ``S^k x``, which
is what :func:`propagate` applies (per block, by repeated squaring).  The
result is the RK4 solution, not an exponential integrator; :func:`rk4_march`
is the literal stage-by-stage loop kept as a cross-check.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DivergenceError, InvalidParameterError
from .system import BlockDiag, LinearSystem, Weight

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e12
# RK4 stability polynomial margin when choosing a stable step
_STABILITY_MARGIN = 1.0 + 1e-12


class SnapshotKind(str, Enum):
    DIRECT = "direct"
    ADJOINT = "adjoint"


@dataclass(frozen=True)
class SnapshotSet:
    """Snapshots as columns, each scaled by the square root of its time weight.

    With this scaling ``X X^H`` (in the state weight) is the trapezoidal
    approximation of the finite-time Gramian.
    """

    data: np.ndarray
    times: np.ndarray
    weights: np.ndarray
    kind: SnapshotKind = SnapshotKind.DIRECT
    source: str = ""
    decayed: bool = True
    terminal_ratio: float = float("nan")
    dt: float = float("nan")

    def __post_init__(self):
        if self.data.shape[1] != self.times.size or self.times.size != self.weights.size:
            raise InvalidParameterError("column count must equal the number of times")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("snapshot times must be strictly increasing")
        if np.any(self.weights <= 0):
            raise InvalidParameterError("time weights must be positive")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def states(self) -> np.ndarray:
        """Unscaled states x(t_j)."""
        return self.data / np.sqrt(self.weights)


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.size == 1:
        return np.ones(1)
    h = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def rk4_step_matrix(A, dt: float) -> BlockDiag:
    """Amplification matrix of one RK4 step for ``dx/dt = A x``."""
    blocks = (A if isinstance(A, BlockDiag) else BlockDiag(A)).blocks
    hA = dt * blocks
    eye = np.broadcast_to(np.eye(blocks.shape[1]), blocks.shape)
    # Horner form of the degree-4 Taylor polynomial
    S = eye + hA / 4
    S = eye + np.matmul(hA, S) / 3
    S = eye + np.matmul(hA, S) / 2
    S = eye + np.matmul(hA, S)
    return BlockDiag(S)


def rk4_march(A: np.ndarray, x0: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    """Classical four-stage RK4 loop; returns the state after ``n_steps``."""
    x = np.array(x0, dtype=complex)
    for _ in range(n_steps):
        k1 = A @ x
        k2 = A @ (x + 0.5 * dt * k1)
        k3 = A @ (x + 0.5 * dt * k2)
        k4 = A @ (x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def rk4_stability_factor(A, dt: float) -> float:
    """``max |R(dt * lambda)|`` over the spectrum, R the RK4 polynomial."""
    lam = (A if isinstance(A, BlockDiag) else BlockDiag(A)).eigenvalues()
    z = dt * lam
    R = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
    return float(np.max(np.abs(R)))


def stable_time_step(A, dt: float) -> float:
    """Largest ``dt / k`` (k integer) for which RK4 does not amplify any mode."""
    lam = (A if isinstance(A, BlockDiag) else BlockDiag(A)).eigenvalues()
    k = 1
    while k < 10**6:
        z = (dt / k) * lam
        R = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
        if np.max(np.abs(R)) <= _STABILITY_MARGIN:
            return dt / k
        k += 1
    raise InvalidParameterError("no stable RK4 step found")


def _step_counts(times: np.ndarray, dt: float) -> np.ndarray:
    k = np.rint(np.asarray(times) / dt).astype(np.int64)
    if np.any(np.abs(k * dt - times) > 1e-9 * np.maximum(1.0, np.abs(times))):
        raise InvalidParameterError("dt must divide every sample time")
    return k


def _power_cache(S: BlockDiag):
    cache: dict[int, np.ndarray] = {0: None}

    def power(k: int) -> np.ndarray:
        if k not in cache:
            cache[k] = np.linalg.matrix_power(S.blocks, k)
        return cache[k]

    return power


def propagate(A, x0: np.ndarray, dt: float, T: float, sample_times,
              kind: SnapshotKind = SnapshotKind.DIRECT, source: str = "") -> SnapshotSet:
    """RK4 trajectory of ``dx/dt = A x`` sampled at ``sample_times`` in ``[0, T]``.

    Columns are scaled by the square root of trapezoidal time weights.
    Raises :class:`DivergenceError` if the norm exceeds ``1e12 |x0|``.
    """
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    A = A if isinstance(A, BlockDiag) else BlockDiag(A)
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise InvalidParameterError("need at least one sample time")
    if times[0] < 0 or times[-1] > T * (1 + 1e-12):
        raise InvalidParameterError("sample times must lie in [0, T]")
    steps = _step_counts(times, dt)
    if np.any(np.diff(steps) <= 0):
        raise InvalidParameterError("sample times must be strictly increasing on the dt grid")

    x0 = np.asarray(x0, dtype=complex)
    if x0.shape != (A.n,):
        raise InvalidParameterError("initial state has the wrong length")
    S = rk4_step_matrix(A, dt)
    power = _power_cache(S)
    nb, k = A.n_blocks, A.block_size
    limit = BLOWUP_FACTOR * max(np.linalg.norm(x0), np.finfo(float).tiny)

    out = np.empty((A.n, times.size), dtype=complex)
    x = x0.reshape(nb, k, 1)
    prev = 0
    for j, s in enumerate(steps):
        if s > prev:
            x = np.matmul(power(int(s - prev)), x)
            prev = s
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or nrm > limit:
            raise DivergenceError(
                f"RK4 trajectory diverged at t={s * dt:g} (dt={dt:g}); "
                "system unstable or time step too large")
        out[:, j] = x.ravel()
    w = trapezoid_weights(times)
    return SnapshotSet(out * np.sqrt(w), times, w, SnapshotKind(kind), source, dt=dt)


@dataclass(frozen=True)
class Schedule:
    """Snapshot timing.

    ``T=None`` runs until the energy drops below ``decay_threshold`` times its
    initial value (capped at ``T_max``), then places ``count`` equally spaced
    samples on ``[0, T]``.  With ``fine_fraction`` set, that fraction of the
    samples covers the first ``fine_horizon`` fraction of the horizon and the
    rest is spaced uniformly afterwards.
    """

    count: int = 500
    dt: float = 0.01
    T: float | None = None
    decay_threshold: float = 1e-4
    T_max: float = 5000.0
    fine_fraction: float | None = None
    fine_horizon: float = 0.1
    auto_dt: bool = True

    def __post_init__(self):
        if self.count < 1:
            raise InvalidParameterError("need at least one snapshot")
        if self.dt <= 0 or (self.T is not None and self.T <= 0):
            raise InvalidParameterError("dt and T must be positive")
        if not 0 < self.decay_threshold < 1:
            raise InvalidParameterError("decay threshold must lie in (0, 1)")
        if self.fine_fraction is not None and not 0 < self.fine_fraction < 1:
            raise InvalidParameterError("fine_fraction must lie in (0, 1)")

    def nominal_times(self, T: float) -> np.ndarray:
        m = self.count
        if self.fine_fraction is None or m < 4:
            return np.linspace(0.0, T, m)
        n1 = max(2, int(round(self.fine_fraction * m)))
        n2 = m - n1
        T1 = self.fine_horizon * T
        fine = np.arange(n1) * (T1 / n1)
        coarse = np.linspace(T1, T, n2)
        return np.concatenate([fine, coarse])

    def sample_times(self, T: float, dt: float) -> np.ndarray:
        t = np.rint(self.nominal_times(T) / dt) * dt
        t = np.unique(t)
        if t.size != self.count:
            raise InvalidParameterError(
                f"dt={dt:g} too coarse to place {self.count} distinct samples on [0, {T:g}]")
        return t


def _decay_horizon(A: BlockDiag, x0: np.ndarray, E: Weight, dt: float,
                   threshold: float, T_max: float, chunk: float):
    """First time on a ``chunk`` grid where the E-energy falls below ``threshold * E0``."""
    S = rk4_step_matrix(A, dt)
    k = max(1, int(round(chunk / dt)))
    P = np.linalg.matrix_power(S.blocks, k)
    e0 = E.norm(x0) ** 2
    x = np.asarray(x0, dtype=complex).reshape(A.n_blocks, A.block_size, 1)
    t, steps = 0.0, 0
    while steps * dt < T_max:
        x = np.matmul(P, x)
        steps += k
        e = E.norm(x.ravel()) ** 2
        if not np.isfinite(e) or e > BLOWUP_FACTOR**2 * e0:
            raise DivergenceError("trajectory diverged while searching for the decay time")
        if e <= threshold * e0:
            return steps * dt, True
    return steps * dt, False


def _run(A: BlockDiag, x0, E: Weight, schedule: Schedule, kind, source) -> SnapshotSet:
    dt = stable_time_step(A, schedule.dt) if schedule.auto_dt else schedule.dt
    if dt < schedule.dt:
        log.info("RK4 step reduced from %g to %g for stability", schedule.dt, dt)
    decayed = True
    if schedule.T is None:
        T, decayed = _decay_horizon(A, x0, E, dt, schedule.decay_threshold,
                                    schedule.T_max, chunk=max(dt, 0.5))
        if not decayed:
            warnings.warn(f"response has not decayed below {schedule.decay_threshold:g} "
                          f"of its initial energy by T_max={schedule.T_max:g}", RuntimeWarning)
        # snap the horizon so uniform samples land on the dt grid
        per = int(np.ceil(T / dt / max(schedule.count - 1, 1)))
        T = per * dt * max(schedule.count - 1, 1)
    else:
        T = schedule.T
    times = schedule.sample_times(T, dt)
    snaps = propagate(A, x0, dt, times[-1], times, kind=kind, source=source)
    states_end = snaps.data[:, -1] / np.sqrt(snaps.weights[-1])
    e0 = E.norm(np.asarray(x0, dtype=complex)) ** 2
    ratio = float(E.norm(states_end) ** 2 / e0) if e0 > 0 else 0.0
    if schedule.T is None:
        decayed = decayed and ratio <= schedule.decay_threshold
    return SnapshotSet(snaps.data, snaps.times, snaps.weights, SnapshotKind(kind), source,
                       decayed=decayed, terminal_ratio=ratio, dt=dt)


def direct_impulse_snapshots(system: LinearSystem, column: int | np.ndarray = 0,
                             schedule: Schedule = Schedule()) -> SnapshotSet:
    """Impulse response ``exp(A t) b`` for one input column ``b``."""
    if not system.is_stable():
        raise InvalidParameterError("impulse snapshots need a stable system")
    if isinstance(column, (int, np.integer)):
        b = system.B[:, int(column)]
        source = f"B[:, {int(column)}]"
    else:
        b = np.asarray(column, dtype=complex)
        source = "custom"
    return _run(system.A, b, system.E, schedule, SnapshotKind.DIRECT, source)


def adjoint_initial_conditions(system: LinearSystem, pod_modes: np.ndarray) -> np.ndarray:
    """Columns of ``(Theta^+ C)^+`` for full-state output ``C = I``.

    ``Theta^+ = Theta^H E`` maps states to POD coefficients; its adjoint from
    the unweighted coefficient space into the M-weighted state space is
    ``M^{-1} E Theta``.
    """
    return system.M.solve(system.E.apply(pod_modes))


def adjoint_impulse_snapshots(system: LinearSystem, pod_basis, s: int,
                              schedule: Schedule = Schedule()) -> list[SnapshotSet]:
    """One adjoint impulse response per retained POD mode (``s`` runs)."""
    modes = pod_basis.modes if hasattr(pod_basis, "modes") else np.asarray(pod_basis)
    if s < 1 or s > modes.shape[1]:
        raise InvalidParameterError(f"s={s} exceeds the available {modes.shape[1]} POD modes")
    Aplus = system.adjoint()
    Z0 = adjoint_initial_conditions(system, modes[:, :s])
    out = []
    for j in range(s):
        out.append(_run(Aplus, Z0[:, j], system.M, schedule, SnapshotKind.ADJOINT,
                        f"adjoint of POD mode {j + 1}"))
    return out


def stack(sets: list[SnapshotSet]) -> SnapshotSet:
    """Concatenate several runs column-wise.

    Per-column weights are kept.  Times are shifted run by run so they stay
    increasing; run ``i`` starts one unit after run ``i - 1`` ends.
    """
    if len(sets) == 1:
        return sets[0]
    data = np.hstack([s.data for s in sets])
    offsets = np.cumsum([0.0] + [s.times[-1] + 1.0 for s in sets[:-1]])
    times = np.concatenate([s.times + o for s, o in zip(sets, offsets)])
    return SnapshotSet(data, times, np.concatenate([s.weights for s in sets]),
                       sets[0].kind, f"{len(sets)} runs",
                       decayed=all(s.decayed for s in sets),
                       terminal_ratio=max(s.terminal_ratio for s in sets),
                       dt=sets[0].dt)
