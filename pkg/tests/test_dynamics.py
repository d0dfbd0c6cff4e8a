import warnings

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from bpod.dynamics import (Schedule, SnapshotSet, adjoint_impulse_snapshots,
                           adjoint_initial_conditions, direct_impulse_snapshots, propagate,
                           rk4_march, rk4_stability_factor, rk4_step_matrix, stable_time_step,
                           stack, trapezoid_weights)
from bpod.errors import DivergenceError, InvalidParameterError
from bpod.system import BlockDiag

from conftest import make_system


def stable_matrix(rng, n=6):
    Q = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    lam = -rng.uniform(0.1, 2.0, n) + 1j * rng.uniform(-2, 2, n)
    return Q @ np.diag(lam) @ np.linalg.inv(Q)


def test_zero_initial_condition_stays_zero():
    A = stable_matrix(np.random.default_rng(0))
    out = propagate(A, np.zeros(6), 0.01, 1.0, np.linspace(0, 1, 11))
    assert np.all(out.data == 0)


def test_eigenvector_evolves_exponentially():
    sys = make_system(32)
    A = sys.A.blocks[0]
    lam, V = np.linalg.eig(A)
    k = int(np.argmax(lam.real))
    v = V[:, k]
    times = np.linspace(0, 10, 11)
    X = propagate(A, v, 1e-3, 10.0, times).states()
    exact = np.outer(v, np.exp(lam[k] * times))
    assert np.max(np.abs(X - exact)) <= 1e-8 * np.abs(v).max()


def test_rk4_is_fourth_order():
    rng = np.random.default_rng(1)
    A = stable_matrix(rng)
    x0 = rng.standard_normal(6) + 0j
    ref = sla.expm(A) @ x0
    errs = [np.linalg.norm(rk4_march(A, x0, 1.0 / n, n) - ref) for n in (10, 20)]
    assert 14.0 <= errs[0] / errs[1] <= 18.0


def test_step_matrix_matches_stage_loop():
    rng = np.random.default_rng(2)
    A = stable_matrix(rng)
    x0 = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    X = propagate(A, x0, 0.05, 2.0, [2.0]).states()[:, 0]
    np.testing.assert_allclose(X, rk4_march(A, x0, 0.05, 40), rtol=1e-12, atol=1e-14)
    S = rk4_step_matrix(A, 0.05).blocks[0]
    np.testing.assert_allclose(S @ x0, rk4_march(A, x0, 0.05, 1), rtol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_propagation_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    A = stable_matrix(rng, 5)
    x, y = (rng.standard_normal(5) + 1j * rng.standard_normal(5) for _ in range(2))
    t = np.linspace(0, 1, 5)
    run = lambda z: propagate(A, z, 0.01, 1.0, t).data
    lhs = run(a * x + b * y)
    rhs = a * run(x) + b * run(y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.abs(rhs).max())


def test_stable_time_step_shrinks_step():
    A = np.diag([-1000.0 + 0j, -1.0])
    assert rk4_stability_factor(A, 0.01) > 1
    dt = stable_time_step(A, 0.01)
    assert dt < 0.01 and rk4_stability_factor(A, dt) <= 1 + 1e-12
    assert np.isclose(0.01 / dt, round(0.01 / dt))
    assert stable_time_step(np.diag([-1.0 + 0j]), 0.01) == 0.01


def test_divergence_is_reported():
    with pytest.raises(DivergenceError):
        propagate(np.array([[1.0 + 0j]]), np.ones(1), 0.01, 100.0, [0.0, 50.0, 100.0])


def test_propagate_rejects_bad_input():
    A = np.eye(2) * -1
    with pytest.raises(InvalidParameterError):
        propagate(A, np.ones(2), 0.0, 1.0, [0.0, 1.0])
    with pytest.raises(InvalidParameterError):
        propagate(A, np.ones(2), 0.3, 1.0, [0.0, 1.0])
    with pytest.raises(InvalidParameterError):
        propagate(A, np.ones(3), 0.1, 1.0, [0.0, 1.0])
    with pytest.raises(InvalidParameterError):
        propagate(A, np.ones(2), 0.1, 1.0, [0.0, 2.0])


def test_trapezoid_weights_integrate_constants():
    t = np.concatenate([np.linspace(0, 1, 11), np.linspace(1.5, 10, 9)])
    w = trapezoid_weights(t)
    assert w.sum() == pytest.approx(10.0)
    assert np.all(w > 0)
    assert trapezoid_weights(np.array([3.0]))[0] == 1.0


def test_snapshot_scaling_reproduces_time_integral():
    A = np.array([[-0.5 + 0j]])
    s = propagate(A, np.ones(1), 0.01, 20.0, np.linspace(0, 20, 2001))
    # int_0^20 exp(-t) dt
    assert np.sum(np.abs(s.data) ** 2) == pytest.approx(1 - np.exp(-20.0), rel=1e-4)


def test_snapshot_set_validation():
    with pytest.raises(InvalidParameterError):
        SnapshotSet(np.zeros((2, 3)), np.arange(2.0), np.ones(2))
    with pytest.raises(InvalidParameterError):
        SnapshotSet(np.zeros((2, 2)), np.array([1.0, 0.0]), np.ones(2))
    with pytest.raises(InvalidParameterError):
        SnapshotSet(np.zeros((2, 2)), np.arange(2.0), np.array([1.0, 0.0]))


def test_schedule_times():
    s = Schedule(count=11, dt=0.1)
    np.testing.assert_allclose(s.sample_times(10.0, 0.1), np.linspace(0, 10, 11))
    f = Schedule(count=100, dt=0.001, fine_fraction=0.25, fine_horizon=0.1)
    t = f.sample_times(100.0, 0.001)
    assert t.size == 100 and np.sum(t < 10.0) == 25 and t[-1] == 100.0
    assert np.all(np.abs(t / 0.001 - np.rint(t / 0.001)) < 1e-6)
    with pytest.raises(InvalidParameterError):
        Schedule(count=100, dt=1.0).sample_times(10.0, 1.0)
    for bad in (dict(count=0), dict(dt=-1.0), dict(T=0.0), dict(fine_fraction=1.5),
                dict(decay_threshold=2.0)):
        with pytest.raises(InvalidParameterError):
            Schedule(**bad)


def test_automatic_horizon_reaches_decay(small):
    _, X, _, _ = small
    assert X.decayed and X.terminal_ratio <= 1e-4
    assert X.m == 300 and X.times[0] == 0


def test_undecayed_run_warns():
    sys = make_system(16)
    with pytest.warns(RuntimeWarning, match="not decayed"):
        X = direct_impulse_snapshots(sys, 0, Schedule(count=20, dt=0.01, T_max=5.0))
    assert not X.decayed


def test_unstable_system_rejected():
    from bpod.channel import WavenumberPair, build_os_squire
    from bpod.system import LinearSystem
    m = build_os_squire(WavenumberPair(1.02, 0.0), 6100.0, 32)
    sys = LinearSystem.from_model(m, B=np.ones(m.n), real=True)
    with pytest.raises(InvalidParameterError):
        direct_impulse_snapshots(sys, 0, Schedule(count=10, T=1.0))


def test_adjoint_initial_condition_represents_projection(small):
    sys, _, P, _ = small
    Z0 = adjoint_initial_conditions(sys, P.modes[:, :4])
    rng = np.random.default_rng(3)
    x = rng.standard_normal((sys.n, 5)) + 1j * rng.standard_normal((sys.n, 5))
    np.testing.assert_allclose(sys.M.gram(Z0, x), sys.E.gram(P.modes[:, :4], x), atol=1e-10)


def test_adjoint_snapshots(small):
    sys, _, P, Y = small
    assert Y.m == 4 * 300 and Y.kind == "adjoint"
    assert np.all(np.diff(Y.times) > 0)
    with pytest.raises(InvalidParameterError):
        adjoint_impulse_snapshots(sys, P, 0)
    with pytest.raises(InvalidParameterError):
        adjoint_impulse_snapshots(sys, P, P.rank + 1)


def test_stack_preserves_columns():
    A = np.diag([-1.0 + 0j, -2.0])
    runs = [propagate(A, x, 0.1, 1.0, np.linspace(0, 1, 6)) for x in np.eye(2)]
    s = stack(runs)
    assert s.m == 12
    np.testing.assert_array_equal(s.data, np.hstack([r.data for r in runs]))
    np.testing.assert_array_equal(s.weights, np.concatenate([r.weights for r in runs]))
    assert stack(runs[:1]) is runs[0]


def test_block_propagation_matches_dense():
    rng = np.random.default_rng(4)
    blocks = np.stack([stable_matrix(rng, 3) for _ in range(4)])
    x0 = rng.standard_normal(12) + 0j
    t = np.linspace(0, 2, 5)
    a = propagate(BlockDiag(blocks), x0, 0.01, 2.0, t).data
    b = propagate(sla.block_diag(*blocks), x0, 0.01, 2.0, t).data
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)
