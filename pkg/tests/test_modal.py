import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpod.balancing import bpod
from bpod.errors import InvalidParameterError
from bpod.modal import BasisKind, orthonormalize, output_projection, pod
from bpod.system import Weight


def spd_weight(rng, n, real=False):
    Q = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return Weight.of(Q @ Q.conj().T + n * np.eye(n), real)


def test_single_snapshot():
    rng = np.random.default_rng(0)
    W = spd_weight(rng, 5)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    b = pod(x[:, None], W)
    assert b.rank == 1
    assert b.values[0] == pytest.approx(W.norm(x) ** 2)
    phase = W.inner(b.modes[:, 0], x) / abs(W.inner(b.modes[:, 0], x))
    np.testing.assert_allclose(b.modes[:, 0] * phase, x / W.norm(x), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_eigenvalues_sum_to_snapshot_energy(seed, real):
    rng = np.random.default_rng(seed)
    W = spd_weight(rng, 8, real)
    X = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
    b = pod(X, W)
    assert b.all_values.sum() == pytest.approx(np.sum(W.norm(X) ** 2), rel=1e-10)
    np.testing.assert_allclose(W.gram(b.modes), np.eye(b.rank), atol=1e-10)
    assert np.all(np.diff(b.values) <= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_pod_subspace_is_optimal(seed, r):
    rng = np.random.default_rng(seed)
    W = spd_weight(rng, 10, real=True)
    X = rng.standard_normal((10, 12)) + 1j * rng.standard_normal((10, 12))
    captured = lambda Q: float(np.sum(W.gram(Q, X) ** 2))
    best = captured(pod(X, W, r=r).modes)
    assert best == pytest.approx(pod(X, W).values[:r].sum(), rel=1e-9)
    for _ in range(5):
        Q = orthonormalize(rng.standard_normal((10, r)) + 1j * rng.standard_normal((10, r)), W)
        assert captured(Q) <= best * (1 + 1e-10)


def test_real_semantics_gives_conjugate_pairs(small):
    _, _, P, _ = small
    assert np.isrealobj(P.values)
    for k in (0, 2, 4):
        assert 1.0 <= P.values[k] / P.values[k + 1] <= 1.1
    np.testing.assert_allclose(P.weight.gram(P.modes), np.eye(P.rank), atol=1e-10)
    f = P.energy_fractions()
    assert np.all(np.diff(f) >= 0) and f[-1] == pytest.approx(1.0)


def test_rank_handling():
    rng = np.random.default_rng(1)
    W = spd_weight(rng, 6)
    X = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 8)) + 0j
    b = pod(X, W, r=5)
    assert b.rank == 2 and b.truncated
    with pytest.raises(InvalidParameterError):
        pod(np.zeros((6, 3)), W)
    with pytest.raises(InvalidParameterError):
        pod(X[:5], W)
    with pytest.raises(InvalidParameterError):
        b.leading(3)
    assert b.leading(1).rank == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_output_projection_idempotent_and_isometric(small, seed):
    sys, _, P, _ = small
    op = output_projection(P, 6)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((sys.n, 3)) + 1j * rng.standard_normal((sys.n, 3))
    px = op.project(x)
    np.testing.assert_allclose(op.project(px), px, atol=1e-10 * np.abs(px).max())
    np.testing.assert_allclose(np.linalg.norm(op(x), axis=0), sys.E.norm(px), rtol=1e-10)
    assert op.matrix().shape == (6, sys.n)


def test_output_projection_limits(small):
    sys, X, P, Y = small
    with pytest.raises(InvalidParameterError):
        output_projection(P, P.rank + 1)
    with pytest.raises(InvalidParameterError):
        output_projection(P, 0)
    B = bpod(X, Y, sys.M, r=4)
    assert B.kind is BasisKind.BALANCING
    with pytest.raises(InvalidParameterError):
        output_projection(B, 2)
