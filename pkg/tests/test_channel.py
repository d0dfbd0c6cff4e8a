import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpod.channel import (BaseFlow, StateVector, WavenumberPair, build_adjoint, build_os_squire,
                          continuous_adjoint, energy_inner_product, m_inner_product,
                          optimal_perturbation, recover_velocities)
from bpod.errors import InvalidParameterError, UnstableSystemError
from bpod.spectral import chebyshev_grid, diff_matrix, quadrature_weights

WN = WavenumberPair(1.0, 1.0)


@pytest.fixture(scope="module")
def model():
    return build_os_squire(WN, 1000.0, 32)


def rand_state(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_base_flow():
    g = chebyshev_grid(16)
    f = BaseFlow.poiseuille(g.points)
    assert f.U[0] == 0 and f.U[-1] == 0 and f.U[8] == 1
    np.testing.assert_allclose(f.Uprime, -f.Uprime[::-1], atol=1e-15)
    assert np.all(f.Udoubleprime == -2.0)


def test_bad_parameters():
    with pytest.raises(InvalidParameterError):
        build_os_squire(WavenumberPair(0.0, 0.0), 1000.0, 16)
    with pytest.raises(InvalidParameterError):
        build_os_squire(WN, -1.0, 16)


def test_operator_split_is_exact(model):
    assert np.array_equal(model.A, model.A_conv + (1.0 / model.Re) * model.A_diff)
    m2 = model.at_reynolds(2000.0)
    assert np.array_equal(m2.A, model.A_conv + (1.0 / 2000.0) * model.A_diff)


def test_weights_hermitian_positive_definite(model):
    for W in (model.M_weight, model.E_weight):
        np.testing.assert_allclose(W, W.conj().T, atol=1e-14 * np.abs(W).max())
        assert np.linalg.eigvalsh(W).min() > 0


def test_stability_threshold():
    wn = WavenumberPair(1.02, 0.0)
    assert build_os_squire(wn, 5500.0, 64).max_growth_rate() < 0
    assert build_os_squire(wn, 6100.0, 64).max_growth_rate() > 0


@pytest.mark.parametrize("Re", [500.0, 2000.0])
def test_streamwise_constant_modes_stable(Re):
    assert build_os_squire(WavenumberPair(0.0, 2.0), Re, 48).max_growth_rate() < 0


def test_least_stable_eigenvalue_converged():
    lam64 = build_os_squire(WN, 1000.0, 64).eigenvalues()[0]
    lam128 = build_os_squire(WN, 1000.0, 128).eigenvalues()[0]
    assert abs(lam64 - lam128) <= 1e-6 * abs(lam128)
    for Re in (1000.0, 2000.0):
        a = build_os_squire(WN, Re, 64).eigenvalues()[0]
        b = build_os_squire(WN, Re, 96).eigenvalues()[0]
        assert abs(a - b) < 1e-6


def test_conjugate_wavenumber_gives_conjugate_operator():
    a = build_os_squire(WavenumberPair(1.0, 2.0), 1000.0, 24)
    b = build_os_squire(WavenumberPair(-1.0, -2.0), 1000.0, 24)
    np.testing.assert_allclose(b.A, a.A.conj(), atol=1e-12 * np.abs(a.A).max())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adjoint_identity(model, seed):
    rng = np.random.default_rng(seed)
    x, z = rand_state(rng, model.n), rand_state(rng, model.n)
    Ap = build_adjoint(model)
    lhs = m_inner_product(model.A @ x, z, model)
    rhs = m_inner_product(x, Ap @ z, model)
    scale = np.linalg.norm(model.M_weight @ model.A) * np.linalg.norm(x) * np.linalg.norm(z)
    assert abs(lhs - rhs) <= 1e-10 * scale


def test_adjoint_spectrum_is_conjugate(model):
    la = np.sort_complex(np.linalg.eigvals(model.A).conj())
    lp = np.sort_complex(np.linalg.eigvals(build_adjoint(model)))
    np.testing.assert_allclose(lp, la, atol=1e-8 * np.abs(la).max())


def test_discrete_and_continuous_adjoint_agree():
    # compared through the resolved (least stable) part of the spectrum; the two
    # matrices differ in how they treat unresolved grid-scale content
    m = build_os_squire(WN, 1000.0, 64)
    sort = lambda l: l[np.argsort(-l.real)][:20]
    a = sort(np.linalg.eigvals(build_adjoint(m)))
    c = sort(np.linalg.eigvals(continuous_adjoint(m)))
    assert np.max(np.abs(a - c) / np.abs(a)) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_m_norm_is_twice_k2_energy(model, seed):
    rng = np.random.default_rng(seed)
    q = rand_state(rng, model.n)
    m = m_inner_product(q, q, model)
    assert abs(m.imag) <= 1e-12 * abs(m) and m.real > 0
    e = energy_inner_product(q, q, model)
    assert abs(m - 2 * WN.k2 * e) <= 1e-8 * abs(m)


def test_energy_matches_recovered_velocities(model):
    rng = np.random.default_rng(1)
    q = rand_state(rng, model.n)
    u, v, w = recover_velocities(q, WN, model.grid)
    wy = quadrature_weights(model.grid).weights
    direct = 0.5 * wy @ (np.abs(u) ** 2 + np.abs(v) ** 2 + np.abs(w) ** 2)
    assert energy_inner_product(q, q, model).real == pytest.approx(direct, rel=1e-10)
    assert energy_inner_product(np.zeros(model.n), np.zeros(model.n), model) == 0


def test_m_product_reduces_to_eta_integral(model):
    rng = np.random.default_rng(2)
    ni = model.interior_count
    e1, e2 = rand_state(rng, ni), rand_state(rng, ni)
    q1 = StateVector(np.zeros(ni, complex), e1)
    q2 = StateVector(np.zeros(ni, complex), e2)
    wy = quadrature_weights(model.grid).weights[1:-1]
    assert m_inner_product(q1, q2, model) == pytest.approx(np.sum(wy * e1.conj() * e2), rel=1e-12)


def test_pure_vorticity_energy_streamwise_constant():
    beta = 2.0
    m = build_os_squire(WavenumberPair(0.0, beta), 1000.0, 24)
    rng = np.random.default_rng(3)
    ni = m.interior_count
    eta = rand_state(rng, ni)
    q = StateVector(np.zeros(ni, complex), eta)
    wy = quadrature_weights(m.grid).weights[1:-1]
    expected = np.sum(wy * np.abs(eta) ** 2) / (2 * beta**2)
    assert energy_inner_product(q, q, m).real == pytest.approx(expected, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.1, 3.0), st.integers(0, 2**32 - 1))
def test_recovered_velocities_satisfy_continuity(alpha, beta, seed):
    g = chebyshev_grid(24)
    wn = WavenumberPair(alpha, beta)
    rng = np.random.default_rng(seed)
    q = rand_state(rng, 2 * g.interior_count)
    u, v, w = recover_velocities(q, wn, g)
    Dv = diff_matrix(g, 1).matrix @ v
    eta = np.concatenate([[0], q[g.interior_count:], [0]])
    scale = np.abs(Dv).max() + np.abs(eta).max()
    assert np.max(np.abs(1j * alpha * u + Dv + 1j * beta * w)) <= 1e-10 * scale
    assert np.max(np.abs(1j * beta * u - 1j * alpha * w - eta)) <= 1e-10 * scale
    if alpha == 0:
        np.testing.assert_allclose(u, -1j * eta / beta, atol=1e-12 * scale)
        np.testing.assert_allclose(w, 1j * Dv / beta, atol=1e-12 * scale)


def test_recovery_needs_nonzero_wavenumber():
    g = chebyshev_grid(8)
    with pytest.raises(InvalidParameterError):
        recover_velocities(np.zeros(14), WavenumberPair(0, 0), g)


def test_optimal_perturbation_basics(model):
    q, curve = optimal_perturbation(model)
    assert curve.gain[0] == 1.0
    assert curve.g_max >= 1.0
    assert energy_inner_product(q, q, model).real == pytest.approx(1.0, rel=1e-12)
    # single hump: rises to the peak, then decays
    j = int(np.argmax(curve.gain))
    assert 0 < j < curve.gain.size - 1
    assert curve.gain[-1] < 0.5 * curve.g_max


def test_optimal_growth_grid_converged():
    out = [optimal_perturbation(build_os_squire(WN, 1000.0, N))[1] for N in (64, 96)]
    assert out[0].g_max == pytest.approx(out[1].g_max, rel=1e-4)
    assert out[0].t_peak == pytest.approx(out[1].t_peak, rel=1e-4)


def test_optimal_perturbation_refuses_unstable():
    m = build_os_squire(WavenumberPair(1.02, 0.0), 6100.0, 48)
    with pytest.raises(UnstableSystemError):
        optimal_perturbation(m)
