import warnings

import numpy as np
import pytest

from bpod.channel import WavenumberPair, build_os_squire, optimal_perturbation
from bpod.dynamics import Schedule, adjoint_impulse_snapshots, direct_impulse_snapshots, stack
from bpod.modal import pod
from bpod.system import LinearSystem


def make_system(N=24, Re=1000.0, alpha=1.0, beta=1.0, real=True, seed=None):
    """Single-wavenumber system; optimal-perturbation input unless a seed asks for a random one."""
    model = build_os_squire(WavenumberPair(alpha, beta), Re, N)
    if seed is None:
        b = optimal_perturbation(model)[0].to_array()
    else:
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(model.n) + 1j * rng.standard_normal(model.n)
    return LinearSystem.from_model(model, B=b, real=real)


@pytest.fixture(scope="session")
def small():
    """N=24 (1,1) system with data: n = 46 complex states."""
    sys = make_system(24)
    sched = Schedule(count=300, dt=0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        X = direct_impulse_snapshots(sys, 0, sched)
        P = pod(X, sys.E, r=20)
        Y = stack(adjoint_impulse_snapshots(sys, P, 4, sched))
    return sys, X, P, Y


@pytest.fixture(scope="session")
def a1b1():
    """The (1,1), Re=1000, N=64 case with 500 snapshots."""
    sys = make_system(64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        X = direct_impulse_snapshots(sys, 0, Schedule())
        P = pod(X, sys.E, r=40)
    return sys, X, P


@pytest.fixture(scope="session")
def a1b1_adjoint(a1b1):
    """Stacked adjoint snapshots of the (1,1) case for 4- and 8-mode output projections."""
    sys, X, P = a1b1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {s: stack(adjoint_impulse_snapshots(sys, P, s, Schedule())) for s in (4, 8)}


def _pipeline(tmp_path_factory, name):
    from bpod.config import bundled_config, load_config
    from bpod.pipeline import Pipeline
    cfg = load_config(bundled_config(name))
    pipe = Pipeline(cfg, tmp_path_factory.mktemp(name.removesuffix(".cfg")))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pipe.run()
    return pipe


@pytest.fixture(scope="session")
def a1b1_run(tmp_path_factory):
    """Completed pipeline workdir for the bundled single-wavenumber config."""
    return _pipeline(tmp_path_factory, "paper_a1b1.cfg")


@pytest.fixture(scope="session")
def localized_run(tmp_path_factory):
    """Completed pipeline workdir for the bundled localized (desk grid) config."""
    return _pipeline(tmp_path_factory, "paper_localized.cfg")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
