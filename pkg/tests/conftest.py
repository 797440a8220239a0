import numpy as np
import pytest

from flowkrim import build_complex, FlowSpec, generate_flows, sample_per_snapshot, SolverConfig
from flowkrim.solver import KrimFactors

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def kite():
    # 1-based (1,2),(1,3),(2,3),(3,4)
    return build_complex(4, [(0, 1), (0, 2), (1, 2), (2, 3)])


def random_complex(rng, n_nodes, p=0.4):
    edges = [(a, b) for a in range(n_nodes) for b in range(a + 1, n_nodes) if rng.random() < p]
    if not edges:
        edges = [(0, 1)]
    return build_complex(n_nodes, edges)


def random_factors(rng, n1, t, n_l, d, r, feasible=True):
    v1 = rng.random((n_l, r))
    v2 = rng.random((r, t))
    if feasible:
        v1 /= v1.sum(axis=0)
        v2 /= v2.sum(axis=0)
    return KrimFactors(
        rng.standard_normal((n1, t)),
        rng.standard_normal((n1, d)),
        rng.standard_normal((d, n_l)),
        v1,
        v2,
    )


def random_psd(rng, n):
    a = rng.standard_normal((n, n + 1))
    k = a @ a.T / n
    return 0.5 * (k + k.T)


def toy_problem(seed, n_nodes=7, t=24, ratio=0.5, noise=0.05):
    """Small complex with both flow types (when triangles exist), masked at ``ratio``."""
    rng = np.random.default_rng(seed)
    sc = random_complex(rng, n_nodes, p=0.5)
    while sc.n1 < 6:
        sc = random_complex(rng, n_nodes, p=0.6)
    spec = FlowSpec(n_gradient_modes=2, n_curl_modes=1 if sc.n2 else 0,
                    temporal_freqs=(1 / 12, 1 / 6), noise_sigma=noise)
    y = generate_flows(sc, t, spec, seed=seed)
    mask = sample_per_snapshot(sc.n1, t, ratio, seed + 1)
    return sc, y, mask


@pytest.fixture
def toy_cfg():
    return SolverConfig(lambda1=1e-2, lambda2=1e-2, lambda_l=0.05, lambda_u=0.05, d=3, r=3,
                        n_landmarks=8, max_outer_iters=60, inner_max_iters=300, inner_tol=1e-10)
