import numpy as np
import pytest

from mssmpc.design import Polytope, build_design

CONFIG_PATH = "configs/double_integrator.json"

# Benchmark double-integrator setup; the contraction rate sits inside the
# narrow window where the published 4-digit tube shape matrix satisfies
# both scaled Lyapunov inequalities.
A = np.array([[1.0, 1.0], [0.0, 1.0]])
B = np.array([[0.5], [1.0]])
Q = np.eye(2)
R = np.array([[10.0]])
GAMMA_W = np.array([[0.1, 0.05], [0.05, 0.1]])
W_X = np.array([[10.9264, -3.7386], [-3.7386, 3.8143]])
LAM = 0.7502548
EPS = 0.1
MU = 1e4
HORIZON = 10

X_BOX = Polytope(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
                 np.full(4, 40.0))
U_BOX = Polytope(np.array([[1.0], [-1.0]]), np.full(2, 10.0))


def make_benchmark_design(gamma_w=GAMMA_W, mu=MU):
    design, report = build_design(
        A, B, gamma_w, Q, R, X_BOX, U_BOX,
        lam=LAM, eps=EPS, dist="gaussian", W_x=W_X, mu=mu, horizon=HORIZON,
    )
    return design, report


@pytest.fixture(scope="session")
def bench():
    design, _ = make_benchmark_design()
    return design


@pytest.fixture(scope="session")
def bench_report():
    _, report = make_benchmark_design()
    return report


@pytest.fixture(scope="session")
def noiseless():
    design, _ = make_benchmark_design(gamma_w=np.zeros((2, 2)))
    return design
