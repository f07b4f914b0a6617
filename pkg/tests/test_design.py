import numpy as np
import pytest

from mssmpc import design as dz
from mssmpc import linalg
from mssmpc.errors import (
    InvalidEpsilon,
    NotPositiveDefinite,
    RhoBelowFloor,
    ValidationFailed,
)

from conftest import A, B, GAMMA_W, LAM, Q, R, U_BOX, W_X, X_BOX


class TestInscribedRadius:
    def test_sphere_in_unit_box(self):
        box = dz.Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
        assert dz.max_inscribed_radius(np.eye(2), box) == pytest.approx(1.0)

    def test_rowwise_closed_form(self):
        box = dz.Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.full(4, 2.0))
        r = dz.max_inscribed_radius(np.diag([4.0, 1.0]), box)
        assert r == pytest.approx(1.0)

    def test_benchmark_value(self):
        assert dz.max_inscribed_radius(W_X, X_BOX) == pytest.approx(12.1010, abs=1e-3)

    def test_scaling_law(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            M = rng.standard_normal((2, 2))
            W = M @ M.T + 0.5 * np.eye(2)
            h = rng.uniform(0.5, 3.0, size=4)
            base = dz.max_inscribed_radius(W, dz.Polytope(np.vstack([np.eye(2), -np.eye(2)]), h))
            s = float(rng.uniform(0.1, 10.0))
            scaled = dz.max_inscribed_radius(W, dz.Polytope(np.vstack([np.eye(2), -np.eye(2)]), s * h))
            assert scaled == pytest.approx(s * base, rel=1e-12)

    def test_degenerate_facet(self):
        poly = dz.Polytope(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]),
                           np.array([1.0, 1.0, 1.0]))
        with pytest.raises(dz.DegenerateFacet):
            dz.max_inscribed_radius(np.eye(2), poly)

    def test_support_point_tightness(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            M = rng.standard_normal((2, 2))
            W = M @ M.T + 0.3 * np.eye(2)
            H = np.vstack([np.eye(2), -np.eye(2), rng.standard_normal((2, 2))])
            h = rng.uniform(0.5, 4.0, size=6)
            poly = dz.Polytope(H, h)
            r = dz.max_inscribed_radius(W, poly)
            # support point per facet satisfies the inequality at radius r
            for i in range(H.shape[0]):
                support = r * W @ H[i] / np.sqrt(H[i] @ W @ H[i])
                assert H[i] @ support <= h[i] + 1e-9
            # slight inflation violates at least one facet
            r_out = r * (1 + 1e-6)
            worst = max(r_out * np.sqrt(H[i] @ W @ H[i]) - h[i] for i in range(H.shape[0]))
            assert worst > 0


class TestInputShape:
    def test_unit_interval(self):
        W = dz.max_volume_input_shape(U_BOX.scaled(0.1), 1.0)  # |u| <= 1
        assert W[0, 0] == pytest.approx(1.0, rel=1e-12)

    def test_scalar_closed_form(self):
        W = dz.max_volume_input_shape(U_BOX, 2.0)  # |u| <= 10, r_hat = 2
        assert W[0, 0] == pytest.approx(25.0, rel=1e-12)

    def test_benchmark_consistency(self, bench):
        # the scaled pair must reproduce the input bound exactly
        assert np.sqrt(bench.W_u[0, 0]) * bench.r_u == pytest.approx(10.0, abs=1e-2)

    def test_unbounded_set_rejected(self):
        half_plane = dz.Polytope(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([2.0, 2.0]))
        with pytest.raises(dz.Unbounded):
            dz.max_volume_input_shape(half_plane, 1.0)

    def test_two_dim_box(self):
        box = dz.Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.array([3.0, 5.0, 3.0, 5.0]))
        W = dz.max_volume_input_shape(box, 2.0)
        assert np.allclose(W, np.diag([(3.0 / 2.0) ** 2, (5.0 / 2.0) ** 2]), atol=1e-6)

    def test_two_dim_general_polytope_vs_grid(self):
        H = np.array([[1.0, 0.2], [-1.0, 0.1], [0.3, 1.0], [-0.2, -1.0], [0.9, -0.8]])
        h = np.array([2.0, 1.5, 1.8, 1.2, 2.2])
        poly = dz.Polytope(H, h)
        W = dz.max_volume_input_shape(poly, 1.0, tol=1e-9)
        # every facet satisfied
        assert np.all(np.einsum("ij,jk,ik->i", H, W, H) <= h**2 + 1e-8)
        # grid search over symmetric 2x2 shapes as an independent oracle
        best = (-np.inf, None)
        for a in np.linspace(0.1, 4.0, 60):
            for c in np.linspace(0.1, 4.0, 60):
                for b in np.linspace(-1.5, 1.5, 61):
                    cand = np.array([[a, b], [b, c]])
                    if a * c - b * b <= 0:
                        continue
                    if np.all(np.einsum("ij,jk,ik->i", H, cand, H) <= h**2):
                        det = a * c - b * b
                        if det > best[0]:
                            best = (det, cand)
        assert np.linalg.det(W) >= best[0] * (1 - 1e-2)


class TestScaleInputShape:
    def test_zero_gain_warns(self):
        with pytest.warns(RuntimeWarning):
            W_u, r_u = dz.scale_input_shape(np.array([[2.0]]), 1.5, np.zeros((1, 2)), W_X)
        assert W_u[0, 0] == pytest.approx(2.0)
        assert r_u == pytest.approx(1.5)

    def test_scalar_eta(self):
        K = np.array([[1.0, 0.0]])
        W_u, r_u = dz.scale_input_shape(np.array([[1.0]]), 2.0, K, np.diag([4.0, 1.0]))
        assert W_u[0, 0] == pytest.approx(4.0, rel=1e-10)
        assert r_u == pytest.approx(1.0, rel=1e-10)

    def test_benchmark_coupling_holds(self, bench):
        resid = linalg.sym_eig_min(bench.W_x_inv - bench.K.T @ bench.W_u_inv @ bench.K)
        assert resid >= -1e-8

    def test_eta_minimality(self, bench):
        # shrinking the scaling slightly below eta* breaks the coupling
        K, W_x = bench.K, bench.W_x
        W_u_tight = bench.W_u * (1 - 1e-6)
        resid = linalg.sym_eig_min(np.linalg.inv(W_x) - K.T @ np.linalg.inv(W_u_tight) @ K)
        assert resid < 0


class TestTerminalWeight:
    def test_definitional(self):
        W = np.array([[2.0, 0.3], [0.3, 1.0]])
        nu = dz.terminal_weight(np.linalg.inv(W), np.zeros((1, 1)), np.zeros((1, 2)), W)
        assert nu == pytest.approx(1.0, rel=1e-10)

    def test_diagonal(self):
        nu = dz.terminal_weight(np.eye(2), np.zeros((1, 1)), np.zeros((1, 2)), np.diag([4.0, 1.0]))
        assert nu == pytest.approx(4.0, rel=1e-10)

    def test_benchmark_value(self, bench):
        assert bench.nu == pytest.approx(16.0082, abs=1e-2)

    def test_minimality(self, bench):
        shrunk = bench.nu * (1 - 1e-6) * bench.W_x_inv - (Q + bench.K.T @ R @ bench.K)
        assert linalg.sym_eig_min(shrunk) < 0


class TestViolationRadius:
    def test_generic_half(self):
        assert dz.radius_from_violation(0.5, 2, "generic") == pytest.approx(2.0)

    def test_generic_tenth(self):
        assert dz.radius_from_violation(0.1, 2, "generic") == pytest.approx(np.sqrt(20.0), rel=1e-12)

    def test_gaussian_benchmark(self):
        rho = dz.radius_from_violation(0.1, 2, "gaussian")
        assert rho == pytest.approx(np.sqrt(-2.0 * np.log(0.1)), rel=1e-9)
        assert rho == pytest.approx(2.1460, abs=1e-3)

    def test_floor_enforced(self):
        # a tiny epsilon is fine; a huge one drops rho below the floor
        with pytest.raises(RhoBelowFloor):
            dz.radius_from_violation(0.99, 2, "gaussian", lam=0.05)

    def test_invalid_epsilon(self):
        for bad in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(InvalidEpsilon):
                dz.radius_from_violation(bad, 2, "generic")

    def test_roundtrip_identity(self):
        from mssmpc.tubes import violation_fn
        rng = np.random.default_rng(3)
        for dist in ("generic", "gaussian"):
            for _ in range(25):
                eps = float(rng.uniform(0.01, 0.95))
                n = int(rng.integers(1, 6))
                rho = dz.radius_from_violation(eps, n, dist)
                assert violation_fn(rho, n, dist).value == pytest.approx(eps, abs=1e-9)


class TestBuildDesign:
    def test_benchmark_pipeline(self, bench, bench_report):
        assert bench_report.passed
        assert bench.r_x == pytest.approx(12.1010, abs=1e-3)
        assert bench.rho == pytest.approx(2.1460, abs=1e-3)
        assert bench.r_N == pytest.approx(min(bench.r_x, bench.r_u))
        names = [c.name for c in bench_report.checks]
        assert "contraction: lam^2 Wx - AK Wx AK' psd" in names

    def test_scalar_pipeline(self):
        X = dz.Polytope(np.array([[1.0], [-1.0]]), np.array([5.0, 5.0]))
        U = dz.Polytope(np.array([[1.0], [-1.0]]), np.array([2.0, 2.0]))
        a, b = 0.5, 1.0
        design, report = dz.build_design(
            np.array([[a]]), np.array([[b]]), np.array([[0.01]]),
            np.array([[1.0]]), np.array([[1.0]]), X, U,
            lam=0.6, eps=0.2, dist="generic", horizon=5,
        )
        assert report.passed
        # closed-form spot checks
        a_k = a + b * design.K[0, 0]
        w_expect = (0.01 / 0.4**2) / (1 - a_k**2 / 0.36)
        assert design.W_x[0, 0] == pytest.approx(w_expect, rel=1e-9)
        assert design.r_x == pytest.approx(5.0 / np.sqrt(design.W_x[0, 0]), rel=1e-12)
        assert design.rho == pytest.approx(np.sqrt(1 / 0.2), rel=1e-12)

    def test_degenerate_noise_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            dz.build_design(A, B, np.zeros((2, 2)), Q, R, X_BOX, U_BOX,
                            lam=LAM, eps=0.1)

    def test_lambda_below_spectral_radius_rejected(self):
        with pytest.raises(Exception):
            dz.build_design(A, B, GAMMA_W, Q, R, X_BOX, U_BOX, lam=0.3, eps=0.1)

    def test_validation_failure_names_check(self):
        # rho > r_u: shrink the input set so the coupling radius collapses
        U_tiny = dz.Polytope(np.array([[1.0], [-1.0]]), np.array([0.5, 0.5]))
        with pytest.raises(ValidationFailed) as err:
            dz.build_design(A, B, GAMMA_W, Q, R, X_BOX, U_tiny,
                            lam=LAM, eps=0.1, W_x=W_X)
        assert "rho <= r_u" in str(err.value)


class TestPolytopeEllipsoid:
    def test_polytope_requires_interior_origin(self):
        with pytest.raises(ValueError):
            dz.Polytope(np.array([[1.0]]), np.array([0.0]))

    def test_ellipsoid_membership(self):
        e = dz.Ellipsoid(np.diag([4.0, 1.0]), 2.0)
        assert e.contains([4.0, 0.0])
        assert not e.contains([4.1, 0.0])
        assert e.weighted_norm([4.0, 0.0]) == pytest.approx(2.0)

    def test_boundary_points(self):
        e = dz.Ellipsoid(W_X, 3.0)
        pts = e.boundary_points(np.random.default_rng(0), 200)
        radii = [e.weighted_norm(p) for p in pts]
        assert np.allclose(radii, 3.0, atol=1e-9)
