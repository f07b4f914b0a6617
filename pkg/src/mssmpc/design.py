"""Offline design pipeline: every constant the online controllers need.

Builds the feedback gain, the tube shape matrices, the inscribed radii,
the terminal weight, and the Chebychev radius, then validates the full
set of coupling inequalities and records the residual of each check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from . import linalg
from .errors import (
    DegenerateFacet,
    InvalidEpsilon,
    NoConvergence,
    NotPositiveDefinite,
    RhoBelowFloor,
    Unbounded,
    ValidationFailed,
)

GENERIC = "generic"
GAUSSIAN = "gaussian"

LMI_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Polytope:
    """H x <= h with the origin strictly inside (h > 0)."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if H.shape[0] != h.shape[0]:
            raise ValueError("facet count mismatch between H and h")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise ValueError("polytope data must be finite")
        if np.any(h <= 0):
            raise ValueError("polytope must contain the origin strictly (h > 0)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self.H @ np.asarray(x, dtype=float) <= self.h + tol))

    def scaled(self, gamma: float) -> "Polytope":
        return Polytope(self.H, gamma * self.h)


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """{x : x' W^{-1} x <= r^2} for W > 0; degenerate W is allowed as a
    container but has no membership test."""

    W: np.ndarray
    r: float

    def __post_init__(self):
        W = linalg.check_symmetric(self.W, "ellipsoid shape")
        if self.r < 0:
            raise ValueError("ellipsoid radius must be nonnegative")
        if linalg.sym_eig_min(W) < -1e-12 * max(1.0, linalg.sym_eig_max(W)):
            raise ValueError("ellipsoid shape must be positive semidefinite")
        object.__setattr__(self, "W", W)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return float(x @ np.linalg.solve(self.W, x)) <= self.r**2 + tol

    def weighted_norm(self, x) -> float:
        """sqrt(x' W^{-1} x), the radius at which x sits on the boundary."""
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(max(x @ np.linalg.solve(self.W, x), 0.0)))

    def boundary_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniformly random direction points on the boundary (r fixed)."""
        n = self.W.shape[0]
        half = linalg.sqrtm_psd(self.W)
        u = rng.standard_normal((count, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.r * u @ half.T


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.residual >= self.threshold


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, name: str, residual: float, threshold: float):
        self.checks.append(Check(name, float(residual), float(threshold)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def as_text(self) -> str:
        lines = ["design validation report", "-" * 64]
        for c in self.checks:
            flag = "pass" if c.passed else "FAIL"
            lines.append(f"[{flag}] {c.name:<40s} residual {c.residual:+.6e} (>= {c.threshold:+.1e})")
        lines.append("-" * 64)
        lines.append("result: " + ("all checks passed" if self.passed else "VALIDATION FAILED"))
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class DesignParams:
    """Immutable bundle of offline constants shared by all controllers."""

    A: np.ndarray
    B: np.ndarray
    Gamma_w: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    K: np.ndarray
    P: np.ndarray
    W_x: np.ndarray
    lam: float
    r_x: float
    W_u: np.ndarray
    r_u: float
    r_N: float
    rho: float
    eps: float
    nu: float
    mu: float
    N: int
    dist: str
    X: Polytope
    U: Polytope

    def __post_init__(self):
        for name in ("A", "B", "Gamma_w", "Q", "R", "K", "P", "W_x", "W_u"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "A_K", self.A + self.B @ self.K)
        object.__setattr__(self, "W_x_inv", np.linalg.inv(self.W_x))
        object.__setattr__(self, "W_u_inv", np.linalg.inv(self.W_u))
        object.__setattr__(self, "W_x_isqrt", linalg.inv_sqrtm_pd(self.W_x))
        object.__setattr__(self, "W_u_isqrt", linalg.inv_sqrtm_pd(self.W_u))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def state_tube_shape(self) -> Ellipsoid:
        return Ellipsoid(self.W_x, self.r_x)

    def input_tube_shape(self) -> Ellipsoid:
        return Ellipsoid(self.W_u, self.r_u)

    def terminal_weight_matrix(self) -> np.ndarray:
        return self.nu / (1.0 - self.lam**2) * self.W_x_inv

    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        rep.add("lambda in (0,1)", min(self.lam, 1.0 - self.lam), 1e-12)
        rep.add("spectral radius(A_K) < lambda",
                self.lam - linalg.spectral_radius(self.A_K), 1e-12)
        rep.add("contraction: lam^2 Wx - AK Wx AK' psd",
                linalg.sym_eig_min(self.lam**2 * self.W_x - self.A_K @ self.W_x @ self.A_K.T),
                -LMI_TOL)
        rep.add("noise bound: (1-lam)^2 Wx - Gamma_w psd",
                linalg.sym_eig_min((1.0 - self.lam) ** 2 * self.W_x - self.Gamma_w),
                -LMI_TOL)
        rep.add("input coupling: Wx^-1 - K' Wu^-1 K psd",
                linalg.sym_eig_min(self.W_x_inv - self.K.T @ self.W_u_inv @ self.K),
                -LMI_TOL)
        rep.add("terminal weight: nu Wx^-1 - Q - K'RK psd",
                linalg.sym_eig_min(self.nu * self.W_x_inv - self.Q - self.K.T @ self.R @ self.K),
                -LMI_TOL)
        rep.add("r_N = min(r_x, r_u)",
                -abs(self.r_N - min(self.r_x, self.r_u)), -1e-12)
        rep.add("rho <= r_x", self.r_x - self.rho, 0.0)
        rep.add("rho <= r_u", self.r_u - self.rho, 0.0)
        rep.add("rho >= feasibility floor", self.rho - rho_floor(self.n, self.lam), 0.0)
        rep.add("epsilon in (0,1)", min(self.eps, 1.0 - self.eps), 1e-12)
        rep.add("W_x positive definite", linalg.sym_eig_min(self.W_x), 1e-12)
        rep.add("W_u positive definite", linalg.sym_eig_min(self.W_u), 1e-12)
        rep.add("Gamma_w psd", linalg.sym_eig_min(self.Gamma_w), -1e-12)
        rep.add("state ellipsoid inside X",
                float(np.min(self.X.h - self.r_x * _facet_norms(self.W_x, self.X))), -1e-8)
        rep.add("input ellipsoid inside U",
                float(np.min(self.U.h - self.r_u * _facet_norms(self.W_u, self.U))), -1e-8)
        rep.add("horizon >= 1", float(self.N - 1), 0.0)
        rep.add("penalty weight positive", self.mu, 1e-12)
        return rep


def _facet_norms(W: np.ndarray, poly: Polytope) -> np.ndarray:
    """sqrt(H_i W H_i') per facet; the support of E_W(1) along each facet."""
    vals = np.einsum("ij,jk,ik->i", poly.H, W, poly.H)
    return np.sqrt(np.maximum(vals, 0.0))


def rho_floor(n: int, lam: float) -> float:
    """Smallest Chebychev radius compatible with relaxation decrease in
    expectation."""
    return float(np.sqrt(n * (1.0 - lam) / (1.0 + lam)))


def max_inscribed_radius(W, X: Polytope) -> float:
    """Largest r with E_W(r) inside the polytope, by the support function."""
    W = linalg.check_symmetric(W, "W")
    if linalg.sym_eig_min(W) <= 0:
        raise NotPositiveDefinite("shape matrix must be positive definite")
    norms = _facet_norms(W, X)
    if np.any(norms <= 0):
        raise DegenerateFacet("a facet has no extent against the shape matrix")
    return float(np.min(X.h / norms))


def max_volume_input_shape(U: Polytope, r_hat: float, tol: float = 1e-8) -> np.ndarray:
    """Shape W maximizing log det W subject to E_W(r_hat) inside U.

    Scalar inputs use the closed form; higher dimensions run a damped
    Newton method on the log-det barrier formulation.
    """
    if r_hat <= 0:
        raise ValueError("r_hat must be positive")
    m = U.dim
    caps = (U.h / r_hat) ** 2
    if m == 1:
        a = U.H[:, 0]
        if np.all(a == 0):
            raise Unbounded("input set is unbounded")
        with np.errstate(divide="ignore"):
            bound = np.min(np.where(a != 0, np.abs(U.h / np.where(a == 0, 1.0, a)), np.inf))
        return np.array([[(bound / r_hat) ** 2]])
    rows = U.H
    norms2 = np.einsum("ij,ij->i", rows, rows)
    if np.any(norms2 == 0):
        raise ValueError("zero facet normal")
    if np.linalg.matrix_rank(rows) < m:
        raise Unbounded("input set is unbounded along a facet-free direction")
    # strictly feasible start
    W = 0.5 * np.min(caps / norms2) * np.eye(m)
    basis = []
    for i in range(m):
        for j in range(i, m):
            E = np.zeros((m, m))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    nb = len(basis)
    t = 1.0
    n_cons = rows.shape[0]
    for _ in range(200):
        for _ in range(100):
            Winv = np.linalg.inv(W)
            slack = caps - np.einsum("ij,jk,ik->i", rows, W, rows)
            grad_mat = -t * Winv + rows.T @ (rows / slack[:, None])
            grad = np.array([np.sum(grad_mat * E) for E in basis])
            aEa = np.array([[r @ E @ r for E in basis] for r in rows])
            hess = aEa.T @ (aEa / slack[:, None] ** 2)
            WiE = [Winv @ E for E in basis]
            for k in range(nb):
                for l in range(k, nb):
                    v = t * np.sum(WiE[k] * WiE[l].T)
                    hess[k, l] += v
                    if l != k:
                        hess[l, k] += v
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError as exc:
                raise NoConvergence("barrier Newton step failed") from exc
            decrement = float(-grad @ step)
            V = sum(sk * E for sk, E in zip(step, basis))
            alpha = 1.0
            for _ in range(60):
                Wn = W + alpha * V
                sl = caps - np.einsum("ij,jk,ik->i", rows, Wn, rows)
                if np.all(sl > 0) and linalg.sym_eig_min(Wn) > 0:
                    break
                alpha *= 0.5
            else:
                raise NoConvergence("barrier line search failed")
            W = W + alpha * V
            if decrement < 1e-12 * t:
                break
        if n_cons / t < tol * 1e-2:
            break
        t *= 20.0
    return 0.5 * (W + W.T)


def scale_input_shape(W_hat_u, r_hat_u: float, K, W_x):
    """Rescale the input shape so the gain maps state tubes into input tubes.

    eta* is the smallest scaling with K' (eta W_hat)^{-1} K <= W_x^{-1};
    radius transforms as r = r_hat / sqrt(eta*), leaving E unchanged as a
    set but making the coupling inequality tight.
    """
    W_hat_u = linalg.check_symmetric(W_hat_u, "W_hat_u")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    W_x = linalg.check_symmetric(W_x, "W_x")
    Wh_isqrt = linalg.inv_sqrtm_pd(W_hat_u)
    eta = linalg.sym_eig_max(Wh_isqrt @ K @ W_x @ K.T @ Wh_isqrt)
    if eta <= 1e-300:
        warnings.warn("zero gain: input shape left unscaled", RuntimeWarning)
        return W_hat_u.copy(), float(r_hat_u)
    return eta * W_hat_u, float(r_hat_u / np.sqrt(eta))


def terminal_weight(Q, R, K, W_x) -> float:
    """Smallest nu with Q + K'RK <= nu W_x^{-1}."""
    Q = linalg.check_symmetric(Q, "Q")
    R = linalg.check_symmetric(R, "R")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    W_x = linalg.check_symmetric(W_x, "W_x")
    half = linalg.sqrtm_psd(W_x)
    return linalg.sym_eig_max(half @ (Q + K.T @ R @ K) @ half)


def radius_from_violation(eps: float, n: int, dist: str, lam: float | None = None) -> float:
    """Invert the violation level function at eps.

    generic distributions: rho = sqrt(n / eps); gaussian: the chi-square
    quantile. When lam is provided the result is checked against the
    recursive-feasibility floor and a hard error raised if below it.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in (0,1), got {eps}")
    if n < 1:
        raise ValueError("dimension must be at least 1")
    if dist == GENERIC:
        rho = float(np.sqrt(n / eps))
    elif dist == GAUSSIAN:
        rho = float(np.sqrt(chi2.ppf(1.0 - eps, df=n)))
    else:
        raise ValueError(f"unknown distribution tag {dist!r}")
    if lam is not None:
        floor = rho_floor(n, lam)
        if rho < floor:
            raise RhoBelowFloor(f"rho = {rho:.6f} below floor {floor:.6f}")
    return rho


def build_design(
    A, B, Gamma_w, Q, R, X: Polytope, U: Polytope, lam: float, eps: float,
    dist: str = GAUSSIAN, W_x=None, mu: float = 1e4, horizon: int = 10,
) -> tuple[DesignParams, ValidationReport]:
    """Run the full offline pipeline and validate every invariant.

    W_x defaults to the scaled-Lyapunov solution; a user-supplied matrix
    is accepted and then held to the same inequalities.
    """
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")
    Gamma_w = linalg.check_symmetric(Gamma_w, "Gamma_w")
    K, P = linalg.solve_dare(A, B, Q, R)
    A_K = A + B @ K
    if W_x is None:
        W_x = linalg.solve_dlyap_scaled(A_K, Gamma_w, lam)
    else:
        W_x = linalg.check_symmetric(W_x, "W_x")
    if linalg.sym_eig_min(W_x) <= 1e-12 * max(linalg.sym_eig_max(W_x), 0.0):
        raise NotPositiveDefinite(
            "tube shape W_x is not positive definite; the noise covariance "
            "may be degenerate"
        )
    r_x = max_inscribed_radius(W_x, X)
    W_hat_u = max_volume_input_shape(U, 1.0)
    W_u, r_u = scale_input_shape(W_hat_u, 1.0, K, W_x)
    nu = terminal_weight(Q, R, K, W_x)
    rho = radius_from_violation(eps, A.shape[0], dist, lam=lam)
    params = DesignParams(
        A=A, B=B, Gamma_w=Gamma_w, Q=np.asarray(Q, dtype=float),
        R=np.asarray(R, dtype=float), K=K, P=P, W_x=W_x, lam=float(lam),
        r_x=r_x, W_u=W_u, r_u=r_u, r_N=min(r_x, r_u), rho=rho,
        eps=float(eps), nu=float(nu), mu=float(mu), N=int(horizon),
        dist=dist, X=X, U=U,
    )
    report = params.validate()
    if not report.passed:
        names = ", ".join(c.name for c in report.failing())
        raise ValidationFailed(f"design validation failed: {names}")
    return params, report
