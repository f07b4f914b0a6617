"""Dense symmetric linear algebra used by every other module.

Small, well-conditioned problems only (n of a few); everything is backed
by LAPACK through numpy except the two structured solvers, which are
written out because their contracts (scaled Lyapunov inequalities, LQR
sign convention) carry the real content.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite, Unstabilizable, UnstableScaledSystem

SYM_RTOL = 1e-12


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def check_symmetric(M, name: str = "matrix") -> np.ndarray:
    """Validate and return a symmetric matrix (symmetrized to kill round-off)."""
    M = as_matrix(M, name)
    n, m = M.shape
    if n != m or n < 1:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > SYM_RTOL * scale * 10:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def cholesky(M) -> np.ndarray:
    """Lower-triangular L with L L^T = M for positive definite M."""
    M = check_symmetric(M, "cholesky input")
    eigs = np.linalg.eigvalsh(M)
    if eigs[0] <= 1e-12 * max(eigs[-1], 0.0):
        raise NotPositiveDefinite(
            f"matrix is not positive definite (min eig {eigs[0]:.3e}, max eig {eigs[-1]:.3e})"
        )
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by eig check
        raise NotPositiveDefinite(str(exc)) from exc


def sym_eig_max(M) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    M = check_symmetric(M, "sym_eig_max input")
    return float(np.linalg.eigvalsh(M)[-1])


def sym_eig_min(M) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    M = check_symmetric(M, "sym_eig_min input")
    return float(np.linalg.eigvalsh(M)[0])


def sqrtm_psd(M) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition."""
    M = check_symmetric(M, "sqrtm input")
    w, V = np.linalg.eigh(M)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def inv_sqrtm_pd(M) -> np.ndarray:
    """Symmetric inverse square root of a positive definite matrix."""
    M = check_symmetric(M, "inv_sqrtm input")
    w, V = np.linalg.eigh(M)
    if w[0] <= 1e-12 * max(w[-1], 0.0):
        raise NotPositiveDefinite(f"matrix is not positive definite (min eig {w[0]:.3e})")
    return (V / np.sqrt(w)) @ V.T


def spectral_radius(A) -> float:
    A = as_matrix(A, "spectral_radius input")
    return float(np.abs(np.linalg.eigvals(A)).max())


def solve_dlyap_scaled(A_K, G, lam: float) -> np.ndarray:
    """Solve W = A_K W A_K^T / lam^2 + G / (1-lam)^2.

    The fixed point satisfies both scaled Lyapunov inequalities
    A_K W A_K^T <= lam^2 W and G <= (1-lam)^2 W, the second with equality
    at the fixed point minus the contraction term.  Solved exactly via the
    Kronecker linear system; dimensions here are tiny.
    """
    A_K = as_matrix(A_K, "A_K")
    G = check_symmetric(G, "G")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if spectral_radius(A_K) >= lam:
        raise UnstableScaledSystem(
            f"spectral radius {spectral_radius(A_K):.6f} is not below lambda = {lam}"
        )
    n = A_K.shape[0]
    At = A_K / lam
    Gt = G / (1.0 - lam) ** 2
    lhs = np.eye(n * n) - np.kron(At, At)
    W = np.linalg.solve(lhs, Gt.reshape(-1)).reshape(n, n)
    return 0.5 * (W + W.T)


def solve_dare(A, B, Q, R, tol: float = 1e-12, max_iter: int = 10_000):
    """Discrete-time LQR via fixed-point iteration on the Riccati map.

    Returns (K, P) with the stored sign convention u = K x, so the closed
    loop is A_K = A + B K and A_K is Schur.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    Q = check_symmetric(Q, "Q")
    R = check_symmetric(R, "R")
    if sym_eig_min(R) <= 0:
        raise NotPositiveDefinite("R must be positive definite")
    n = A.shape[0]
    P = Q.copy()
    diverge_cap = 1e12 * max(1.0, float(np.abs(Q).max()), float(np.abs(R).max()))
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ (A - B @ gain)
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.abs(P_next - P).max()
        P = P_next
        if np.abs(P).max() > diverge_cap:
            raise Unstabilizable("Riccati iteration diverged; (A, B) not stabilizable")
        if delta <= tol * max(1.0, np.abs(P).max()):
            break
    else:
        raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps")
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    A_K = A + B @ K
    if spectral_radius(A_K) >= 1.0:
        raise Unstabilizable("closed loop is not Schur")
    residual = A.T @ P @ A - P - (A.T @ P @ B) @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A) + Q
    if np.abs(residual).max() > 1e-9 * max(1.0, np.abs(P).max()):
        raise NoConvergence("Riccati residual above tolerance after convergence")
    return K, P
