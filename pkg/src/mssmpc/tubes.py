"""Probabilistic reachable sets for the error dynamics and the tightened
tube radii they induce on the nominal problem, plus the a-posteriori
probability bounds recovered from a solved plan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import chi2

from . import linalg
from .design import GAUSSIAN, GENERIC, DesignParams
from .errors import RadiusBelowRho


class ViolationLevel(NamedTuple):
    value: float
    vacuous: bool  # generic bound exceeded 1 and was clipped


def prs_radius(rho: float, lam: float, ell: int) -> float:
    """Radius rho (1 - lam^ell) of the ell-step reachable ellipsoid."""
    if rho < 0 or not 0.0 < lam < 1.0 or ell < 0:
        raise ValueError("need rho >= 0, lam in (0,1), ell >= 0")
    return rho * (1.0 - lam**ell)


def violation_fn(rho: float, n: int, dist: str) -> ViolationLevel:
    """Violation level of the radius-rho confidence ellipsoid."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if dist == GENERIC:
        raw = n / rho**2
        return ViolationLevel(min(raw, 1.0), raw > 1.0)
    if dist == GAUSSIAN:
        return ViolationLevel(float(1.0 - chi2.cdf(rho**2, df=n)), False)
    raise ValueError(f"unknown distribution tag {dist!r}")


def confidence(rho: float, n: int, dist: str) -> float:
    """1 - violation level; 0 when rho is not positive."""
    if rho <= 0.0:
        return 0.0
    return 1.0 - violation_fn(rho, n, dist).value


def _confidence_vec(rho: np.ndarray, n: int, dist: str) -> np.ndarray:
    out = np.zeros_like(rho)
    pos = rho > 0.0
    if not pos.any():
        return out
    if dist == GENERIC:
        out[pos] = np.maximum(1.0 - n / rho[pos] ** 2, 0.0)
    elif dist == GAUSSIAN:
        out[pos] = chi2.cdf(rho[pos] ** 2, df=n)
    else:
        raise ValueError(f"unknown distribution tag {dist!r}")
    return out


@dataclass(frozen=True)
class ErrorCovariance:
    """Covariance sequence of the closed-loop error, E_0 = 0."""

    seq: tuple[np.ndarray, ...]

    def __getitem__(self, ell: int) -> np.ndarray:
        return self.seq[ell]

    def __len__(self) -> int:
        return len(self.seq)


def covariance_recursion(A_K, Gamma_w, N: int) -> ErrorCovariance:
    """Propagate E_{l+1} = A_K E_l A_K' + Gamma_w from E_0 = 0."""
    if N < 1:
        raise ValueError("horizon must be at least 1")
    A_K = linalg.as_matrix(A_K, "A_K")
    Gamma_w = linalg.check_symmetric(Gamma_w, "Gamma_w")
    seq = [np.zeros_like(Gamma_w)]
    for _ in range(N):
        seq.append(A_K @ seq[-1] @ A_K.T + Gamma_w)
    return ErrorCovariance(tuple(seq))


@dataclass(frozen=True)
class TightenedTube:
    """Per-step nominal constraint radii after subtracting PRS radii.

    sx[l-1] and su[l-1] hold the stage radii for l = 1..N-1; the terminal
    stage carries both a state-derived and an input-derived radius, applied
    to the nominal terminal state with shape W_x.
    """

    sx: np.ndarray
    su: np.ndarray
    tN_x: float
    tN_u: float
    rbar_x: float
    rbar_u: float

    def state_radius(self, ell: int, N: int) -> float:
        return self.tN_x if ell == N else float(self.sx[ell - 1])

    def input_radius(self, ell: int) -> float:
        return float(self.su[ell - 1])


def build_tube(rbar_x: float, rbar_u: float, design: DesignParams) -> TightenedTube:
    """Tube radii for relaxed bounds (rbar_x, rbar_u); both must clear rho."""
    rho, lam, N = design.rho, design.lam, design.N
    if rbar_x < rho - 1e-9 or rbar_u < rho - 1e-9:
        raise RadiusBelowRho(
            f"relaxed radii ({rbar_x:.4f}, {rbar_u:.4f}) below rho = {rho:.4f}"
        )
    ells = np.arange(1, N)
    shrink = rho * (1.0 - lam**ells)
    return TightenedTube(
        sx=rbar_x - shrink,
        su=rbar_u - shrink,
        tN_x=rbar_x - prs_radius(rho, lam, N),
        tN_u=rbar_u - prs_radius(rho, lam, N),
        rbar_x=float(rbar_x),
        rbar_u=float(rbar_u),
    )


@dataclass(frozen=True)
class PosteriorBounds:
    """A-posteriori Chebychev radii and probability floors along a plan.

    Index i holds prediction step l = i+1.  The input entry at l = N is
    evaluated for the terminal feedback K z_N.  Undefined entries (nominal
    value on or outside the reference ellipsoid) carry probability 0 and
    defined = False.
    """

    rho_x: np.ndarray
    rho_u: np.ndarray
    p_x: np.ndarray
    p_u: np.ndarray
    defined_x: np.ndarray
    defined_u: np.ndarray
    rho_N: float
    p_N: float
    defined_N: bool


def posterior_bounds(z, v, design: DesignParams) -> PosteriorBounds:
    """Probability floors for each step of a solved nominal plan.

    z has rows z_1..z_N and v rows v_0..v_{N-1}; the v_0 row needs no bound
    (its error is zero) and is ignored here.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    N, n, lam = design.N, design.n, design.lam
    if z.shape[0] != N or v.shape[0] != N:
        raise ValueError(f"expected {N} nominal states and inputs, got {z.shape[0]}, {v.shape[0]}")
    denom = 1.0 - lam ** np.arange(1, N + 1)
    ax = np.sqrt(np.maximum(np.einsum("li,ij,lj->l", z, design.W_x_inv, z), 0.0))
    u_nom = np.vstack([v[1:], (design.K @ z[N - 1])[None, :]])
    au = np.sqrt(np.maximum(np.einsum("li,ij,lj->l", u_nom, design.W_u_inv, u_nom), 0.0))
    def_x = ax < design.r_x
    def_u = au < design.r_u
    rho_x = np.where(def_x, (design.r_x - ax) / denom, 0.0)
    rho_u = np.where(def_u, (design.r_u - au) / denom, 0.0)
    p_x = _confidence_vec(rho_x, n, design.dist) * def_x
    p_u = _confidence_vec(rho_u, n, design.dist) * def_u
    aN = ax[N - 1]
    if aN < design.r_N:
        rho_N = (design.r_N - aN) / (1.0 - lam**N)
        p_N = confidence(rho_N, n, design.dist)
        defined_N = True
    else:
        rho_N, p_N, defined_N = 0.0, 0.0, False
    return PosteriorBounds(rho_x, rho_u, p_x, p_u, def_x, def_u, float(rho_N), p_N, defined_N)


def terminal_invariance_check(z, r: float, design: DesignParams) -> bool:
    """Does one closed-loop step keep z inside the lam-contracted ellipsoid."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    z = np.asarray(z, dtype=float)
    step = design.A_K @ z
    return float(step @ design.W_x_inv @ step) <= (design.lam * r) ** 2 + 1e-12
