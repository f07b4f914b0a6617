"""Seeded closed-loop simulation and Monte-Carlo aggregation.

Reproducibility contract: every trajectory draws its noise from an RNG
seeded by ``mix64(master_seed, trajectory_index)`` (a splitmix64 round
over ``master + (index+1) * golden``), so batches are bit-identical for a
fixed master seed regardless of evaluation order, and paired experiments
can share noise streams (common random numbers) by sharing the master
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .controllers import (
    ControllerStep,
    IsControllerState,
    step_is,
    step_ms,
)
from .design import DesignParams
from .errors import InfeasibleAtStart

MS = "ms"
IS = "is"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 output step (finalizer of the mixing rule)."""
    z = (state + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix64(master_seed: int, index: int) -> int:
    """Per-trajectory seed: splitmix64 of master + (index+1) * golden."""
    return splitmix64((master_seed + (index + 1) * _GOLDEN) & _MASK)


def noise_factor(Gamma_w) -> np.ndarray:
    """Cholesky factor of the noise covariance; eigen-based pseudo-factor
    when the covariance is singular."""
    Gamma_w = linalg.check_symmetric(Gamma_w, "Gamma_w")
    try:
        return linalg.cholesky(Gamma_w)
    except Exception:
        return linalg.sqrtm_psd(Gamma_w)


def gaussian_noise(Gamma_w, seed: int, count: int) -> np.ndarray:
    """Zero-mean Gaussian samples with the given covariance, (count, n)."""
    L = noise_factor(Gamma_w)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, L.shape[0])) @ L.T


@dataclass
class TrajectoryRecord:
    """One closed-loop run: states x_0..x_T, inputs u_0..u_T (the final
    input comes from one extra controller call so membership statistics
    cover step T), noise w_0..w_{T-1}, per-step diagnostics, and the
    first-T-steps quadratic cost."""

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    steps: list[ControllerStep]
    cost: float
    in_ell_x: np.ndarray
    in_ell_u: np.ndarray
    in_poly_x: np.ndarray
    in_poly_u: np.ndarray
    valid: bool = True


@dataclass
class McSummary:
    """Aggregated Monte-Carlo statistics over one controller."""

    n_sim: int
    seed: int
    controller: str
    strategy: str | None
    f_x: np.ndarray
    f_u: np.ndarray
    f_poly_x: np.ndarray
    f_poly_u: np.ndarray
    costs: np.ndarray
    n_valid: int = 0
    mean_cost: float = field(init=False)

    def __post_init__(self):
        self.mean_cost = float(np.mean(self.costs)) if self.costs.size else float("nan")


@dataclass
class ComparisonResult:
    comparable: bool
    ms: McSummary | None = None
    is_: McSummary | None = None
    cost_ratio: float | None = None


def _memberships(design: DesignParams, x: np.ndarray, u: np.ndarray):
    in_ex = float(x @ design.W_x_inv @ x) <= design.r_x**2 + 1e-9
    in_eu = float(u @ design.W_u_inv @ u) <= design.r_u**2 + 1e-9
    return in_ex, in_eu, design.X.contains(x, 1e-9), design.U.contains(u, 1e-9)


def rollout(controller: str, x0, T: int, seed: int, design: DesignParams,
            strategy: str = "A", solver_tol: float = 1e-8) -> TrajectoryRecord:
    """Simulate T closed-loop steps from x0 under the chosen controller.

    The default solver tolerance is one decade looser than the single-step
    default: stepping accuracy requirements are far milder than the
    equivalence checks, and the loose decade avoids slow tail iterations
    at weakly complementary optima.
    """
    if T < 1:
        raise ValueError("need at least one step")
    x0 = np.asarray(x0, dtype=float)
    n, m = design.n, design.m
    w = gaussian_noise(design.Gamma_w, seed, T)
    x = np.zeros((T + 1, n))
    u = np.zeros((T + 1, m))
    x[0] = x0
    steps: list[ControllerStep] = []
    in_ex = np.zeros(T + 1, dtype=bool)
    in_eu = np.zeros(T + 1, dtype=bool)
    in_px = np.zeros(T + 1, dtype=bool)
    in_pu = np.zeros(T + 1, dtype=bool)
    state: IsControllerState | None = None
    cost = 0.0
    for k in range(T + 1):
        if controller == MS:
            step = step_ms(x[k], design, strategy, solver_tol=solver_tol)
        elif controller == IS:
            try:
                step, state = step_is(x[k], state, design, solver_tol=solver_tol)
            except InfeasibleAtStart:
                return TrajectoryRecord(x[:1], u[:0], w[:0], [], float("nan"),
                                        in_ex[:0], in_eu[:0], in_px[:0], in_pu[:0],
                                        valid=False)
        else:
            raise ValueError(f"unknown controller {controller!r}")
        steps.append(step)
        u[k] = step.u
        in_ex[k], in_eu[k], in_px[k], in_pu[k] = _memberships(design, x[k], u[k])
        if k < T:
            cost += float(x[k] @ design.Q @ x[k] + u[k] @ design.R @ u[k])
            x[k + 1] = design.A @ x[k] + design.B @ u[k] + w[k]
    return TrajectoryRecord(x, u, w, steps, cost, in_ex, in_eu, in_px, in_pu)


def monte_carlo(controller: str, x0, T: int, n_sim: int, seed: int,
                design: DesignParams, strategy: str = "A",
                solver_tol: float = 1e-8) -> McSummary:
    """Run n_sim seeded rollouts and aggregate satisfaction frequencies.

    Frequencies are indexed by realized step l = 1..T and use ellipsoid
    membership as the primary statistic; polytope membership is kept as a
    secondary column.  Invalid rollouts (comparator infeasible at the
    start) are excluded from every average.
    """
    if n_sim < 1:
        raise ValueError("need at least one run")
    cx = np.zeros(T)
    cu = np.zeros(T)
    px = np.zeros(T)
    pu = np.zeros(T)
    costs = []
    n_valid = 0
    for i in range(n_sim):
        rec = rollout(controller, x0, T, mix64(seed, i), design, strategy,
                      solver_tol=solver_tol)
        if not rec.valid:
            continue
        n_valid += 1
        cx += rec.in_ell_x[1:]
        cu += rec.in_ell_u[1:]
        px += rec.in_poly_x[1:]
        pu += rec.in_poly_u[1:]
        costs.append(rec.cost)
    denom = max(n_valid, 1)
    return McSummary(
        n_sim=n_sim, seed=seed, controller=controller,
        strategy=strategy if controller == MS else None,
        f_x=cx / denom, f_u=cu / denom,
        f_poly_x=px / denom, f_poly_u=pu / denom,
        costs=np.asarray(costs), n_valid=n_valid,
    )


def compare_ms_is(x0, T: int, n_sim: int, seed: int, design: DesignParams,
                  strategy: str = "A") -> ComparisonResult:
    """Paired Monte-Carlo of the merged controller against the comparator.

    Both runs share per-trajectory seeds (common random numbers), so the
    mean-cost ratio estimator has low variance.  If the comparator is
    infeasible at x0 the comparison is reported as not comparable.
    """
    try:
        step_is(np.asarray(x0, dtype=float), None, design)
    except InfeasibleAtStart:
        return ComparisonResult(comparable=False)
    ms = monte_carlo(MS, x0, T, n_sim, seed, design, strategy)
    is_ = monte_carlo(IS, x0, T, n_sim, seed, design)
    ratio = ms.mean_cost / is_.mean_cost
    return ComparisonResult(True, ms, is_, float(ratio))
