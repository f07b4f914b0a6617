"""Receding-horizon controllers over the tightened tubes.

Four problems share one decision-vector layout:

* basic    -- fixed tube radii, measured-state initialization, hard bound
              on the applied input (its error is zero, so the first-step
              chance constraint degenerates to a deterministic one);
* backup   -- tube radii become variables and the largest relaxation is
              minimized through an epigraph scalar;
* ms       -- tracking cost plus an exact penalty on the same epigraph
              scalar, merging the two phases into one program;
* is       -- the open-loop-capable comparator: polytope-minus-reachable-
              set stage tightening, invariant ellipsoidal terminal set,
              and dual-mode initialization (measurement when feasible,
              previous one-step prediction otherwise).

Strategies for the applied input: A adds nothing, B bounds it by the
input polytope, C bounds it by the polytope scaled with the input
relaxation factor.

Program templates are cached per design: the measured state only enters
the first dynamics right-hand side, so Monte-Carlo stepping rebuilds a
vector, not the matrices.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass

import numpy as np

from .design import DesignParams, _facet_norms
from .errors import DesignInvalid, InfeasibleAtStart, SolverFailure
from .socp import FEASIBLE, OPTIMAL, ConicProgram, SocBlock, feasibility_probe, solve
from .tubes import PosteriorBounds, TightenedTube, build_tube, posterior_bounds, prs_radius

STRATEGY_NONE = "A"
STRATEGY_HARD = "B"
STRATEGY_SOFT = "C"
STRATEGIES = (STRATEGY_NONE, STRATEGY_HARD, STRATEGY_SOFT)

CLOSED_LOOP = "closed_loop"
OPEN_LOOP = "open_loop"

BASIC_FEASIBLE_TOL = 1e-6
DEFAULT_SOLVER_TOL = 1e-9


@dataclass(frozen=True)
class ControllerStep:
    """Everything one controller invocation produced."""

    u: np.ndarray
    z_plan: np.ndarray          # rows z_0..z_N
    v_plan: np.ndarray          # rows v_0..v_{N-1}
    rbar_x: float
    rbar_u: float
    gamma_x: float
    gamma_u: float
    delta_r: float
    tracking_cost: float
    objective: float            # tracking cost plus the exact penalty term
    basic_feasible: bool
    posterior: PosteriorBounds
    tube: TightenedTube
    mode: str = CLOSED_LOOP


@dataclass(frozen=True)
class IsControllerState:
    """Carry-over between comparator steps: the previous one-step
    prediction and the initialization mode last used."""

    z_next: np.ndarray
    mode: str


class _Template:
    """Assembled program arrays for one (kind, strategy); only the first
    dynamics right-hand side depends on the measured state."""

    def __init__(self, design: DesignParams, kind: str, strategy: str | None):
        n, m, N = design.n, design.m, design.N
        self.n_state, self.n_input, self.N = n, m, N
        extra = 3 if kind in ("backup", "ms") else 0
        nv = n * N + m * N + extra
        self.nv = nv
        self.z_slice = lambda ell: slice(n * (ell - 1), n * ell)  # ell = 1..N
        self.v_slice = lambda ell: slice(n * N + m * ell, n * N + m * (ell + 1))
        # radius and epigraph variables exist only for the relaxed kinds
        self.i_rx, self.i_ru, self.i_t = (nv - 3, nv - 2, nv - 1) if extra else (None,) * 3

        A, B = design.A, design.B
        Aeq = np.zeros((n * N, nv))
        Aeq[0:n, self.z_slice(1)] = np.eye(n)
        Aeq[0:n, self.v_slice(0)] = -B
        for ell in range(1, N):
            rows = slice(n * ell, n * (ell + 1))
            Aeq[rows, self.z_slice(ell + 1)] = np.eye(n)
            Aeq[rows, self.z_slice(ell)] = -A
            Aeq[rows, self.v_slice(ell)] = -B
        self.Aeq = Aeq

        P = np.zeros((nv, nv))
        q = np.zeros(nv)
        if kind in ("basic", "ms", "is"):
            for ell in range(1, N):
                P[self.z_slice(ell), self.z_slice(ell)] = 2.0 * design.Q
            P[self.z_slice(N), self.z_slice(N)] = 2.0 * design.terminal_weight_matrix()
            for ell in range(N):
                P[self.v_slice(ell), self.v_slice(ell)] = 2.0 * design.R
        if kind == "ms":
            q[self.i_t] = design.mu
        elif kind == "backup":
            q[self.i_t] = 1.0
        self.P, self.q = P, q

        Gl_rows: list[np.ndarray] = []
        hl: list[float] = []

        def lin_row(entries, rhs):
            row = np.zeros(nv)
            for idx, val in entries:
                row[idx] = val
            Gl_rows.append(row)
            hl.append(rhs)

        socs: list[SocBlock] = []
        relaxed = extra > 0
        rho, lam = design.rho, design.lam
        if kind == "is":
            # polytopic stage tightening, ellipsoidal invariant terminal set
            cx = _facet_norms(design.W_x, design.X)
            cu = _facet_norms(design.W_u, design.U)
            Hx, hx = design.X.H, design.X.h
            Hu, hu = design.U.H, design.U.h
            for j in range(Hu.shape[0]):
                lin_row([(self.v_slice(0).start + kk, Hu[j, kk]) for kk in range(m)], hu[j])
            for ell in range(1, N):
                t = prs_radius(rho, lam, ell)
                for j in range(Hx.shape[0]):
                    lin_row([(self.z_slice(ell).start + kk, Hx[j, kk]) for kk in range(n)],
                            hx[j] - t * cx[j])
                for j in range(Hu.shape[0]):
                    lin_row([(self.v_slice(ell).start + kk, Hu[j, kk]) for kk in range(m)],
                            hu[j] - t * cu[j])
            F = np.zeros((n, nv))
            F[:, self.z_slice(N)] = design.W_x_isqrt
            socs.append(SocBlock(np.zeros(nv), design.r_N - rho, F, np.zeros(n)))
        else:
            if relaxed:
                lin_row([(self.i_rx, -1.0)], -design.r_x)
                lin_row([(self.i_ru, -1.0)], -design.r_u)
                lin_row([(self.i_rx, 1.0), (self.i_t, -1.0)], design.r_x)
                lin_row([(self.i_ru, 1.0), (self.i_t, -1.0)], design.r_u)
                lin_row([(self.i_t, -1.0)], 0.0)
                if strategy == STRATEGY_HARD:
                    Hu, hu = design.U.H, design.U.h
                    for j in range(Hu.shape[0]):
                        lin_row([(self.v_slice(0).start + kk, Hu[j, kk]) for kk in range(m)],
                                hu[j])
                elif strategy == STRATEGY_SOFT:
                    Hu, hu = design.U.H, design.U.h
                    for j in range(Hu.shape[0]):
                        entries = [(self.v_slice(0).start + kk, Hu[j, kk]) for kk in range(m)]
                        entries.append((self.i_ru, -hu[j] / design.r_u))
                        lin_row(entries, 0.0)
            else:
                # applied input is deterministic: its chance constraint is hard
                F0 = np.zeros((m, nv))
                F0[:, self.v_slice(0)] = design.W_u_isqrt
                socs.append(SocBlock(np.zeros(nv), design.r_u, F0, np.zeros(m)))

            def soc(radius_index, fixed_radius, shrink, block, sl):
                c = np.zeros(nv)
                if relaxed:
                    c[radius_index] = 1.0
                    offset = -shrink
                else:
                    offset = fixed_radius - shrink
                F = np.zeros((block.shape[0], nv))
                F[:, sl] = block
                socs.append(SocBlock(c, offset, F, np.zeros(block.shape[0])))

            for ell in range(1, N):
                t = prs_radius(rho, lam, ell)
                soc(self.i_rx, design.r_x, t, design.W_x_isqrt, self.z_slice(ell))
                soc(self.i_ru, design.r_u, t, design.W_u_isqrt, self.v_slice(ell))
            tN = prs_radius(rho, lam, N)
            soc(self.i_rx, design.r_x, tN, design.W_x_isqrt, self.z_slice(N))
            soc(self.i_ru, design.r_u, tN, design.W_x_isqrt, self.z_slice(N))

        self.Gl = np.vstack(Gl_rows) if Gl_rows else None
        self.hl = np.array(hl) if hl else None
        self.socs = socs
        self.A_dyn = design.A

    def program(self, x_init: np.ndarray) -> ConicProgram:
        beq = np.zeros(self.Aeq.shape[0])
        beq[: self.n_state] = self.A_dyn @ x_init
        return ConicProgram(n=self.nv, P=self.P, q=self.q, A=self.Aeq, b=beq,
                            Gl=self.Gl, hl=self.hl, socs=self.socs)


_template_cache: "weakref.WeakKeyDictionary[DesignParams, dict]" = weakref.WeakKeyDictionary()
_template_lock = threading.Lock()


def _template(design: DesignParams, kind: str, strategy: str | None) -> _Template:
    key = (kind, strategy)
    with _template_lock:
        per_design = _template_cache.setdefault(design, {})
        tpl = per_design.get(key)
        if tpl is None:
            tpl = per_design[key] = _Template(design, kind, strategy)
    return tpl


def _check_design(design: DesignParams):
    if design.rho > design.r_x or design.rho > design.r_u:
        raise DesignInvalid("rho exceeds a tube radius; design invalid")
    if not 0.0 < design.lam < 1.0:
        raise DesignInvalid("lambda outside (0,1)")


def _check_strategy(strategy: str):
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")


def build_basic(x_init, design: DesignParams) -> ConicProgram:
    """Fixed-radius tube program initialized at the given state."""
    _check_design(design)
    return _template(design, "basic", None).program(np.asarray(x_init, dtype=float))


def build_backup(x_k, design: DesignParams, strategy: str = STRATEGY_NONE) -> ConicProgram:
    """Minimum-relaxation program; feasible for every measured state."""
    _check_design(design)
    _check_strategy(strategy)
    return _template(design, "backup", strategy).program(np.asarray(x_k, dtype=float))


def build_ms(x_k, design: DesignParams, strategy: str = STRATEGY_NONE) -> ConicProgram:
    """Merged program: tracking cost plus exact penalty on the relaxation."""
    _check_design(design)
    _check_strategy(strategy)
    return _template(design, "ms", strategy).program(np.asarray(x_k, dtype=float))


def build_is(x_init, design: DesignParams) -> ConicProgram:
    """Comparator program with polytopic stage tightening."""
    _check_design(design)
    return _template(design, "is", None).program(np.asarray(x_init, dtype=float))


def _extract_plan(tpl: _Template, y: np.ndarray, x_init: np.ndarray):
    n, m, N = tpl.n_state, tpl.n_input, tpl.N
    z = np.vstack([x_init[None, :], y[: n * N].reshape(N, n)])
    v = y[n * N: n * N + m * N].reshape(N, m)
    return z, v


def _costs(design: DesignParams, z: np.ndarray, v: np.ndarray) -> float:
    stage = sum(float(z[l] @ design.Q @ z[l] + v[l] @ design.R @ v[l])
                for l in range(design.N))
    return stage + float(z[design.N] @ design.terminal_weight_matrix() @ z[design.N])


def _solve_or_raise(prog: ConicProgram, tol: float, what: str):
    # deterministic retry ladder: weakly complementary optima can stall a
    # hair above the tightest tolerance, so relax in fixed decades
    last = None
    for attempt_tol in (tol, max(tol * 10, 1e-8), 1e-7):
        sol = solve(prog, tol=attempt_tol)
        if sol.status == OPTIMAL:
            return sol
        last = sol
        if attempt_tol >= 1e-7:
            break
    raise SolverFailure(f"{what} ended with status {last.status}")


def step_ms(x_k, design: DesignParams, strategy: str = STRATEGY_NONE,
            solver_tol: float = DEFAULT_SOLVER_TOL) -> ControllerStep:
    """One merged-controller step at the measured state."""
    x_k = np.asarray(x_k, dtype=float)
    tpl = _template(design, "ms", strategy)
    _check_design(design)
    _check_strategy(strategy)
    sol = _solve_or_raise(tpl.program(x_k), solver_tol, "measured-state step")
    z, v = _extract_plan(tpl, sol.y, x_k)
    rbx = float(sol.y[tpl.i_rx])
    rbu = float(sol.y[tpl.i_ru])
    delta_r = max(rbx - design.r_x, rbu - design.r_u, 0.0)
    tracking = _costs(design, z, v)
    return ControllerStep(
        u=v[0].copy(), z_plan=z, v_plan=v,
        rbar_x=rbx, rbar_u=rbu,
        gamma_x=rbx / design.r_x, gamma_u=rbu / design.r_u,
        delta_r=delta_r,
        tracking_cost=tracking,
        objective=tracking + design.mu * delta_r,
        basic_feasible=delta_r <= BASIC_FEASIBLE_TOL,
        posterior=posterior_bounds(z[1:], v, design),
        tube=build_tube(rbx, rbu, design),
    )


def step_backup(x_k, design: DesignParams, strategy: str = STRATEGY_NONE,
                solver_tol: float = DEFAULT_SOLVER_TOL) -> ControllerStep:
    """One pure minimum-relaxation step (no tracking objective)."""
    x_k = np.asarray(x_k, dtype=float)
    tpl = _template(design, "backup", strategy)
    _check_design(design)
    _check_strategy(strategy)
    sol = _solve_or_raise(tpl.program(x_k), solver_tol, "backup step")
    z, v = _extract_plan(tpl, sol.y, x_k)
    rbx = float(sol.y[tpl.i_rx])
    rbu = float(sol.y[tpl.i_ru])
    delta_r = max(rbx - design.r_x, rbu - design.r_u, 0.0)
    tracking = _costs(design, z, v)
    return ControllerStep(
        u=v[0].copy(), z_plan=z, v_plan=v,
        rbar_x=rbx, rbar_u=rbu,
        gamma_x=rbx / design.r_x, gamma_u=rbu / design.r_u,
        delta_r=delta_r,
        tracking_cost=tracking,
        objective=delta_r,
        basic_feasible=delta_r <= BASIC_FEASIBLE_TOL,
        posterior=posterior_bounds(z[1:], v, design),
        tube=build_tube(rbx, rbu, design),
    )


def step_is(x_k, state: IsControllerState | None, design: DesignParams,
            solver_tol: float = DEFAULT_SOLVER_TOL) -> tuple[ControllerStep, IsControllerState]:
    """One comparator step with dual-mode initialization.

    The measurement initializes the plan whenever the program is feasible
    for it; otherwise the previous one-step prediction does, which is
    feasible by the shift argument.  At k = 0 there is no fallback.
    """
    x_k = np.asarray(x_k, dtype=float)
    tpl = _template(design, "is", None)
    _check_design(design)
    if feasibility_probe(tpl.program(x_k)) == FEASIBLE:
        mode, x_init = CLOSED_LOOP, x_k
    else:
        if state is None:
            raise InfeasibleAtStart(
                "comparator infeasible at the initial state and no previous "
                "prediction exists")
        mode, x_init = OPEN_LOOP, np.asarray(state.z_next, dtype=float)
    sol = _solve_or_raise(tpl.program(x_init), solver_tol, "comparator step")
    z, v = _extract_plan(tpl, sol.y, x_init)
    tracking = _costs(design, z, v)
    step = ControllerStep(
        u=v[0].copy(), z_plan=z, v_plan=v,
        rbar_x=design.r_x, rbar_u=design.r_u,
        gamma_x=1.0, gamma_u=1.0, delta_r=0.0,
        tracking_cost=tracking, objective=tracking,
        basic_feasible=mode == CLOSED_LOOP,
        posterior=posterior_bounds(z[1:], v, design),
        tube=build_tube(design.r_x, design.r_u, design),
        mode=mode,
    )
    return step, IsControllerState(z_next=z[1].copy(), mode=mode)


def shift_plan(z: np.ndarray, v: np.ndarray, design: DesignParams):
    """Shifted candidate for the next problem: drop the first input,
    append the terminal feedback, and roll the nominal states forward."""
    K, A_K = design.K, design.A_K
    v_next = np.vstack([v[1:], (K @ z[design.N])[None, :]])
    z_next = np.vstack([z[1:], (A_K @ z[design.N])[None, :]])
    return z_next, v_next
