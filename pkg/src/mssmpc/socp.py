"""Self-contained convex solver for quadratic-objective cone programs.

Problem class:

    minimize    0.5 y'P y + q'y
    subject to  A y = b
                Gl y <= hl                       (nonnegative rows)
                c_j'y + d_j >= || F_j y + g_j ||  (second-order cone blocks)

solved by a dense primal-dual interior-point method with Nesterov-Todd
scalings and a Mehrotra predictor-corrector.  Problem sizes here are at
most a few hundred variables, so all factorizations are dense.  Cone
operations are batched over blocks of equal dimension, which keeps the
per-iteration cost dominated by one (n+p) factorization.

Primal infeasibility is reported with a Farkas-type certificate
(nu, z) satisfying  A'nu + G'z = 0,  z in K,  b'nu + h'z = -1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalBreakdown, SolverFailure

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
MAX_ITER = "max_iter"

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"

_STEP = 0.99
_PROBE_SLACK_TOL = 1e-6


@dataclass
class SocBlock:
    """One second-order cone constraint  c'y + d >= ||F y + g||."""

    c: np.ndarray
    d: float
    F: np.ndarray
    g: np.ndarray


@dataclass
class ConicProgram:
    """Quadratic-objective program over nonnegative and second-order cones."""

    n: int
    P: np.ndarray | None = None
    q: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    Gl: np.ndarray | None = None
    hl: np.ndarray | None = None
    socs: list[SocBlock] = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("program needs at least one variable")
        n = self.n
        self.P = np.zeros((n, n)) if self.P is None else np.asarray(self.P, dtype=float)
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float)
        if self.P.shape != (n, n) or self.q.shape != (n,):
            raise ValueError("objective dimensions inconsistent with n")
        if np.abs(self.P - self.P.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(self.P).max(initial=0.0)):
            raise ValueError("P must be symmetric")
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        else:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.Gl is None:
            self.Gl = np.zeros((0, n))
            self.hl = np.zeros(0)
        else:
            self.Gl = np.atleast_2d(np.asarray(self.Gl, dtype=float))
            self.hl = np.atleast_1d(np.asarray(self.hl, dtype=float))
        if self.A.shape[1] != n or self.Gl.shape[1] != n:
            raise ValueError("constraint matrices inconsistent with n")
        if self.A.shape[0] != self.b.shape[0] or self.Gl.shape[0] != self.hl.shape[0]:
            raise ValueError("constraint right-hand sides inconsistent")
        for blk in self.socs:
            blk.c = np.asarray(blk.c, dtype=float).reshape(n)
            blk.F = np.atleast_2d(np.asarray(blk.F, dtype=float))
            blk.g = np.atleast_1d(np.asarray(blk.g, dtype=float))
            if blk.F.shape[1] != n or blk.F.shape[0] != blk.g.shape[0]:
                raise ValueError("SOC block dimensions inconsistent")

    def cone_matrices(self):
        """Stack cones into (G, h, l, soc_dims) with s = h - G y in K."""
        rows = [self.Gl]
        offs = [self.hl]
        soc_dims = []
        for blk in self.socs:
            rows.append(-blk.c[None, :])
            offs.append(np.array([blk.d]))
            rows.append(-blk.F)
            offs.append(blk.g)
            soc_dims.append(1 + blk.F.shape[0])
        G = np.vstack(rows) if rows else np.zeros((0, self.n))
        h = np.concatenate(offs) if offs else np.zeros(0)
        return G, h, self.Gl.shape[0], soc_dims

    def to_json(self) -> str:
        """Structured-text dump for offline inspection."""
        doc = {
            "n": self.n,
            "P": self.P.tolist(),
            "q": self.q.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "Gl": self.Gl.tolist(),
            "hl": self.hl.tolist(),
            "socs": [
                {"c": blk.c.tolist(), "d": blk.d, "F": blk.F.tolist(), "g": blk.g.tolist()}
                for blk in self.socs
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ConicProgram":
        doc = json.loads(text)
        socs = [SocBlock(np.array(s["c"]), float(s["d"]), np.array(s["F"]), np.array(s["g"]))
                for s in doc["socs"]]
        return cls(n=doc["n"], P=np.array(doc["P"]), q=np.array(doc["q"]),
                   A=np.array(doc["A"]), b=np.array(doc["b"]),
                   Gl=np.array(doc["Gl"]), hl=np.array(doc["hl"]), socs=socs)


@dataclass
class ConicSolution:
    status: str
    y: np.ndarray | None
    obj: float | None
    nu: np.ndarray | None = None
    z: np.ndarray | None = None
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    gap: float = np.inf
    iterations: int = 0
    certificate: dict | None = None


class _Cones:
    """Jordan-algebra operations, batched over SOC blocks of equal size."""

    def __init__(self, l: int, soc_dims: list[int]):
        self.l = l
        self.m = l + sum(soc_dims)
        self.degree = l + len(soc_dims)
        groups: dict[int, list[int]] = {}
        start = l
        for d in soc_dims:
            groups.setdefault(d, []).append(start)
            start += d
        # each group: an (nblocks, d) index matrix for gather/scatter
        self.groups = [
            (d, np.asarray(starts)[:, None] + np.arange(d)[None, :])
            for d, starts in sorted(groups.items())
        ]

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for _, idx in self.groups:
            e[idx[:, 0]] = 1.0
        return e

    def min_eig(self, v: np.ndarray) -> float:
        out = np.inf
        if self.l:
            out = min(out, float(v[: self.l].min()))
        for _, idx in self.groups:
            V = v[idx]
            out = min(out, float((V[:, 0] - np.linalg.norm(V[:, 1:], axis=1)).min()))
        return out

    def to_interior(self, v: np.ndarray) -> np.ndarray:
        alpha = -self.min_eig(v)
        if alpha < 0.0:
            return v.copy()
        return v + (1.0 + alpha) * self.identity()

    def prod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for _, idx in self.groups:
            U, V = u[idx], v[idx]
            out[idx[:, 0]] = np.einsum("bd,bd->b", U, V)
            out[idx[:, 1:]] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return out

    def solve_prod(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o u = d for u."""
        out = np.empty(self.m)
        out[: self.l] = d[: self.l] / lam[: self.l]
        for _, idx in self.groups:
            L, D = lam[idx], d[idx]
            det = L[:, 0] ** 2 - np.einsum("bd,bd->b", L[:, 1:], L[:, 1:])
            u0 = (L[:, 0] * D[:, 0] - np.einsum("bd,bd->b", L[:, 1:], D[:, 1:])) / det
            out[idx[:, 0]] = u0
            out[idx[:, 1:]] = (D[:, 1:] - u0[:, None] * L[:, 1:]) / L[:, :1]
        return out

    def max_step(self, v: np.ndarray, *dvs: np.ndarray) -> float:
        """Largest t >= 0 keeping v + t dv in K for every direction given
        (v interior)."""
        t = np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.l:
                vl = v[: self.l]
                for dv in dvs:
                    neg = dv[: self.l] < 0
                    if neg.any():
                        t = min(t, float((-vl[neg] / dv[: self.l][neg]).min()))
            for _, idx in self.groups:
                V = v[idx]
                c = V[:, 0] * V[:, 0] - (V[:, 1:] * V[:, 1:]).sum(1)
                for dv in dvs:
                    D = dv[idx]
                    a = D[:, 0] * D[:, 0] - (D[:, 1:] * D[:, 1:]).sum(1)
                    b = 2.0 * (V[:, 0] * D[:, 0] - (V[:, 1:] * D[:, 1:]).sum(1))
                    disc = b * b - 4.0 * a * c
                    sq = np.sqrt(np.maximum(disc, 0.0))
                    bad = (np.abs(a) <= 1e-14) | (disc < 0.0)
                    cand = np.concatenate([
                        np.where(bad, np.inf, (-b - sq) / (2.0 * a)),
                        np.where(bad, np.inf, (-b + sq) / (2.0 * a)),
                        np.where((np.abs(a) <= 1e-14) & (np.abs(b) > 1e-14), -c / b, np.inf),
                        np.where(D[:, 0] < 0.0, -V[:, 0] / D[:, 0], np.inf),
                    ])
                    pos = cand[cand > 1e-14]
                    if pos.size:
                        t = min(t, float(pos.min()))
        return t

    def nt_scaling(self, s: np.ndarray, z: np.ndarray):
        """NT scaling state: symmetric W with W z = W^{-1} s = lam."""
        if self.l:
            s_lin, z_lin = s[: self.l], z[: self.l]
            if s_lin.min() <= 0.0 or z_lin.min() <= 0.0:
                raise NumericalBreakdown("iterate left the nonnegative cone interior")
            w_lin = np.sqrt(s_lin / z_lin)
        else:
            w_lin = np.zeros(0)
        params = []
        for _, idx in self.groups:
            S, Z = s[idx], z[idx]
            sn2 = S[:, 0] ** 2 - np.einsum("bd,bd->b", S[:, 1:], S[:, 1:])
            zn2 = Z[:, 0] ** 2 - np.einsum("bd,bd->b", Z[:, 1:], Z[:, 1:])
            if sn2.min() <= 0.0 or zn2.min() <= 0.0:
                raise NumericalBreakdown("iterate left the second-order cone interior")
            sbar = S / np.sqrt(sn2)[:, None]
            zbar = Z / np.sqrt(zn2)[:, None]
            gamma = np.sqrt((1.0 + np.einsum("bd,bd->b", sbar, zbar)) / 2.0)
            wbar = sbar.copy()
            wbar[:, 0] += zbar[:, 0]
            wbar[:, 1:] -= zbar[:, 1:]
            wbar /= (2.0 * gamma)[:, None]
            eta = (sn2 / zn2) ** 0.25
            params.append((wbar, eta))
        return _Scaling(self, w_lin, params)


class _Scaling:
    """Callable NT scaling; applies W and W^{-1} to vectors or matrices."""

    def __init__(self, cones: _Cones, w_lin: np.ndarray, params):
        self.cones = cones
        self.w_lin = w_lin
        self.params = params

    def _apply(self, v: np.ndarray, inverse: bool) -> np.ndarray:
        c = self.cones
        out = np.empty_like(v)
        if c.l:
            w = self.w_lin if v.ndim == 1 else self.w_lin[:, None]
            out[: c.l] = v[: c.l] / w if inverse else v[: c.l] * w
        for (_, idx), (wbar, eta) in zip(c.groups, self.params):
            V = v[idx]
            w1 = wbar[:, 1:]
            sgn = -1.0 if inverse else 1.0
            scale = 1.0 / eta if inverse else eta
            if v.ndim == 1:
                dot = np.einsum("bd,bd->b", w1, V[:, 1:])
                out0 = scale * (wbar[:, 0] * V[:, 0] + sgn * dot)
                out1 = scale[:, None] * (
                    sgn * V[:, :1] * w1 + V[:, 1:] + (dot / (1.0 + wbar[:, 0]))[:, None] * w1
                )
                out[idx[:, 0]] = out0
                out[idx[:, 1:]] = out1
            else:
                dot = np.einsum("bd,bdn->bn", w1, V[:, 1:, :])
                out0 = scale[:, None] * (wbar[:, :1] * V[:, 0, :] + sgn * dot)
                out1 = scale[:, None, None] * (
                    sgn * V[:, :1, :] * w1[:, :, None]
                    + V[:, 1:, :]
                    + (dot / (1.0 + wbar[:, :1]))[:, None, :] * w1[:, :, None]
                )
                out[idx[:, 0]] = out0
                out[idx[:, 1:]] = out1
        return out

    def W(self, v: np.ndarray) -> np.ndarray:
        return self._apply(v, inverse=False)

    def Winv(self, v: np.ndarray) -> np.ndarray:
        return self._apply(v, inverse=True)

    def W2_dense(self) -> np.ndarray:
        """Dense W @ W, using the quadratic representation of each block."""
        c = self.cones
        W2 = np.zeros((c.m, c.m))
        if c.l:
            d = np.arange(c.l)
            W2[d, d] = self.w_lin**2
        for (dim, idx), (wbar, eta) in zip(c.groups, self.params):
            J = np.zeros(dim)
            J[0] = 1.0
            J[1:] = -1.0
            blocks = 2.0 * np.einsum("bi,bj->bij", wbar, wbar)
            blocks -= np.diag(J)[None, :, :]
            blocks *= (eta**2)[:, None, None]
            W2[idx[:, :, None], idx[:, None, :]] = blocks
        return W2


def _pure_qp(prog: ConicProgram) -> ConicSolution:
    n, p = prog.n, prog.A.shape[0]
    kkt = np.block([[prog.P, prog.A.T], [prog.A, np.zeros((p, p))]])
    rhs = np.concatenate([-prog.q, prog.b])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown(str(exc)) from exc
    y, nu = sol[:n], sol[n:]
    obj = 0.5 * y @ prog.P @ y + prog.q @ y
    return ConicSolution(OPTIMAL, y, float(obj), nu, np.zeros(0),
                         float(np.linalg.norm(prog.A @ y - prog.b)),
                         float(np.linalg.norm(prog.P @ y + prog.q + prog.A.T @ nu)), 0.0, 0)


def solve(prog: ConicProgram, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    """Solve the program to the requested KKT tolerance."""
    if not 1e-10 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-10, 1e-4]")
    n = prog.n
    P, q, A, b = prog.P, prog.q, prog.A, prog.b
    G, h, l, soc_dims = prog.cone_matrices()
    p, m = A.shape[0], G.shape[0]
    if m == 0:
        return _pure_qp(prog)
    cones = _Cones(l, soc_dims)

    bscale = 1.0 + np.linalg.norm(b)
    hscale = 1.0 + np.linalg.norm(h)
    qscale = 1.0 + np.linalg.norm(q)

    # Initial point: one KKT solve with identity scaling, then shift the
    # slack and multiplier into the cone interior.
    size = n + p + m
    kkt = np.zeros((size, size))
    kkt[:n, :n] = P
    kkt[:n, n:n + p] = A.T
    kkt[n:n + p, :n] = A
    kkt[:n, n + p:] = G.T
    kkt[n + p:, :n] = G
    kkt[n + p:, n + p:] = -np.eye(m)
    try:
        sol0 = np.linalg.solve(kkt, np.concatenate([-q, b, h]))
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown(str(exc)) from exc
    y, nu = sol0[:n].copy(), sol0[n:n + p].copy()
    zhat = sol0[n + p:]
    s = cones.to_interior(-zhat)
    z = cones.to_interior(zhat)

    cone_rows = slice(n + p, size)
    best = None
    stalled = 0
    for it in range(max_iter):
        r_dual = P @ y + q + A.T @ nu + G.T @ z
        r_eq = A @ y - b
        r_cone = G @ y + s - h
        gap = float(s @ z)
        pobj = 0.5 * y @ P @ y + q @ y
        pres = max(np.linalg.norm(r_eq) / bscale, np.linalg.norm(r_cone) / hscale)
        dres = np.linalg.norm(r_dual) / qscale
        relgap = gap / (1.0 + abs(pobj))

        if pres <= tol and dres <= tol and relgap <= tol:
            return ConicSolution(OPTIMAL, y, float(pobj), nu, z,
                                 float(pres), float(dres), float(gap), it)

        # Farkas certificate for primal infeasibility.
        kappa = -(b @ nu + h @ z)
        if kappa > 1e-10:
            nu_c, z_c = nu / kappa, z / kappa
            cert_res = np.linalg.norm(A.T @ nu_c + G.T @ z_c)
            cert_scale = 1.0 + np.linalg.norm(z_c) + np.linalg.norm(nu_c)
            if cert_res <= tol * cert_scale and cones.min_eig(z_c) >= -tol * cert_scale:
                cert = {"nu": nu_c, "z": z_c, "residual": float(cert_res / cert_scale)}
                return ConicSolution(PRIMAL_INFEASIBLE, None, None, nu, z,
                                     float(pres), float(dres), float(gap), it,
                                     certificate=cert)

        # Certificate of dual infeasibility (unbounded primal ray).
        ynorm = np.linalg.norm(y)
        if ynorm > 1e6:
            yr = y / ynorm
            if (q @ yr < -tol and np.linalg.norm(P @ yr) <= tol
                    and np.linalg.norm(A @ yr) <= tol and cones.min_eig(-G @ yr) >= -tol):
                return ConicSolution(DUAL_INFEASIBLE, None, None, nu, z,
                                     float(pres), float(dres), float(gap), it,
                                     certificate={"ray": yr})

        try:
            scal = cones.nt_scaling(s, z)
        except NumericalBreakdown:
            break
        lam = scal.W(z)
        mu = gap / cones.degree

        kkt[cone_rows, cone_rows] = -scal.W2_dense()
        try:
            lu = sla.lu_factor(kkt, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            break

        def newton(d_comb):
            # dz from the scaled complementarity
            # lam o (W dz + W^{-1} ds) = d_comb with G dy + ds = -r_cone.
            rhs = np.concatenate([
                -r_dual, -r_eq, -r_cone - scal.W(cones.solve_prod(lam, d_comb))
            ])
            sol = sla.lu_solve(lu, rhs, check_finite=False)
            dy, dnu, dz = sol[:n], sol[n:n + p], sol[n + p:]
            ds = -r_cone - G @ dy
            return dy, dnu, dz, ds

        def step_bound(ds, dz):
            # step length evaluated in scaled space: W is a cone
            # automorphism, so s + a ds in K iff lam + a W^{-1} ds in K;
            # returns the scaled directions for reuse
            sds, sdz = scal.Winv(ds), scal.W(dz)
            return cones.max_step(lam, sds, sdz), sds, sdz

        lam2 = cones.prod(lam, lam)
        dy_a, dnu_a, dz_a, ds_a = newton(-lam2)
        bound_a, sds_a, sdz_a = step_bound(ds_a, dz_a)
        alpha_a = min(1.0, bound_a)
        mu_aff = ((s + alpha_a * ds_a) @ (z + alpha_a * dz_a)) / cones.degree
        sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 0.0, 1.0))

        d_comb = -lam2 - cones.prod(sds_a, sdz_a) + sigma * mu * cones.identity()
        dy, dnu, dz, ds = newton(d_comb)
        alpha = min(1.0, _STEP * step_bound(ds, dz)[0])
        if alpha < 1e-3:
            # Mehrotra direction blocked; retreat to a plain centering step
            dy, dnu, dz, ds = newton(-lam2 + mu * cones.identity())
            alpha = min(1.0, _STEP * step_bound(ds, dz)[0])
        if alpha < 1e-8:
            stalled += 1
            if stalled >= 3:
                break
        else:
            stalled = 0
        y += alpha * dy
        nu += alpha * dnu
        z += alpha * dz
        s += alpha * ds
        best = (y.copy(), nu.copy(), z.copy(), float(pres), float(dres), float(gap), it)

    if best is None:
        raise NumericalBreakdown("interior-point iteration failed to start")
    y, nu, z, pres, dres, gap, it = best
    pobj = 0.5 * y @ P @ y + q @ y
    return ConicSolution(MAX_ITER, y, float(pobj), nu, z, pres, dres, gap, it + 1)


def feasibility_probe(prog: ConicProgram, tol: float = 1e-8) -> str:
    """Phase-I feasibility decision for the cone and equality system.

    Minimizes a single slack added to every cone offset; the system is
    declared feasible when the optimal slack is <= 1e-6.
    """
    n = prog.n
    A = np.hstack([prog.A, np.zeros((prog.A.shape[0], 1))]) if prog.A.size else None
    b = prog.b if prog.A.size else None
    Gl_rows = [np.hstack([prog.Gl, -np.ones((prog.Gl.shape[0], 1))])] if prog.Gl.size else []
    hl_rows = [prog.hl] if prog.Gl.size else []
    # keep the slack bounded below so the phase-I program has a minimum
    t_low = np.zeros((1, n + 1))
    t_low[0, n] = -1.0
    Gl_rows.append(t_low)
    hl_rows.append(np.array([1.0]))
    socs = [SocBlock(np.r_[blk.c, 1.0], blk.d, np.hstack([blk.F, np.zeros((blk.F.shape[0], 1))]), blk.g)
            for blk in prog.socs]
    q = np.zeros(n + 1)
    q[n] = 1.0
    phase1 = ConicProgram(n=n + 1, q=q, A=A, b=b,
                          Gl=np.vstack(Gl_rows), hl=np.concatenate(hl_rows), socs=socs)
    sol = solve(phase1, tol=tol)
    if sol.status != OPTIMAL:
        raise SolverFailure(f"phase-I probe ended with status {sol.status}")
    return FEASIBLE if sol.y[n] <= _PROBE_SLACK_TOL else INFEASIBLE
