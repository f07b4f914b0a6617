"""Command-line entry points and bit-stable report emission.

Configuration is a single JSON document with the following blocks (all
matrices row-major nested lists, floats parsed as 64-bit):

    system:      A, B, Gamma_w
    constraints: H_x, h_x, H_u, h_u
    design:      Q, R, lambda, epsilon, dist ("gaussian"|"generic"),
                 W_x (optional override), mu, horizon
    experiment:  controller ("ms"|"is"), strategy ("A"|"B"|"C"), x0,
                 steps, num_runs, seed
    output:      directory, formats (["csv"] and optionally "svg")

Floats are serialized with full round-trip precision (shortest repr),
so config -> load -> re-emit -> load is exact.  Exit codes: 0 success,
2 validation failure, 3 solver failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import simulate as sim
from .controllers import STRATEGIES, step_is, step_ms
from .design import DesignParams, Polytope, ValidationReport, build_design
from .errors import InfeasibleAtStart, MssmpcError, SolverFailure, ValidationFailed
from .linalg import sqrtm_psd

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


@dataclass
class RunConfig:
    A: np.ndarray
    B: np.ndarray
    Gamma_w: np.ndarray
    H_x: np.ndarray
    h_x: np.ndarray
    H_u: np.ndarray
    h_u: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    lam: float
    eps: float
    dist: str
    W_x: np.ndarray | None
    mu: float
    horizon: int
    controller: str
    strategy: str
    x0: np.ndarray
    steps: int
    num_runs: int
    seed: int
    directory: str
    formats: list[str]

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        doc = json.loads(Path(path).read_text())
        sysb = doc["system"]
        con = doc["constraints"]
        des = doc["design"]
        exp = doc.get("experiment", {})
        out = doc.get("output", {})
        arr = lambda x: np.asarray(x, dtype=float)
        cfg = cls(
            A=arr(sysb["A"]), B=arr(sysb["B"]), Gamma_w=arr(sysb["Gamma_w"]),
            H_x=arr(con["H_x"]), h_x=arr(con["h_x"]),
            H_u=arr(con["H_u"]), h_u=arr(con["h_u"]),
            Q=arr(des["Q"]), R=arr(des["R"]),
            lam=float(des["lambda"]), eps=float(des["epsilon"]),
            dist=str(des.get("dist", "gaussian")),
            W_x=None if des.get("W_x") is None else arr(des["W_x"]),
            mu=float(des.get("mu", 1e4)), horizon=int(des.get("horizon", 10)),
            controller=str(exp.get("controller", "ms")),
            strategy=str(exp.get("strategy", "A")),
            x0=arr(exp.get("x0", np.zeros(arr(sysb["A"]).shape[0]))),
            steps=int(exp.get("steps", 10)),
            num_runs=int(exp.get("num_runs", 1000)),
            seed=int(exp.get("seed", 0)),
            directory=str(out.get("directory", "out")),
            formats=list(out.get("formats", ["csv"])),
        )
        cfg.check_shapes()
        return cfg

    def check_shapes(self):
        n = self.A.shape[0]
        m = self.B.shape[1] if self.B.ndim == 2 else 1
        if self.A.shape != (n, n):
            raise ValidationFailed("A must be square")
        if self.B.shape[0] != n:
            raise ValidationFailed("B row count must match the state dimension")
        for name, M, shape in (
            ("Gamma_w", self.Gamma_w, (n, n)), ("Q", self.Q, (n, n)),
            ("R", self.R, (m, m)),
        ):
            if M.shape != shape:
                raise ValidationFailed(f"{name} must have shape {shape}")
        if self.H_x.shape[1] != n or self.H_x.shape[0] != self.h_x.shape[0]:
            raise ValidationFailed("state constraint dimensions inconsistent")
        if self.H_u.shape[1] != m or self.H_u.shape[0] != self.h_u.shape[0]:
            raise ValidationFailed("input constraint dimensions inconsistent")
        if self.W_x is not None and self.W_x.shape != (n, n):
            raise ValidationFailed("W_x override must be n x n")
        if self.x0.shape != (n,):
            raise ValidationFailed("x0 must have the state dimension")
        if self.controller not in ("ms", "is"):
            raise ValidationFailed("controller must be 'ms' or 'is'")
        if self.strategy not in STRATEGIES:
            raise ValidationFailed("strategy must be A, B, or C")

    def dump(self) -> str:
        doc = {
            "system": {"A": self.A.tolist(), "B": self.B.tolist(),
                       "Gamma_w": self.Gamma_w.tolist()},
            "constraints": {"H_x": self.H_x.tolist(), "h_x": self.h_x.tolist(),
                            "H_u": self.H_u.tolist(), "h_u": self.h_u.tolist()},
            "design": {"Q": self.Q.tolist(), "R": self.R.tolist(),
                       "lambda": self.lam, "epsilon": self.eps, "dist": self.dist,
                       "W_x": None if self.W_x is None else self.W_x.tolist(),
                       "mu": self.mu, "horizon": self.horizon},
            "experiment": {"controller": self.controller, "strategy": self.strategy,
                           "x0": self.x0.tolist(), "steps": self.steps,
                           "num_runs": self.num_runs, "seed": self.seed},
            "output": {"directory": self.directory, "formats": self.formats},
        }
        return json.dumps(doc, indent=1)

    def build(self) -> tuple[DesignParams, ValidationReport]:
        X = Polytope(self.H_x, self.h_x)
        U = Polytope(self.H_u, self.h_u)
        return build_design(self.A, self.B, self.Gamma_w, self.Q, self.R, X, U,
                            lam=self.lam, eps=self.eps, dist=self.dist,
                            W_x=self.W_x, mu=self.mu, horizon=self.horizon)


def design_dump(design: DesignParams, report: ValidationReport) -> str:
    doc = {
        "K": design.K.tolist(), "P": design.P.tolist(),
        "W_x": design.W_x.tolist(), "lambda": design.lam,
        "r_x": design.r_x, "W_u": design.W_u.tolist(), "r_u": design.r_u,
        "r_N": design.r_N, "rho": design.rho, "epsilon": design.eps,
        "nu": design.nu, "mu": design.mu, "horizon": design.N,
        "dist": design.dist,
        "checks": [
            {"name": c.name, "residual": c.residual,
             "threshold": c.threshold, "passed": c.passed}
            for c in report.checks
        ],
    }
    return json.dumps(doc, indent=1)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _ellipse_path(W: np.ndarray, r: float, points: int = 128) -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * np.pi, points)
    circle = np.vstack([np.cos(theta), np.sin(theta)])
    return (r * sqrtm_psd(W) @ circle).T


def write_trajectory_svg(path: Path, design: DesignParams, rec: sim.TrajectoryRecord) -> None:
    """State path plus the tube ellipse boundaries of the first solved step."""
    rbar_x = rec.steps[0].rbar_x if rec.steps else design.r_x
    shapes = []
    for ell in range(design.N + 1):
        r = rbar_x - design.rho * (1.0 - design.lam**ell)
        if r > 0:
            shapes.append(_ellipse_path(design.W_x, r))
    pts = [rec.x[:, :2]] + shapes
    allp = np.vstack(pts)
    lo, hi = allp.min(axis=0) - 2.0, allp.max(axis=0) + 2.0
    span = hi - lo

    def poly(points, color, width):
        coords = " ".join(f"{p[0]:.3f},{-p[1]:.3f}" for p in points)
        return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
                f'points="{coords}"/>')

    body = [poly(s, "#888888", 0.15) for s in shapes]
    body.append(poly(rec.x[:, :2], "#0044cc", 0.4))
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" '
           f'viewBox="{lo[0]:.3f} {-hi[1]:.3f} {span[0]:.3f} {span[1]:.3f}">'
           + "".join(body) + "</svg>")
    path.write_text(svg)


def cmd_design(cfg: RunConfig, out: Path) -> int:
    design, report = cfg.build()
    out.mkdir(parents=True, exist_ok=True)
    (out / "design_report.txt").write_text(report.as_text() + "\n")
    (out / "design.json").write_text(design_dump(design, report) + "\n")
    print(report.as_text())
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    design, _ = cfg.build()
    rec = sim.rollout(cfg.controller, cfg.x0, cfg.steps, cfg.seed, design, cfg.strategy)
    out.mkdir(parents=True, exist_ok=True)
    n, m = design.n, design.m
    header = (["k"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
              + [f"w{i}" for i in range(n)]
              + ["gamma_x", "gamma_u", "delta_r", "basic_feasible",
                 "in_Ex", "in_Eu", "in_X", "in_U"])
    rows = []
    for k in range(len(rec.steps)):
        st = rec.steps[k]
        wk = rec.w[k] if k < rec.w.shape[0] else np.zeros(n)
        rows.append([k, *rec.x[k], *rec.u[k], *wk,
                     st.gamma_x, st.gamma_u, st.delta_r, st.basic_feasible,
                     rec.in_ell_x[k], rec.in_ell_u[k],
                     rec.in_poly_x[k], rec.in_poly_u[k]])
    write_csv(out / "trajectory.csv", header, rows)
    if "svg" in cfg.formats and rec.valid:
        write_trajectory_svg(out / "trajectory.svg", design, rec)
    if not rec.valid:
        print("rollout invalid: comparator infeasible at the initial state")
        return EXIT_SOLVER
    print(f"wrote {len(rows)} steps, cost {rec.cost!r}")
    return EXIT_OK


def cmd_montecarlo(cfg: RunConfig, out: Path) -> int:
    design, _ = cfg.build()
    summary = sim.monte_carlo(cfg.controller, cfg.x0, cfg.steps, cfg.num_runs,
                              cfg.seed, design, cfg.strategy)
    if cfg.controller == "ms":
        first = step_ms(cfg.x0, design, cfg.strategy)
    else:
        try:
            first, _ = step_is(cfg.x0, None, design)
        except InfeasibleAtStart:
            first = None
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(cfg.steps):
        p_x = first.posterior.p_x[i] if first and i < design.N else 0.0
        p_u = first.posterior.p_u[i] if first and i < design.N else 0.0
        rows.append([i + 1, p_x, p_u, summary.f_x[i], summary.f_u[i],
                     summary.f_poly_x[i], summary.f_poly_u[i]])
    write_csv(out / "summary.csv",
              ["ell", "p_x", "p_u", "f_x", "f_u", "f_poly_x", "f_poly_u"], rows)
    write_csv(out / "costs.csv", ["controller", "cost"],
              [[f"{cfg.controller}-{cfg.strategy}", c] for c in summary.costs])
    print(f"mean cost over {summary.n_valid} runs: {summary.mean_cost!r}")
    return EXIT_OK


def cmd_table1(cfg: RunConfig, out: Path) -> int:
    """Posterior bounds and satisfaction frequencies for all strategies.

    The frequency columns are realized-trajectory statistics at step
    l = 1..T from the configured initial state; the bound columns come
    from the plan solved at k = 0.
    """
    design, _ = cfg.build()
    out.mkdir(parents=True, exist_ok=True)
    cols = {}
    for strat in STRATEGIES:
        first = step_ms(cfg.x0, design, strat)
        summ = sim.monte_carlo("ms", cfg.x0, cfg.steps, cfg.num_runs, cfg.seed,
                               design, strat)
        cols[strat] = (first.posterior, summ)
    header = ["ell"]
    for strat in STRATEGIES:
        header += [f"p_x_{strat}", f"p_u_{strat}"]
    for strat in STRATEGIES:
        header += [f"f_x_{strat}", f"f_u_{strat}"]
    rows = []
    for i in range(cfg.steps):
        row = [i + 1]
        for strat in STRATEGIES:
            post = cols[strat][0]
            row += [post.p_x[i] if i < design.N else 0.0,
                    post.p_u[i] if i < design.N else 0.0]
        for strat in STRATEGIES:
            summ = cols[strat][1]
            row += [summ.f_x[i], summ.f_u[i]]
        rows.append(row)
    write_csv(out / "table1.csv", header, rows)
    cost_rows = []
    for strat in STRATEGIES:
        for c in cols[strat][1].costs:
            cost_rows.append([f"ms-{strat}", c])
    write_csv(out / "table1_costs.csv", ["controller", "cost"], cost_rows)
    for strat in STRATEGIES:
        print(f"strategy {strat}: mean cost {cols[strat][1].mean_cost!r}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    design, _ = cfg.build()
    res = sim.compare_ms_is(cfg.x0, cfg.steps, cfg.num_runs, cfg.seed, design,
                            cfg.strategy)
    out.mkdir(parents=True, exist_ok=True)
    if not res.comparable:
        (out / "compare.csv").write_text("comparable,ratio\n0,nan\n")
        print("not comparable: comparator infeasible at x0")
        return EXIT_OK
    rows = [[res.ms.costs[i], res.is_.costs[i]] for i in range(res.ms.costs.size)]
    write_csv(out / "compare.csv", ["cost_ms", "cost_is"], rows)
    (out / "compare_summary.txt").write_text(
        f"mean_ms {res.ms.mean_cost!r}\nmean_is {res.is_.mean_cost!r}\n"
        f"ratio {res.cost_ratio!r}\n")
    print(f"mean cost ratio ms/is: {res.cost_ratio!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mssmpc",
        description="stochastic MPC with measured-state constraint relaxation")
    parser.add_argument("command",
                        choices=["design", "simulate", "montecarlo", "compare", "table1"])
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--strategy", choices=list(STRATEGIES), default=None)
    parser.add_argument("--controller", choices=["ms", "is"], default=None)
    args = parser.parse_args(argv)

    try:
        cfg = RunConfig.load(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config read error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationFailed, KeyError, ValueError) as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        cfg.seed = args.seed
    if args.strategy is not None:
        cfg.strategy = args.strategy
    if args.controller is not None:
        cfg.controller = args.controller
    out = Path(args.out) if args.out else Path(cfg.directory)

    handlers = {"design": cmd_design, "simulate": cmd_simulate,
                "montecarlo": cmd_montecarlo, "compare": cmd_compare,
                "table1": cmd_table1}
    try:
        return handlers[args.command](cfg, out)
    except ValidationFailed as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except MssmpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
