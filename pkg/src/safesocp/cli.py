"""Command-line front end.

Subcommands: ``solve``, ``feasmap``, ``simulate``, ``experiment``, ``universal``.
Exit codes: 0 success, 2 infeasible under ``--strict``, 3 configuration
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConfigError, RunConfig, SoccCfg, build, load_config
from .constraints import (Socc, WorstCaseModel, exact_model, worstcase_cbf_coeffs,
                          worstcase_clf_coeffs, worstcase_soccs)
from .core import (AffineDynamics, Barrier, CbfSpec, ClassK, ClfSpec, ball_barrier,
                   linear_dynamics, planar_system, quadratic_clf)
from .estimation import (AcquisitionPattern, Dataset, LipschitzConstants, Oracle, Workspace,
                         build_worstcase_model)
from .feasibility import (BoundB, GridSpec, OutsideRegion, check_worstcase_compat,
                          compute_bound_B_analysis, feasibility_map, map_points, worstcase_program)
from .sim import (ACQUIRE, Pipeline, SimConfig, experiment_offline_N, experiment_online, safe_pool,
                  simulate)
from .socp import (EmptyFeasibleGrid, MaxIterationsError, SoccProgram, SolverConfig, Status,
                   brute_force_min_norm, solve_min_norm)
from .svg import Ball, heatmap_figure, trajectory_figure, write_atomic
from .universal import (ImageConditionViolated, NotStrictlyFeasible, SingularQ, universal_control,
                        universal_control_worstcase)

log = logging.getLogger("safesocp")

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


class NumericalFailure(RuntimeError):
    pass


def threads() -> int:
    raw = os.environ.get("SAFESOCP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SAFESOCP_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("SAFESOCP_THREADS must be >= 1")
    return n


@dataclass
class Setup:
    """Everything a subcommand needs, built once from the configuration."""

    cfg: RunConfig
    dyn: AffineDynamics
    clf: ClfSpec
    cbf: CbfSpec
    barrier: Barrier
    solver: SolverConfig
    rng: np.random.Generator
    out: Path

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Setup":
        sc = cfg.system
        try:
            dyn = planar_system() if sc.kind == "planar" else linear_dynamics(sc.A, sc.B)
        except ValueError as e:
            raise ConfigError(f"system: {e}") from None
        k = cfg.certificates.clf.decay_scale
        clf = quadratic_clf(lambda x, k=k: k * float(x @ x))
        cc = cfg.certificates.cbf
        cbf = CbfSpec(alpha=ClassK.linear(cc.alpha_slope), eta_h=cc.eta_h,
                      zeta=ClassK.linear(cc.zeta_slope) if cc.zeta_slope > 0 else None)
        if len(cc.center) != dyn.dims.n:
            raise ConfigError("certificates.cbf.center has the wrong dimension")
        barrier = ball_barrier(cc.center, cc.radius)
        s = cfg.solver
        try:
            solver = SolverConfig(tol_feas=s.tol_feas, tol_kkt=s.tol_kkt, tol_strict=s.tol_strict,
                                  max_iterations=s.max_iterations, mu_factor=s.mu_factor)
        except ValueError as e:
            raise ConfigError(f"solver: {e}") from None
        return cls(cfg, dyn, clf, cbf, barrier, solver, np.random.default_rng(cfg.seed), Path(cfg.out))

    def dataset(self) -> Dataset:
        mc = self.cfg.model
        n, m = self.dyn.dims.n, self.dyn.dims.m
        if mc.dataset_csv:
            try:
                return Dataset.from_csv(mc.dataset_csv, n, m)
            except (OSError, ValueError) as e:
                raise ConfigError(f"model.dataset_csv: {e}") from None
        pts = safe_pool(Oracle(self.dyn), self.barrier, mc.box_lo, mc.box_hi, mc.n_points, self.rng)
        ds = Dataset(n, m)
        ds.measure(Oracle(self.dyn), pts)
        return ds

    def model(self) -> tuple[WorstCaseModel, Optional[Dataset]]:
        mc = self.cfg.model
        if mc.kind == "exact":
            return exact_model(self.dyn.f, self.dyn.g, self.barrier.h, self.barrier.gradh), None
        ds = self.dataset()
        return build_worstcase_model(ds, LipschitzConstants(mc.K_f, mc.K_g), self.barrier), ds

    def bound(self) -> BoundB:
        bc = self.cfg.bound_B
        if bc.mode == "constant":
            return BoundB.constant(bc.value)
        g = bc.grid
        return compute_bound_B_analysis(self.dyn, self.clf, self.cbf, self.barrier,
                                        GridSpec(tuple(g.lo), tuple(g.hi), tuple(g.shape)),
                                        factor=bc.factor, on_infeasible="inf", cfg=self.solver)

    def outdir(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out


def _vec(v, n: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (n,):
        raise ConfigError(f"{name} must have length {n}")
    return a


def _socc(sc) -> Socc:
    try:
        return Socc(np.atleast_2d(np.asarray(sc.Q, dtype=float)), np.asarray(sc.r, dtype=float),
                    np.asarray(sc.b, dtype=float), float(sc.c))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"constraint: {e}") from None


def save(writer, path) -> None:
    """Run ``writer(tmp_path)`` then rename onto ``path``, so readers never see a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.name)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    return np.array2string(np.asarray(v, dtype=float), precision=10, separator=", ")


# -- subcommands ----------------------------------------------------------------

def cmd_solve(st: Setup, strict: bool, oracle: bool) -> int:
    sc = st.cfg.solve
    margins = None
    if sc.program:
        prog = SoccProgram([_socc(build(SoccCfg, c, f"solve.program[{i}]"))
                            for i, c in enumerate(sc.program)])
    else:
        x = _vec(sc.state, st.dyn.dims.n, "solve.state")
        model, _ = st.model()
        prog = SoccProgram(list(worstcase_soccs(model, st.clf, st.cbf, x)))
        if np.linalg.norm(x) > 0:
            try:
                margins = check_worstcase_compat(model, st.clf, st.cbf, st.bound(), x)
            except OutsideRegion as e:
                log.warning("margins skipped: %s", e)
    res = solve_min_norm(prog, st.solver)
    print(f"status: {res.status.value}")
    print(f"phase1_t: {res.phase1_value!r}")
    if margins is not None:
        print(f"clf_margin: {margins.clf_margin!r}")
        print(f"cbf_margin: {margins.cbf_margin!r}")
    if res.status is Status.MAX_ITERATIONS:
        return EXIT_NUMERIC
    if not res.feasible:
        return EXIT_INFEASIBLE if strict else EXIT_OK
    print(f"u_star: {_fmt(res.u_star)}")
    print(f"residuals: {_fmt(prog.residuals(res.u_star))}")
    print(f"multipliers: {_fmt(res.multipliers)}")
    print(f"kkt_residual: {res.kkt_residual!r}")
    if oracle:
        if prog.m > 3:
            raise ConfigError("--oracle supports at most 3 inputs")
        try:
            # the oracle's search box must contain the minimiser
            w = max(5.0, 2.0 * float(np.linalg.norm(res.u_star)) + 1.0)
            u_o = brute_force_min_norm(prog, box_halfwidth=w)
        except EmptyFeasibleGrid as e:
            raise NumericalFailure(f"oracle found no feasible point: {e}") from None
        print(f"oracle_norm: {float(np.linalg.norm(u_o))!r}")
        print(f"oracle_gap: {abs(float(np.linalg.norm(u_o)) - float(np.linalg.norm(res.u_star)))!r}")
    return EXIT_OK


def cmd_universal(st: Setup) -> int:
    uc = st.cfg.universal
    try:
        if uc.socc is not None:
            u, inter = universal_control(_socc(uc.socc))
            print(f"tilde_b: {_fmt(inter.tilde_b)}")
            print(f"tilde_c: {inter.tilde_c!r}")
            print(f"bar_b: {inter.bar_b!r}")
            print(f"v_s: {_fmt(inter.v_s)}")
            print(f"im_residual: {inter.im_residual!r}")
            s = _socc(uc.socc)
        else:
            x = _vec(uc.state, st.dyn.dims.n, "universal.state")
            model, _ = st.model()
            co = (worstcase_clf_coeffs(model, st.clf, x) if uc.which == "clf"
                  else worstcase_cbf_coeffs(model, st.cbf, x))
            u = universal_control_worstcase(co.a, co.b, co.c)
            s = co.socc()
            print(f"a: {co.a!r}")
            print(f"b: {_fmt(co.b)}")
            print(f"c: {co.c!r}")
    except (SingularQ, ImageConditionViolated, NotStrictlyFeasible) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"u_s: {_fmt(u)}")
    print(f"residual: {s.residual(u)!r}")
    return EXIT_OK


def _grid(g) -> GridSpec:
    return GridSpec(tuple(g.lo), tuple(g.hi), tuple(g.shape))


def cmd_feasmap(st: Setup) -> int:
    fc = st.cfg.feasmap
    grid = _grid(fc.grid)
    model, ds = st.model()
    B = st.bound()
    pts = map_points(grid, st.barrier, fc.origin_radius)
    fm = feasibility_map(lambda x: check_worstcase_compat(model, st.clf, st.cbf, B, x),
                         worstcase_program(model, st.clf, st.cbf), pts, st.solver, workers=threads())
    out = st.outdir()
    save(fm.to_csv, out / "feasmap.csv")
    bad = fm.sound(st.solver.tol_strict)
    print(f"points: {len(fm.rows)}")
    print(f"holding: {sum(r.margins.both for r in fm.rows)}")
    print(f"soundness_violations: {len(bad)}")
    print(f"one_sided: {len(fm.one_sided(st.solver.tol_strict))}")
    if st.dyn.dims.n == 2:
        P = np.array([r.x for r in fm.rows])
        vals = np.array([min(r.margins.clf_margin, r.margins.cbf_margin) for r in fm.rows])
        cell = (np.asarray(grid.hi) - np.asarray(grid.lo)) / (np.asarray(grid.shape) - 1)
        fails = np.array([r.x for r in fm.rows if not r.margins.both]).reshape(-1, 2)
        ball = Ball(tuple(st.cfg.certificates.cbf.center), st.cfg.certificates.cbf.radius)
        heatmap_figure(grid.lo, grid.hi, P, vals, cell, ball, fails[::4],
                       "min compatibility margin").save(out / "feasmap_margin.svg")
        heatmap_figure(grid.lo, grid.hi, P, -np.array([r.phase1_t for r in fm.rows]), cell, ball,
                       title="phase-I value (blue: compatible)").save(out / "feasmap_phase1.svg")
    return EXIT_NUMERIC if bad else EXIT_OK


def _sim_cfg(sc) -> SimConfig:
    try:
        return SimConfig(x0=tuple(sc.x0), t_end=sc.t_end, control_period=sc.control_period,
                         substeps=sc.substeps, stop_policy=sc.stop_policy,
                         convergence_radius=sc.convergence_radius)
    except ValueError as e:
        raise ConfigError(f"simulate: {e}") from None


def _ball(st: Setup) -> Ball:
    return Ball(tuple(st.cfg.certificates.cbf.center), st.cfg.certificates.cbf.radius)


def _view(paths, extra=()) -> tuple:
    pts = np.vstack([np.asarray(p).reshape(-1, 2) for p in list(paths) + list(extra) if len(p)])
    lo = np.minimum(pts.min(axis=0), [-5.0, -1.0]) - 0.5
    hi = np.maximum(pts.max(axis=0), [5.0, 9.0]) + 0.5
    return tuple(lo), tuple(hi)


def cmd_simulate(st: Setup, strict: bool) -> int:
    scfg = _sim_cfg(st.cfg.simulate)
    _vec(scfg.x0, st.dyn.dims.n, "simulate.x0")
    model, ds = st.model()
    ec = st.cfg.experiment
    pipe = Pipeline(model, ds, Oracle(st.dyn) if ds is not None else None,
                    AcquisitionPattern(ec.pattern_radius),
                    Workspace(np.asarray(ec.workspace_lo, float), np.asarray(ec.workspace_hi, float)))
    if scfg.stop_policy == ACQUIRE and ds is None:
        raise ConfigError("acquire_on_infeasible needs model.kind: dataset")
    try:
        pipe.B = st.bound()
    except ValueError as e:
        raise ConfigError(f"bound_B: {e}") from None
    if scfg.x0 and st.barrier.h(np.asarray(scfg.x0)) < 0:
        raise ConfigError("simulate.x0 is not safe")
    traj = simulate(scfg, st.dyn, pipe, st.clf, st.cbf, st.barrier, st.solver)
    out = st.outdir()
    save(traj.to_csv, out / "trajectory.csv")
    save(traj.events_to_csv, out / "acquisitions.csv")
    if st.dyn.dims.n == 2:
        path = traj.states
        stars = np.array([e.x for e in traj.events]).reshape(-1, 2)
        trajectory_figure(*_view([path]), [path], [f"x0={list(scfg.x0)}"], _ball(st),
                          data=ds.points if ds is not None else None, stars=stars,
                          title=f"termination: {traj.termination}").save(out / "trajectory.svg")
    print(f"termination: {traj.termination}")
    print(f"steps: {len(traj.steps)}")
    print(f"final_state: {_fmt(traj.steps[-1].x)}")
    print(f"min_h: {min(s.h for s in traj.steps)!r}")
    if traj.termination in ("solver_failure", "blowup"):
        return EXIT_NUMERIC
    if traj.termination.startswith("infeasible") and strict:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_experiment(st: Setup) -> int:
    ec = st.cfg.experiment
    out = st.outdir()
    lip = LipschitzConstants(st.cfg.model.K_f, st.cfg.model.K_g)
    B = st.bound()
    if ec.kind == "offline_n":
        res = experiment_offline_N(st.dyn, st.clf, st.cbf, st.barrier, [int(n) for n in ec.sizes],
                                   seed=st.cfg.seed, x0=ec.x0, pool_lo=ec.pool_lo, pool_hi=ec.pool_hi,
                                   lip=lip, B=B, solver=st.solver)
        paths, labels, tri = [], [], []
        summary = []
        for r in res:
            save(r.trajectory.to_csv, out / f"offline_N{r.N}.csv")
            save(r.dataset.to_csv, out / f"offline_N{r.N}_data.csv")
            paths.append(r.trajectory.states)
            labels.append(f"N={r.N}: closest {r.closest_approach:.3f}")
            if r.first_condition_failure is not None:
                tri.append(r.first_condition_failure)
            summary.append(f"{r.N},{r.closest_approach!r},{r.trajectory.termination}")
            print(f"N={r.N} closest_approach={r.closest_approach:.6g} "
                  f"termination={r.trajectory.termination}")
        write_atomic(out / "offline_summary.csv", "N,closest_approach,termination\n"
                     + "\n".join(summary) + "\n")
        trajectory_figure(*_view(paths), paths, labels, _ball(st), data=res[-1].dataset.points,
                          triangles=np.array(tri).reshape(-1, 2),
                          title="offline datasets of increasing size").save(out / "offline.svg")
        return EXIT_OK
    ws = Workspace(np.asarray(ec.workspace_lo, float), np.asarray(ec.workspace_hi, float))
    res = experiment_online(st.dyn, st.clf, st.cbf, st.barrier, ec.initial_conditions,
                            seed=st.cfg.seed, n_initial=ec.n_initial, half_width=ec.half_width,
                            lip=lip, pattern=AcquisitionPattern(ec.pattern_radius), workspace=ws,
                            B=B, t_end=ec.t_end, solver=st.solver)
    paths, labels, stars, data = [], [], [], []
    for k, r in enumerate(res):
        save(r.trajectory.to_csv, out / f"online_{k}.csv")
        save(r.trajectory.events_to_csv, out / f"online_{k}_acquisitions.csv")
        save(r.dataset.to_csv, out / f"online_{k}_data.csv")
        paths.append(r.trajectory.states)
        labels.append(f"x0={[float(v) for v in r.x0]}: {r.trajectory.termination}")
        stars.extend(e.x for e in r.trajectory.events)
        print(f"run {k} x0={[float(v) for v in r.x0]} termination={r.trajectory.termination} "
              f"acquisitions={len(r.trajectory.events)} dataset={len(r.dataset)}")
    trajectory_figure(*_view(paths), paths, labels, _ball(st), stars=np.array(stars).reshape(-1, 2),
                      title="online acquisition").save(out / "online.svg")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------

def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safesocp", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="solve the min-norm program at one state")
    s.add_argument("--strict", action="store_true", help="exit 2 when infeasible")
    s.add_argument("--oracle", action="store_true", help="cross-check with the grid-search oracle")
    sub.add_parser("feasmap", parents=[common], help="compatibility margins and phase I over a grid")
    s = sub.add_parser("simulate", parents=[common], help="one closed-loop run")
    s.add_argument("--strict", action="store_true", help="exit 2 when the run stops infeasible")
    sub.add_parser("experiment", parents=[common], help="offline-N or online acquisition study")
    sub.add_parser("universal", parents=[common], help="closed-form control for one constraint")
    return p


def main(argv: Optional[list] = None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads()  # fail fast on a malformed environment
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out=args.out)
        st = Setup.from_config(cfg)
        if args.command == "solve":
            return cmd_solve(st, args.strict, args.oracle)
        if args.command == "universal":
            return cmd_universal(st)
        if args.command == "feasmap":
            return cmd_feasmap(st)
        if args.command == "simulate":
            return cmd_simulate(st, args.strict)
        return cmd_experiment(st)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, MaxIterationsError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
