"""Closed-loop simulation of the min-norm cone-constrained controller.

The controller is solved every ``control_period`` seconds from the model; the
true dynamics are integrated with classical RK4 under a zero-order hold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .constraints import WorstCaseModel, exact_model, worstcase_soccs
from .core import AffineDynamics, Array, Barrier, CbfSpec, ClfSpec
from .estimation import (
    AcquisitionPattern,
    Dataset,
    LipschitzConstants,
    Oracle,
    Workspace,
    WorkspaceError,
    acquire_on_infeasibility,
    build_worstcase_model,
)
from .feasibility import BoundB, OutsideRegion, check_worstcase_compat
from .socp import SoccProgram, SolverConfig, Status, solve_min_norm

HALT = "halt_on_infeasible"
ACQUIRE = "acquire_on_infeasible"
BLOWUP = 1e6


@dataclass(frozen=True)
class SimConfig:
    x0: tuple
    t_end: float = 10.0
    control_period: float = 0.01
    substeps: int = 10
    stop_policy: str = HALT
    convergence_radius: float = 0.05

    def __post_init__(self):
        if not self.control_period > 0:
            raise ValueError("control_period must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.stop_policy not in (HALT, ACQUIRE):
            raise ValueError(f"unknown stop policy {self.stop_policy!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")


def rk4_step(rhs: Callable[[Array], Array], x: Array, dt: float) -> Array:
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def hold_and_integrate(dyn: AffineDynamics, x: Array, u: Array, period: float, substeps: int) -> Array:
    """Integrate ``xdot = f(x) + g(x) u`` over one period with ``u`` held fixed."""
    dt = period / substeps
    for _ in range(substeps):
        x = rk4_step(lambda z: dyn(z, u), x, dt)
    return x


@dataclass(frozen=True)
class StepRecord:
    t: float
    x: Array
    u: Array
    h: float
    V: float
    phase1_t: float
    clf_margin: float
    cbf_margin: float
    status: str
    dataset_size: int


@dataclass(frozen=True)
class AcquisitionEvent:
    t: float
    x: Array
    added: int
    dataset_size: int
    resolve_status: str
    resolve_phase1_t: float


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)
    termination: str = ""

    @property
    def states(self) -> Array:
        return np.array([s.x for s in self.steps])

    @property
    def times(self) -> Array:
        return np.array([s.t for s in self.steps])

    def feasible_steps(self) -> list:
        return [s for s in self.steps if s.status == Status.FEASIBLE.value]

    def closest_approach(self, floor: float = 0.0) -> float:
        """Smallest distance to the origin over logged states, clipped below at ``floor``."""
        return max(float(np.min(np.linalg.norm(self.states, axis=1))), floor)

    def to_csv(self, path) -> None:
        n = len(self.steps[0].x)
        m = len(self.steps[0].u)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
                       + ["h", "V", "phase1_t", "clf_margin", "cbf_margin", "status", "dataset_size"])
            for s in self.steps:
                w.writerow([repr(s.t)] + [repr(float(v)) for v in s.x] + [repr(float(v)) for v in s.u]
                           + [repr(s.h), repr(s.V), repr(s.phase1_t), repr(s.clf_margin),
                              repr(s.cbf_margin), s.status, s.dataset_size])

    def events_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = len(self.steps[0].x) if self.steps else 0
            w.writerow(["t"] + [f"x{i}" for i in range(n)]
                       + ["added", "dataset_size", "resolve_status", "resolve_phase1_t"])
            for e in self.events:
                w.writerow([repr(e.t)] + [repr(float(v)) for v in e.x]
                           + [e.added, e.dataset_size, e.resolve_status, repr(e.resolve_phase1_t)])


@dataclass
class Pipeline:
    """What the controller knows: a model, and optionally data plus an oracle to extend it."""

    model: WorstCaseModel
    dataset: Optional[Dataset] = None
    oracle: Optional[Oracle] = None
    pattern: AcquisitionPattern = field(default_factory=AcquisitionPattern)
    workspace: Optional[Workspace] = None
    B: Optional[BoundB] = None


def _margins(pipe: Pipeline, clf: ClfSpec, cbf: CbfSpec, x: Array) -> tuple[float, float]:
    if pipe.B is None or np.linalg.norm(x) == 0.0:
        return math.nan, math.nan
    try:
        mg = check_worstcase_compat(pipe.model, clf, cbf, pipe.B, x)
    except OutsideRegion:
        return math.nan, math.nan
    return mg.clf_margin, mg.cbf_margin


def simulate(cfg: SimConfig, truth: AffineDynamics, pipe: Pipeline, clf: ClfSpec, cbf: CbfSpec,
             barrier: Barrier, solver: SolverConfig = SolverConfig()) -> Trajectory:
    """Run the closed loop until ``t_end``, convergence, or an unrecoverable infeasibility.

    ``barrier`` is the true safe-set function, used only for logging ``h``.
    """
    x = np.asarray(cfg.x0, dtype=float)
    if barrier.h(x) < 0:
        raise ValueError(f"initial state {x} is not safe")
    if cfg.stop_policy == ACQUIRE and (pipe.dataset is None or pipe.oracle is None):
        raise ValueError("acquisition needs a dataset and an oracle")
    m = truth.dims.m
    traj = Trajectory()
    n_steps = int(round(cfg.t_end / cfg.control_period))
    size = lambda: len(pipe.dataset) if pipe.dataset is not None else 0

    def record(k, x, u, res, status):
        cm, bm = _margins(pipe, clf, cbf, x)
        traj.steps.append(StepRecord(k * cfg.control_period, x.copy(), u, float(barrier.h(x)),
                                     float(clf.V(x)), float(res.phase1_value) if res else math.nan,
                                     cm, bm, status, size()))

    prev = None
    for k in range(n_steps + 1):
        if np.linalg.norm(x) <= cfg.convergence_radius:
            record(k, x, np.full(m, np.nan), None, "Converged")
            traj.termination = "converged"
            return traj
        if k == n_steps:
            record(k, x, np.full(m, np.nan), None, "End")
            traj.termination = "t_end"
            return traj
        res = solve_min_norm(SoccProgram(list(worstcase_soccs(pipe.model, clf, cbf, x))), solver, prev)
        if not res.feasible and cfg.stop_policy == ACQUIRE and res.status is Status.INFEASIBLE:
            before = size()
            record(k, x, np.full(m, np.nan), res, res.status.value)
            try:
                acquire_on_infeasibility(pipe.oracle, pipe.dataset, x, pipe.pattern, pipe.workspace)
            except WorkspaceError:
                traj.termination = "outside_workspace"
                return traj
            res = solve_min_norm(SoccProgram(list(worstcase_soccs(pipe.model, clf, cbf, x))), solver)
            traj.events.append(AcquisitionEvent(k * cfg.control_period, x.copy(), size() - before,
                                                size(), res.status.value, res.phase1_value))
            if not res.feasible:
                traj.termination = "infeasible_after_acquisition"
                return traj
            # the re-solve at the same instant is logged at a slightly later stamp
            traj.steps.append(StepRecord(np.nextafter(k * cfg.control_period, np.inf), x.copy(),
                                         res.u_star, float(barrier.h(x)), float(clf.V(x)),
                                         res.phase1_value, *_margins(pipe, clf, cbf, x),
                                         res.status.value, size()))
        elif not res.feasible:
            record(k, x, np.full(m, np.nan), res, res.status.value)
            traj.termination = "infeasible" if res.status is Status.INFEASIBLE else "solver_failure"
            return traj
        else:
            record(k, x, res.u_star, res, res.status.value)
        prev = res
        x = hold_and_integrate(truth, x, res.u_star, cfg.control_period, cfg.substeps)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > BLOWUP:
            traj.termination = "blowup"
            return traj
        if pipe.workspace is not None and not pipe.workspace.contains(x):
            record(k + 1, x, np.full(m, np.nan), None, "OutsideWorkspace")
            traj.termination = "outside_workspace"
            return traj
    return traj


# -- experiment protocols ----------------------------------------------------

DEFAULT_WORKSPACE = Workspace(np.array([-5.0, -1.0]), np.array([5.0, 9.0]))

def exact_pipeline(truth: AffineDynamics, barrier: Barrier) -> Pipeline:
    return Pipeline(exact_model(truth.f, truth.g, barrier.h, barrier.gradh))


def safe_pool(oracle: Oracle, barrier: Barrier, lo: Sequence[float], hi: Sequence[float],
              n_points: int, rng: np.random.Generator) -> Array:
    """``n_points`` uniform samples of the box ``[lo, hi]`` inside the safe set."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = []
    while len(out) < n_points:
        p = lo + (hi - lo) * rng.random(lo.size)
        if barrier.h(p) >= 0:
            out.append(p)
    return np.array(out)


def nested_datasets(oracle: Oracle, pool: Array, anchor: Array, sizes: Sequence[int]) -> dict:
    """Datasets of the ``N`` pool points nearest ``anchor`` (nested by construction)."""
    order = np.argsort(np.linalg.norm(pool - anchor, axis=1), kind="stable")
    out = {}
    for N in sorted(sizes):
        if N > len(pool):
            raise ValueError(f"pool has only {len(pool)} points, asked for {N}")
        ds = Dataset(pool.shape[1], oracle.dynamics.dims.m)
        ds.measure(oracle, pool[order[:N]])
        out[N] = ds
    return out


@dataclass(frozen=True)
class OfflineResult:
    N: int
    trajectory: Trajectory
    closest_approach: float
    first_condition_failure: Optional[Array]
    dataset: Dataset


def experiment_offline_N(truth: AffineDynamics, clf: ClfSpec, cbf: CbfSpec, barrier: Barrier,
                         sizes: Sequence[int] = (25, 100, 400), seed: int = 0,
                         x0: Sequence[float] = (2.0, 6.0), pool_lo=(-1.0, -1.0), pool_hi=(3.0, 7.0),
                         lip: LipschitzConstants = LipschitzConstants(), B: Optional[BoundB] = None,
                         cfg: Optional[SimConfig] = None,
                         solver: SolverConfig = SolverConfig()) -> list:
    """Halt-on-infeasibility runs with nested datasets of increasing size.

    The datasets are the ``N`` points nearest ``x0`` from one seeded pool of
    ``max(sizes)`` safe samples, so larger ones extend toward the origin.
    """
    cfg = cfg or SimConfig(x0=tuple(x0))
    oracle = Oracle(truth)
    rng = np.random.default_rng(seed)
    pool = safe_pool(oracle, barrier, pool_lo, pool_hi, max(sizes), rng)
    out = []
    for N, ds in nested_datasets(oracle, pool, np.asarray(x0, dtype=float), sizes).items():
        pipe = Pipeline(build_worstcase_model(ds, lip, barrier), ds, oracle, B=B)
        traj = simulate(cfg, truth, pipe, clf, cbf, barrier, solver)
        fail = next((s.x for s in traj.steps
                     if not (s.clf_margin > 0 and s.cbf_margin > 0) and not math.isnan(s.clf_margin)),
                    None)
        out.append(OfflineResult(N, traj, traj.closest_approach(cfg.convergence_radius), fail, ds))
    return out


@dataclass(frozen=True)
class OnlineResult:
    x0: tuple
    trajectory: Trajectory
    dataset: Dataset
    initial_size: int


def experiment_online(truth: AffineDynamics, clf: ClfSpec, cbf: CbfSpec, barrier: Barrier,
                      initial_conditions: Sequence[Sequence[float]] = ((2.0, 6.0), (-2.5, 5.0), (3.0, 1.0)),
                      seed: int = 0, n_initial: int = 25, half_width: float = 0.5,
                      lip: LipschitzConstants = LipschitzConstants(),
                      pattern: AcquisitionPattern = AcquisitionPattern(),
                      workspace: Optional[Workspace] = DEFAULT_WORKSPACE, B: Optional[BoundB] = None,
                      t_end: float = 10.0, solver: SolverConfig = SolverConfig()) -> list:
    """Acquire-on-infeasibility runs, each from ``n_initial`` measurements near its start."""
    oracle = Oracle(truth)
    rng = np.random.default_rng(seed)
    out = []
    for x0 in initial_conditions:
        x0 = np.asarray(x0, dtype=float)
        ds = Dataset(x0.size, truth.dims.m)
        while len(ds) < n_initial:
            p = x0 + rng.uniform(-half_width, half_width, x0.size)
            if barrier.h(p) >= 0:
                ds.measure(oracle, [p])
        pipe = Pipeline(build_worstcase_model(ds, lip, barrier), ds, oracle, pattern, workspace, B)
        cfg = SimConfig(x0=tuple(x0), t_end=t_end, stop_policy=ACQUIRE)
        traj = simulate(cfg, truth, pipe, clf, cbf, barrier, solver)
        out.append(OnlineResult(tuple(x0), traj, ds, n_initial))
    return out


def acquisition_density(points: Array, r_inner: float = 0.5) -> tuple[float, float]:
    """Point densities in the disc of radius ``r_inner`` and in the equal-area annulus just outside.

    The annulus spans ``[r_inner, sqrt(2) r_inner]``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2) if len(points) else np.empty((0, 2))
    r = np.linalg.norm(points, axis=1)
    area = math.pi * r_inner ** 2
    inner = np.count_nonzero(r < r_inner) / area
    outer = np.count_nonzero((r >= r_inner) & (r < math.sqrt(2) * r_inner)) / area
    return inner, outer


# -- regularity echo ------------------------------------------------------------

def difference_quotients(solve_u: Callable[[Array], Optional[Array]], path: Array,
                         refine: int = 10) -> Array:
    """``|u(x_{j+1}) - u(x_j)| / |x_{j+1} - x_j|`` along ``path`` resampled ``refine`` times finer."""
    pts = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        for s in range(1, refine + 1):
            pts.append(a + (b - a) * s / refine)
    pts = np.array(pts)
    us = [solve_u(p) for p in pts]
    q = []
    for j in range(len(pts) - 1):
        if us[j] is None or us[j + 1] is None:
            continue
        dx = np.linalg.norm(pts[j + 1] - pts[j])
        if dx > 0:
            q.append(np.linalg.norm(us[j + 1] - us[j]) / dx)
    return np.array(q)


def jump_ratio(q: Array, window: int = 21) -> float:
    """Largest ratio of a difference quotient to the median of its centred window."""
    if len(q) == 0:
        return 0.0
    half = window // 2
    worst = 0.0
    for j in range(len(q)):
        med = float(np.median(q[max(0, j - half): j + half + 1]))
        if med > 0:
            worst = max(worst, q[j] / med)
    return worst
