"""Sufficient conditions for joint feasibility of the CLF and CBF cone constraints.

Both checks assume some control ``u`` with ``|u| <= B(x)`` satisfies the slack
versions of the true CLF and CBF inequalities

    L_fV + L_gV u + W <= -S,        L_fh + L_gh u + alpha(h) >= eta_h + zeta(h),

and bound how much the model error can eat into those slacks. The margins
returned are right-hand side minus left-hand side, so a condition holds iff
its margin is strictly positive.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .constraints import (
    GpTerms,
    ModelPoint,
    WorstCaseModel,
    embed_worstcase,
    gp_cbf_socc,
    gp_clf_socc,
    worstcase_soccs,
)
from .core import AffineDynamics, Array, Barrier, CbfSpec, ClfSpec, ClassK
from .socp import SoccProgram, SolverConfig, phase1, solve_min_norm

ORIGIN_EXCLUSION = 1e-12


class OriginError(ValueError):
    """The sufficient conditions are only stated away from the origin."""


class SlackInfeasible(RuntimeError):
    def __init__(self, x: Array, t: float):
        super().__init__(f"slack inequalities are not strictly compatible at x={list(x)} (t*={t:.3g})")
        self.x = np.asarray(x)
        self.t = t


class OutsideRegion(ValueError):
    pass


@dataclass(frozen=True)
class CompatMargins:
    clf_margin: float
    cbf_margin: float
    confidence_label: float = 1.0

    @property
    def holds(self) -> tuple[bool, bool]:
        return (bool(self.clf_margin > 0), bool(self.cbf_margin > 0))

    @property
    def both(self) -> bool:
        return all(self.holds)


# -- bound on a safe stabilising control --------------------------------------

@dataclass(frozen=True)
class BoundB:
    """Upper bound ``B(x)`` on the norm of a control meeting both slack inequalities.

    ``constant`` mode returns ``value`` everywhere. ``analysis`` mode stores
    min-norm slack controls on a grid and returns ``factor`` times the largest
    value at the corners of the smallest grid cell (or face, or node)
    containing ``x``.
    """

    mode: str
    value: float = 0.0
    factor: float = 1.0
    axes: tuple = ()
    grid_values: Optional[Array] = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode == "constant":
            if not self.value >= 0:
                raise ValueError("B must be nonnegative")
        elif self.mode == "analysis":
            if self.factor < 1:
                raise ValueError("analysis factor must be >= 1")
            if self.grid_values is None or len(self.axes) != self.grid_values.ndim:
                raise ValueError("analysis mode needs grid axes and values")
        else:
            raise ValueError(f"unknown B mode {self.mode!r}")

    @classmethod
    def constant(cls, value: float) -> "BoundB":
        return cls("constant", value=float(value))

    def __call__(self, x: Array) -> float:
        return self.evaluate(x)

    def evaluate(self, x: Array) -> float:
        if self.mode == "constant":
            return self.value
        x = np.asarray(x, dtype=float)
        ranges = []
        for xi, ax in zip(x, self.axes):
            if xi < ax[0] - 1e-12 or xi > ax[-1] + 1e-12:
                raise OutsideRegion(f"{list(x)} lies outside the B grid")
            near = int(np.argmin(np.abs(ax - xi)))
            if abs(ax[near] - xi) <= 1e-12:
                # on a grid line: the face through it suffices
                ranges.append(range(near, near + 1))
                continue
            j = int(np.clip(np.searchsorted(ax, xi, side="right") - 1, 0, len(ax) - 2))
            ranges.append(range(j, j + 2))
        corners = [self.grid_values[idx] for idx in itertools.product(*ranges)]
        return self.factor * float(np.max(corners))

    def with_factor(self, factor: float) -> "BoundB":
        return BoundB(self.mode, self.value, factor, self.axes, self.grid_values)


@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    shape: tuple

    def axes(self) -> list[Array]:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.shape)]

    def points(self) -> Array:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


def slack_program(dyn: AffineDynamics, clf: ClfSpec, cbf: CbfSpec, barrier: Barrier,
                  x: Array) -> Optional[SoccProgram]:
    """The slack inequalities at ``x`` as affine SOCCs with the true dynamics.

    Inside the unsafe set only the CLF inequality is kept. Constraints that
    every ``u`` satisfies (``b = 0``, ``c >= 0``) are dropped; ``None`` means
    nothing is left.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(dyn.f(x), dtype=float)
    g = np.asarray(dyn.g(x), dtype=float)
    gV = np.asarray(clf.gradV(x), dtype=float)
    pieces = [(-(gV @ g), -(gV @ f) - clf.W(x) - clf.S(x))]
    h = barrier.h(x)
    if h >= 0:
        gh = np.asarray(barrier.gradh(x), dtype=float)
        pieces.append((gh @ g, gh @ f + cbf.alpha(h) - cbf.eta_h - cbf.zeta_of(h)))
    cons = [embed_worstcase(0.0, b, c) for b, c in pieces if np.any(b != 0) or c < 0]
    return SoccProgram(cons) if cons else None


def compute_bound_B_analysis(dyn: AffineDynamics, clf: ClfSpec, cbf: CbfSpec, barrier: Barrier,
                             grid: GridSpec, factor: float = 1.5, on_infeasible: str = "raise",
                             cfg: SolverConfig = SolverConfig()) -> BoundB:
    """Analysis-mode ``B`` from min-norm slack controls on ``grid`` (needs the true dynamics).

    ``on_infeasible="raise"`` raises :class:`SlackInfeasible` with the
    offending location; ``"inf"`` stores ``inf`` there instead.
    """
    if on_infeasible not in ("raise", "inf"):
        raise ValueError("on_infeasible must be 'raise' or 'inf'")
    pts = grid.points()
    vals = np.empty(len(pts))
    for k, x in enumerate(pts):
        prog = slack_program(dyn, clf, cbf, barrier, x)
        if prog is None:
            vals[k] = 0.0
            continue
        res = solve_min_norm(prog, cfg)
        if res.feasible:
            vals[k] = float(np.linalg.norm(res.u_star))
        elif on_infeasible == "raise":
            raise SlackInfeasible(x, res.phase1_value)
        else:
            vals[k] = np.inf
    return BoundB("analysis", factor=factor, axes=tuple(grid.axes()),
                  grid_values=vals.reshape(grid.shape))


# -- the two checks ----------------------------------------------------------------

def _reject_origin(x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) <= ORIGIN_EXCLUSION:
        raise OriginError("the conditions are not defined at the origin")
    return x


def check_worstcase_compat(model: WorstCaseModel | ModelPoint, clf: ClfSpec, cbf: CbfSpec,
                           B: BoundB | Callable[[Array], float], x: Array,
                           h_true_lb: Optional[Callable[[Array], float]] = None,
                           K_alpha: Optional[float] = None) -> CompatMargins:
    """Margins of the worst-case sufficient conditions at ``x``.

    ``h_true_lb`` defaults to ``hhat - e_h``; ``K_alpha`` to the declared
    Lipschitz constant of ``cbf.alpha``.
    """
    x = _reject_origin(x)
    p = model if isinstance(model, ModelPoint) else model.at(x)
    Bx = float(B(x))
    if not math.isfinite(Bx):
        # no bounded control meets the slack inequalities here: nothing to certify
        return CompatMargins(-math.inf, -math.inf, 1.0)
    ngV = float(np.linalg.norm(clf.gradV(x)))
    ngh = float(np.linalg.norm(p.gradh_hat))
    push = p.e_f + p.e_g * Bx
    clf_margin = 0.5 * clf.S(x) - ngV * push
    h_lb = p.hhat - p.e_h if h_true_lb is None else float(h_true_lb(x))
    K = cbf.alpha.K if K_alpha is None else K_alpha
    loss = ((p.e_gradh + ngh) * push + K * p.e_h
            + p.e_gradh * (np.linalg.norm(p.fhat) + np.linalg.norm(p.ghat, 2) * Bx))
    cbf_margin = 0.5 * (cbf.eta_h + cbf.zeta_of(h_lb)) - loss
    return CompatMargins(float(clf_margin), float(cbf_margin), 1.0)


def sigma_max(G: Array) -> float:
    """Largest singular value, as the square root of the top eigenvalue of ``G'G``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    return float(np.sqrt(max(np.linalg.eigvalsh(G.T @ G)[-1], 0.0)))


def check_gp_compat(terms: GpTerms, clf: ClfSpec, cbf: CbfSpec,
                    B: BoundB | Callable[[Array], float], x: Array,
                    h_lb: Optional[Callable[[Array], float]] = None) -> CompatMargins:
    """Margins of the GP-form sufficient conditions, labelled with confidence ``1 - 2 delta``."""
    x = _reject_origin(x)
    if cbf.zeta is not None and h_lb is None:
        raise ValueError("a nonzero zeta needs a lower bound on h")
    Bx = float(B(x))
    if not math.isfinite(Bx):
        return CompatMargins(-math.inf, -math.inf, 1.0 - 2.0 * terms.delta)
    denom = 2.0 * terms.beta_delta * np.sqrt(1.0 + Bx * Bx)
    zeta = cbf.zeta_of(h_lb(x)) if cbf.zeta is not None else 0.0
    clf_margin = clf.S(x) / denom - sigma_max(terms.G_V(x))
    cbf_margin = (cbf.eta_h + zeta) / denom - sigma_max(terms.G_h(x))
    return CompatMargins(float(clf_margin), float(cbf_margin), 1.0 - 2.0 * terms.delta)


def grid_K_alpha(alpha: ClassK, h_lb_values: Sequence[float]) -> float:
    """Lipschitz constant of ``alpha`` restricted to the range of ``h_lb`` on a grid."""
    vals = np.asarray(h_lb_values, dtype=float)
    return alpha.lipschitz_on(float(vals.min()), float(vals.max()))


# -- maps -------------------------------------------------------------------------

@dataclass(frozen=True)
class MapRow:
    x: Array
    margins: CompatMargins
    phase1_t: float


@dataclass
class FeasibilityMap:
    rows: list

    def sound(self, tol_strict: float = SolverConfig().tol_strict) -> list:
        """Rows where both conditions hold yet phase I finds no strict witness."""
        return [r for r in self.rows if r.margins.both and not r.phase1_t < -tol_strict]

    def one_sided(self, tol_strict: float = SolverConfig().tol_strict) -> list:
        """Rows where a condition fails although the constraints are compatible."""
        return [r for r in self.rows if not r.margins.both and r.phase1_t < -tol_strict]

    def to_csv(self, path) -> None:
        n = len(self.rows[0].x) if self.rows else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(n)]
                       + ["clf_margin", "cbf_margin", "holds_clf", "holds_cbf", "phase1_t"])
            for r in self.rows:
                hc, hb = r.margins.holds
                w.writerow([repr(float(v)) for v in r.x]
                           + [repr(r.margins.clf_margin), repr(r.margins.cbf_margin),
                              int(hc), int(hb), repr(r.phase1_t)])


def feasibility_map(checker: Callable[[Array], CompatMargins],
                    program: Callable[[Array], SoccProgram],
                    points: Array,
                    cfg: SolverConfig = SolverConfig(),
                    workers: int = 1, only_where_holds: bool = False) -> FeasibilityMap:
    """Evaluate ``checker`` and phase I of ``program(x)`` at every point.

    Phase I stops at the first witness below ``-tol_strict``, so
    ``phase1_t`` is that witness's residual for compatible points and the
    optimum otherwise. With ``only_where_holds`` phase I is skipped (and
    ``phase1_t`` is NaN) wherever a condition fails, which is all a
    soundness check needs. Output order follows ``points``.
    """

    def one(x):
        mg = checker(x)
        if only_where_holds and not mg.both:
            return MapRow(np.asarray(x, dtype=float), mg, math.nan)
        t, _ = phase1(program(x), cfg, stop_below=-cfg.tol_strict)
        return MapRow(np.asarray(x, dtype=float), mg, float(t))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one, points))
    else:
        rows = [one(x) for x in points]
    return FeasibilityMap(rows)


def map_points(grid: GridSpec, barrier: Optional[Barrier] = None,
               origin_radius: float = 1e-2) -> Array:
    """Grid points outside the unsafe set and outside a ball around the origin."""
    pts = grid.points()
    keep = np.linalg.norm(pts, axis=1) > origin_radius
    if barrier is not None:
        keep &= np.array([barrier.h(x) >= 0 for x in pts])
    return pts[keep]


def worstcase_program(model: WorstCaseModel, clf: ClfSpec, cbf: CbfSpec) -> Callable[[Array], SoccProgram]:
    return lambda x: SoccProgram(list(worstcase_soccs(model, clf, cbf, x)))


# -- synthetic GP-form instances ----------------------------------------------------

@dataclass(frozen=True)
class GpInstance:
    """GP-form data whose mean is exact, plus a control meeting both slack inequalities."""

    terms: GpTerms
    point: ModelPoint
    clf: ClfSpec
    cbf: CbfSpec
    x: Array
    B: float
    u_slack: Array


def synthetic_gp_instance(rng: np.random.Generator, clf: ClfSpec, cbf: CbfSpec,
                          n: int = 2, m: int = 2, fill: float = 0.95) -> GpInstance:
    """Random instance satisfying the GP-form conditions with ``sigma_max(G) = fill * RHS``.

    ``gamma`` is chosen so that ``gradV'(fhat + ghat u) + gamma'[1; u]`` equals
    the true ``L_fV + L_gV u``, and likewise for ``h``. The offsets are set so
    that a random ``u_slack`` with ``|u_slack| <= B`` meets the slack
    inequalities.
    """
    if not 0 < fill < 1:
        raise ValueError("fill must lie in (0, 1)")
    while True:
        x = rng.uniform(-3, 3, n)
        if np.linalg.norm(x) > 0.3:
            break
    fhat = rng.normal(size=n)
    ghat = rng.normal(size=(n, m))
    hhat = float(rng.uniform(0.0, 3.0))
    gradh = rng.normal(size=n)
    point = ModelPoint(fhat, ghat, hhat, gradh, 0.0, 0.0, 0.0, 0.0)
    B = float(rng.uniform(0.1, 3.0))
    u = rng.normal(size=m)
    u *= rng.uniform(0.0, B) / max(np.linalg.norm(u), 1e-12)
    one_u = np.concatenate([[1.0], u])
    gV = np.asarray(clf.gradV(x), dtype=float)

    gamma_V = rng.normal(size=m + 1)
    lhs_V = gV @ (fhat + ghat @ u) + gamma_V @ one_u + clf.W(x)
    gamma_V[0] += -clf.S(x) - rng.uniform(0.0, 0.5) - lhs_V
    gamma_h = rng.normal(size=m + 1)
    zeta = cbf.zeta_of(hhat)
    lhs_h = gradh @ (fhat + ghat @ u) + gamma_h @ one_u + cbf.alpha(hhat)
    gamma_h[0] += cbf.eta_h + zeta + rng.uniform(0.0, 0.5) - lhs_h

    beta = float(rng.uniform(0.5, 3.0))
    denom = 2.0 * beta * np.sqrt(1.0 + B * B)

    def scaled(target):
        G = rng.normal(size=(m + 1, m + 1))
        return G * (fill * target / sigma_max(G))

    G_V = scaled(clf.S(x) / denom)
    G_h = scaled((cbf.eta_h + zeta) / denom)
    terms = GpTerms(lambda _x: gamma_V, lambda _x: G_V, lambda _x: gamma_h, lambda _x: G_h,
                    beta_delta=beta, delta=0.05)
    return GpInstance(terms, point, clf, cbf, x, B, u)


def gp_program(inst: GpInstance) -> SoccProgram:
    return SoccProgram([gp_clf_socc(inst.terms, inst.clf, inst.point, inst.x),
                        gp_cbf_socc(inst.terms, inst.cbf, inst.point, inst.x)])
