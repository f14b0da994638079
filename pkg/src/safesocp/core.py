"""Domain types for control-affine systems, certificates and class-K functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray
StateFn = Callable[[Array], Array]
ScalarFn = Callable[[Array], float]

ORIGIN_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when array shapes disagree with the declared system dimensions."""


@dataclass(frozen=True)
class SystemDims:
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) < 1 or int(self.m) < 1:
            raise ValueError(f"dimensions must be positive, got n={self.n}, m={self.m}")


@dataclass(frozen=True)
class AffineDynamics:
    """Control-affine vector field ``xdot = f(x) + g(x) u``.

    ``f(0) = 0`` is checked at construction.
    """

    dims: SystemDims
    f: StateFn
    g: StateFn

    def __post_init__(self):
        zero = np.zeros(self.dims.n)
        f0 = np.asarray(self.f(zero), dtype=float)
        g0 = np.asarray(self.g(zero), dtype=float)
        if f0.shape != (self.dims.n,):
            raise DimensionError(f"f returns shape {f0.shape}, expected ({self.dims.n},)")
        if g0.shape != (self.dims.n, self.dims.m):
            raise DimensionError(
                f"g returns shape {g0.shape}, expected ({self.dims.n}, {self.dims.m})"
            )
        if np.max(np.abs(f0), initial=0.0) > ORIGIN_TOL:
            raise ValueError(f"f(0) must vanish, got {f0}")

    def __call__(self, x: Array, u: Array) -> Array:
        return np.asarray(self.f(x), dtype=float) + np.asarray(self.g(x), dtype=float) @ u


def linear_dynamics(A: Array, Bm: Array) -> AffineDynamics:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Bm = np.atleast_2d(np.asarray(Bm, dtype=float))
    if A.shape[0] != A.shape[1] or Bm.shape[0] != A.shape[0]:
        raise DimensionError(f"incompatible A {A.shape} and B {Bm.shape}")
    dims = SystemDims(A.shape[0], Bm.shape[1])
    return AffineDynamics(dims, f=lambda x: A @ x, g=lambda x: Bm)


def planar_system() -> AffineDynamics:
    """The planar benchmark ``xdot = x + u`` with ``x, u`` in R^2."""
    return linear_dynamics(np.eye(2), np.eye(2))


@dataclass(frozen=True)
class ClassK:
    """A class-K function with a declared Lipschitz constant.

    ``kind`` is ``"linear"`` (``alpha(s) = slope * s``) or ``"user"``.
    For user functions the Lipschitz constant is only claimed on ``interval``.
    """

    kind: str
    slope: float = 1.0
    fn: Optional[Callable[[float], float]] = None
    lipschitz: Optional[float] = None
    interval: tuple = (-10.0, 10.0)

    def __post_init__(self):
        if self.kind == "linear":
            if not self.slope > 0:
                raise ValueError("linear class-K slope must be positive")
        elif self.kind == "user":
            if self.fn is None or self.lipschitz is None or self.lipschitz <= 0:
                raise ValueError("user class-K needs fn and a positive Lipschitz constant")
            lo, hi = self.interval
            if not lo < hi:
                raise ValueError("empty interval")
            if abs(self.fn(0.0)) > ORIGIN_TOL:
                raise ValueError("class-K function must vanish at 0")
            grid = np.linspace(lo, hi, 200)
            vals = np.array([self.fn(s) for s in grid])
            if np.any(np.diff(vals) <= 0):
                raise ValueError("class-K function must be strictly increasing")
        else:
            raise ValueError(f"unknown class-K kind {self.kind!r}")

    @classmethod
    def linear(cls, slope: float = 1.0) -> "ClassK":
        return cls("linear", slope=slope)

    def __call__(self, s: float) -> float:
        if self.kind == "linear":
            return self.slope * s
        return float(self.fn(s))

    @property
    def K(self) -> float:
        """Lipschitz constant."""
        return self.slope if self.kind == "linear" else float(self.lipschitz)

    def lipschitz_on(self, lo: float, hi: float) -> float:
        """Lipschitz constant restricted to ``[lo, hi]``.

        For user functions this is estimated from secant slopes on a fine grid
        and never exceeds the declared constant.
        """
        if self.kind == "linear" or not lo < hi:
            return self.K
        grid = np.linspace(lo, hi, 1001)
        vals = np.array([self.fn(s) for s in grid])
        est = float(np.max(np.abs(np.diff(vals) / np.diff(grid))))
        return min(est, self.K)


@dataclass(frozen=True)
class ClfSpec:
    """Control Lyapunov function data: ``V``, its gradient, decay rate ``W`` and slack ``S``."""

    V: ScalarFn
    gradV: StateFn
    W: ScalarFn
    S: ScalarFn

    def check(self, points: Sequence[Array]) -> None:
        """Check positive definiteness of ``V``, ``W``, ``S`` on sample points."""
        n = len(points[0])
        if abs(self.V(np.zeros(n))) > ORIGIN_TOL:
            raise ValueError("V(0) must vanish")
        for x in points:
            if np.linalg.norm(x) < 1e-6:
                continue
            for name in ("V", "W", "S"):
                if not getattr(self, name)(x) > 0:
                    raise ValueError(f"{name} is not positive at {x}")


def quadratic_clf(decay_rate: Optional[ScalarFn] = None) -> ClfSpec:
    """``V = |x|^2 / 2`` with user decay rate ``W0`` split as ``W = S = W0 / 2``.

    Default ``W0(x) = |x|^2``.
    """
    W0 = decay_rate if decay_rate is not None else (lambda x: float(x @ x))
    return ClfSpec(
        V=lambda x: 0.5 * float(x @ x),
        gradV=lambda x: np.asarray(x, dtype=float).copy(),
        W=lambda x: 0.5 * W0(x),
        S=lambda x: 0.5 * W0(x),
    )


@dataclass(frozen=True)
class CbfSpec:
    """Barrier-side certificate data.

    ``zeta`` of ``None`` means the identically-zero slack.
    """

    alpha: ClassK = field(default_factory=ClassK.linear)
    eta_h: float = 0.0
    zeta: Optional[ClassK] = None

    def __post_init__(self):
        if self.eta_h < 0:
            raise ValueError("eta_h must be nonnegative")

    def zeta_of(self, s: float) -> float:
        return 0.0 if self.zeta is None else self.zeta(s)


@dataclass(frozen=True)
class Barrier:
    """A barrier function and its gradient (the true ones, or exact estimates)."""

    h: ScalarFn
    gradh: StateFn


def ball_barrier(center=(0.0, 4.0), radius: float = 2.0) -> Barrier:
    """``h(x) = |x - center|^2 - radius^2``; the unsafe set is the open ball."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2
    return Barrier(
        h=lambda x: float((x - c) @ (x - c)) - r2,
        gradh=lambda x: 2.0 * (np.asarray(x, dtype=float) - c),
    )


def lie_derivatives(grad: Array, dyn: AffineDynamics, x: Array) -> tuple[float, Array]:
    """Return ``(L_f, L_g)`` of a function with gradient ``grad`` at ``x``."""
    grad = np.asarray(grad, dtype=float)
    f = np.asarray(dyn.f(x), dtype=float)
    g = np.asarray(dyn.g(x), dtype=float)
    if grad.shape != f.shape:
        raise DimensionError(f"gradient shape {grad.shape} vs state shape {f.shape}")
    return float(grad @ f), grad @ g


def _sample_box(lo: Array, hi: Array, n_samples: int, rng: np.random.Generator) -> Array:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lo + (hi - lo) * rng.random((n_samples, lo.size))


@dataclass(frozen=True)
class ClfReport:
    fraction_feasible: float
    worst_margin: float
    worst_point: Array
    n_samples: int


def clf_feasible_at(clf: ClfSpec, dyn: AffineDynamics, x: Array) -> tuple[bool, float]:
    """Exact decision of ``L_fV + L_gV u <= -W`` for some ``u``.

    Returns ``(feasible, margin)`` with margin ``-W - L_fV`` when ``L_gV = 0``
    and ``+inf`` otherwise.
    """
    LfV, LgV = lie_derivatives(clf.gradV(x), dyn, x)
    if np.any(LgV != 0.0):
        return True, np.inf
    margin = -clf.W(x) - LfV
    return margin >= 0.0, margin


def verify_clf_sampled(
    clf: ClfSpec,
    dyn: AffineDynamics,
    region: tuple[Array, Array],
    n_samples: int = 1000,
    seed: int = 0,
) -> ClfReport:
    """Sample ``region`` (a box ``(lo, hi)``) and decide the CLF inequality pointwise.

    Samples within 1e-6 of the origin are redrawn.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in region)
    if lo.shape != (dyn.dims.n,) or hi.shape != (dyn.dims.n,):
        raise DimensionError("region does not match the state dimension")
    grad0 = np.asarray(clf.gradV(lo), dtype=float)
    if grad0.shape != (dyn.dims.n,):
        raise DimensionError("gradV does not match the state dimension")
    rng = np.random.default_rng(seed)
    pts = _sample_box(lo, hi, n_samples, rng)
    for i in range(n_samples):
        while np.linalg.norm(pts[i]) < 1e-6:
            pts[i] = _sample_box(lo, hi, 1, rng)[0]
    n_ok = 0
    worst, worst_x = np.inf, pts[0]
    for x in pts:
        ok, margin = clf_feasible_at(clf, dyn, x)
        n_ok += ok
        if margin < worst:
            worst, worst_x = margin, x
    return ClfReport(n_ok / n_samples, float(worst), worst_x, n_samples)


@dataclass(frozen=True)
class GradientCheckReport:
    max_rel_error: float
    worst_point: Array
    n_samples: int


def check_gradient(
    clf: ClfSpec,
    region: tuple[Array, Array],
    step: float = 1e-5,
    n_samples: int = 100,
    seed: int = 0,
) -> GradientCheckReport:
    """Compare ``gradV`` with central differences of ``V`` at random points."""
    if not 0 < step <= 1e-2:
        raise ValueError("step must lie in (0, 1e-2]")
    n_samples = max(n_samples, 100)
    lo, hi = (np.asarray(b, dtype=float) for b in region)
    rng = np.random.default_rng(seed)
    pts = _sample_box(lo, hi, n_samples, rng)
    n = lo.size
    worst, worst_x = 0.0, pts[0]
    for x in pts:
        fd = np.empty(n)
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            fd[k] = (clf.V(x + e) - clf.V(x - e)) / (2 * step)
        g = np.asarray(clf.gradV(x), dtype=float)
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        if err > worst:
            worst, worst_x = err, x
    return GradientCheckReport(float(worst), worst_x, n_samples)
