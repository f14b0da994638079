"""Noiseless measurement oracle and nearest-neighbour worst-case model.

Estimates are the measured ``(f, g)`` at the closest datapoint; the error
bounds are Lipschitz constants times the distance to that datapoint.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .constraints import WorstCaseModel
from .core import AffineDynamics, Array, Barrier, DimensionError

DEDUP_TOL = 1e-12


class EmptyDataset(ValueError):
    pass


class WorkspaceError(ValueError):
    pass


@dataclass(frozen=True)
class Oracle:
    """Returns exact ``(f(y), g(y))``; the simulator's only access to the truth."""

    dynamics: AffineDynamics

    def query(self, y: Array) -> tuple[Array, Array]:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dynamics.dims.n,):
            raise DimensionError(f"query point has shape {y.shape}")
        f = np.array(self.dynamics.f(y), dtype=float)
        g = np.array(self.dynamics.g(y), dtype=float)
        return f, g


@dataclass(frozen=True)
class LipschitzConstants:
    K_f: float = 3.0
    K_g: float = 0.5

    def __post_init__(self):
        if not (self.K_f > 0 and self.K_g > 0):
            raise ValueError("Lipschitz constants must be positive")


class Dataset:
    """Measurements ``(x_i, f(x_i), g(x_i))`` kept in insertion order.

    Points closer than ``DEDUP_TOL`` to an existing one are ignored.
    Nearest-neighbour queries are an exact linear scan; ties go to the
    earliest insertion.
    """

    def __init__(self, n: int, m: int):
        self.n = n
        self.m = m
        self._x = np.empty((0, n))
        self._f = np.empty((0, n))
        self._g = np.empty((0, n, m))

    def __len__(self) -> int:
        return self._x.shape[0]

    @property
    def points(self) -> Array:
        return self._x.copy()

    @property
    def f_values(self) -> Array:
        return self._f.copy()

    @property
    def g_values(self) -> Array:
        return self._g.copy()

    def copy(self) -> "Dataset":
        out = Dataset(self.n, self.m)
        out._x, out._f, out._g = self._x.copy(), self._f.copy(), self._g.copy()
        return out

    def contains(self, x: Array) -> bool:
        if len(self) == 0:
            return False
        return bool(np.min(np.linalg.norm(self._x - x, axis=1)) <= DEDUP_TOL)

    def add(self, x: Array, f: Array, g: Array) -> bool:
        """Insert one measurement; returns False if it duplicates an existing point."""
        x = np.asarray(x, dtype=float).reshape(self.n)
        f = np.asarray(f, dtype=float).reshape(self.n)
        g = np.asarray(g, dtype=float).reshape(self.n, self.m)
        if self.contains(x):
            return False
        self._x = np.vstack([self._x, x])
        self._f = np.vstack([self._f, f])
        self._g = np.concatenate([self._g, g[None]], axis=0)
        return True

    def measure(self, oracle: Oracle, points: Iterable[Array]) -> int:
        """Query the oracle at each point and insert; returns the number added."""
        added = 0
        for y in points:
            added += self.add(y, *oracle.query(np.asarray(y, dtype=float)))
        return added

    def nearest(self, x: Array) -> tuple[int, float]:
        if len(self) == 0:
            raise EmptyDataset("dataset is empty")
        d = np.linalg.norm(self._x - np.asarray(x, dtype=float), axis=1)
        i = int(np.argmin(d))  # first minimiser = earliest insertion
        return i, float(d[i])

    # -- CSV ------------------------------------------------------------------

    def header(self) -> list[str]:
        cols = [f"x{i}" for i in range(self.n)] + [f"f{i}" for i in range(self.n)]
        cols += [f"g{i}{j}" for i in range(self.n) for j in range(self.m)]
        return cols

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for x, f, g in zip(self._x, self._f, self._g):
                w.writerow([repr(float(v)) for v in np.concatenate([x, f, g.ravel()])])

    @classmethod
    def from_csv(cls, path, n: int, m: int) -> "Dataset":
        ds = cls(n, m)
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            head = next(r)
            if head != ds.header():
                raise ValueError(f"unexpected dataset columns {head}")
            for row in r:
                v = np.array([float(s) for s in row])
                ds.add(v[:n], v[n:2 * n], v[2 * n:].reshape(n, m))
        return ds


@dataclass(frozen=True)
class NNEstimate:
    fhat: Array
    ghat: Array
    e_f: float
    e_g: float
    index: int
    distance: float


def nn_estimate(ds: Dataset, lip: LipschitzConstants, x: Array) -> NNEstimate:
    i, d = ds.nearest(x)
    return NNEstimate(ds._f[i].copy(), ds._g[i].copy(), lip.K_f * d, lip.K_g * d, i, d)


class _CachedNN:
    """Memoises the last query so the four model callables share one scan."""

    def __init__(self, ds: Dataset, lip: LipschitzConstants):
        self.ds = ds
        self.lip = lip
        self._key = None
        self._size = -1
        self._val: Optional[NNEstimate] = None

    def __call__(self, x: Array) -> NNEstimate:
        key = np.asarray(x, dtype=float).tobytes()
        if key != self._key or len(self.ds) != self._size:
            self._val = nn_estimate(self.ds, self.lip, x)
            self._key, self._size = key, len(self.ds)
        return self._val


def build_worstcase_model(ds: Dataset, lip: LipschitzConstants, barrier: Barrier) -> WorstCaseModel:
    """Nearest-neighbour model with exact barrier terms (``e_h = e_gradh = 0``).

    The model reads ``ds`` live, so later acquisitions are picked up.
    """
    nn = _CachedNN(ds, lip)
    return WorstCaseModel(
        fhat=lambda x: nn(x).fhat,
        ghat=lambda x: nn(x).ghat,
        hhat=barrier.h,
        gradh_hat=barrier.gradh,
        e_f=lambda x: nn(x).e_f,
        e_g=lambda x: nn(x).e_g,
        e_h=lambda x: 0.0,
        e_gradh=lambda x: 0.0,
    )


@dataclass(frozen=True)
class AcquisitionPattern:
    """Centre plus ``2 n`` axis points at distance ``radius``."""

    radius: float = 0.1

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    def points(self, xbar: Array) -> list[Array]:
        xbar = np.asarray(xbar, dtype=float)
        pts = [xbar.copy()]
        if self.radius > 0:
            for k in range(xbar.size):
                for sgn in (1.0, -1.0):
                    p = xbar.copy()
                    p[k] += sgn * self.radius
                    pts.append(p)
        return pts


@dataclass(frozen=True)
class Workspace:
    lo: Array
    hi: Array

    def contains(self, x: Array) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))


def acquire_on_infeasibility(
    oracle: Oracle,
    ds: Dataset,
    xbar: Array,
    pattern: AcquisitionPattern = AcquisitionPattern(),
    workspace: Optional[Workspace] = None,
) -> Dataset:
    """Measure at ``xbar`` and its neighbourhood pattern, in place.

    Pattern points outside ``workspace`` are skipped; ``xbar`` itself must be
    inside it.
    """
    xbar = np.asarray(xbar, dtype=float)
    if workspace is not None and not workspace.contains(xbar):
        raise WorkspaceError(f"acquisition point {xbar} lies outside the workspace")
    pts = pattern.points(xbar)
    if workspace is not None:
        pts = [p for p in pts if workspace.contains(p)]
    ds.measure(oracle, pts)
    return ds


def uniform_box_dataset(oracle: Oracle, center: Sequence[float], half_width: float, n_points: int,
                        rng: np.random.Generator, m: Optional[int] = None) -> Dataset:
    """``n_points`` measurements drawn uniformly from a box around ``center``."""
    center = np.asarray(center, dtype=float)
    m = oracle.dynamics.dims.m if m is None else m
    ds = Dataset(center.size, m)
    while len(ds) < n_points:
        ds.measure(oracle, [center + rng.uniform(-half_width, half_width, center.size)])
    return ds
