"""Second-order cone constraints built from worst-case or GP-form error models.

A constraint ``|Q u + r| <= b u + c`` is stored as a :class:`Socc`. Worst-case
descriptions give scalar-cone constraints ``a |u| <= b u + c`` which embed into
the general form with ``Q = a [I; 0]`` and ``r = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Array, CbfSpec, ClfSpec, DimensionError, ScalarFn, StateFn


@dataclass(frozen=True)
class Socc:
    """``|Q u + r| <= b @ u + c``; ``Q`` is ``k x m``, ``r`` has length ``k``."""

    Q: Array
    r: Array
    b: Array
    c: float

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        r = np.asarray(self.r, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))
        if r.shape[0] != Q.shape[0] or b.shape[0] != Q.shape[1]:
            raise DimensionError(f"inconsistent SOCC shapes Q{Q.shape} r{r.shape} b{b.shape}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(r))
                and np.all(np.isfinite(b)) and np.isfinite(self.c)):
            raise ValueError("SOCC data must be finite")

    @property
    def m(self) -> int:
        return self.Q.shape[1]

    def residual(self, u: Array) -> float:
        return socc_residual(self, u)


def socc_residual(s: Socc, u: Array) -> float:
    """``|Q u + r| - (b u + c)``; nonpositive iff the constraint holds at ``u``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    return float(np.linalg.norm(s.Q @ u + s.r) - (s.b @ u + s.c))


def embed_worstcase(a: float, b: Array, c: float, m: int | None = None) -> Socc:
    """General-form SOCC equivalent to ``a |u| <= b u + c``."""
    if a < 0:
        raise ValueError(f"cone coefficient must be nonnegative, got {a}")
    b = np.asarray(b, dtype=float).reshape(-1)
    m = b.size if m is None else m
    if b.size != m:
        raise DimensionError(f"b has length {b.size}, expected {m}")
    Q = a * np.vstack([np.eye(m), np.zeros((1, m))])
    return Socc(Q, np.zeros(m + 1), b, c)


@dataclass(frozen=True)
class ModelPoint:
    """A worst-case model evaluated at one state."""

    fhat: Array
    ghat: Array
    hhat: float
    gradh_hat: Array
    e_f: float
    e_g: float
    e_h: float
    e_gradh: float


@dataclass(frozen=True)
class WorstCaseModel:
    """Estimates of ``f, g, h, grad h`` with pointwise worst-case error bounds.

    The bound on ``g - ghat`` is in the spectral norm.
    """

    fhat: StateFn
    ghat: StateFn
    hhat: ScalarFn
    gradh_hat: StateFn
    e_f: ScalarFn
    e_g: ScalarFn
    e_h: ScalarFn
    e_gradh: ScalarFn

    def at(self, x: Array) -> ModelPoint:
        p = ModelPoint(
            np.asarray(self.fhat(x), dtype=float),
            np.atleast_2d(np.asarray(self.ghat(x), dtype=float)),
            float(self.hhat(x)),
            np.asarray(self.gradh_hat(x), dtype=float),
            float(self.e_f(x)),
            float(self.e_g(x)),
            float(self.e_h(x)),
            float(self.e_gradh(x)),
        )
        if min(p.e_f, p.e_g, p.e_h, p.e_gradh) < 0:
            raise ValueError(f"negative error bound at {x}")
        return p


def _zero(x):
    return 0.0


def exact_model(fhat: StateFn, ghat: StateFn, hhat: ScalarFn, gradh_hat: StateFn) -> WorstCaseModel:
    """Model whose estimates are trusted exactly (all error bounds zero)."""
    return WorstCaseModel(fhat, ghat, hhat, gradh_hat, _zero, _zero, _zero, _zero)


@dataclass(frozen=True)
class WorstCaseCoeffs:
    a: float
    b: Array
    c: float

    def socc(self) -> Socc:
        return embed_worstcase(self.a, self.b, self.c)


def _check_dims(grad: Array, p: ModelPoint) -> None:
    if grad.shape != p.fhat.shape or p.ghat.shape[0] != grad.shape[0]:
        raise DimensionError(
            f"gradient {grad.shape}, fhat {p.fhat.shape}, ghat {p.ghat.shape} disagree"
        )


def worstcase_clf_coeffs(model: WorstCaseModel | ModelPoint, clf: ClfSpec, x: Array) -> WorstCaseCoeffs:
    x = np.asarray(x, dtype=float)
    p = model if isinstance(model, ModelPoint) else model.at(x)
    gV = np.asarray(clf.gradV(x), dtype=float)
    _check_dims(gV, p)
    ngV = np.linalg.norm(gV)
    a = ngV * p.e_g
    b = -(gV @ p.ghat)
    c = -ngV * p.e_f - gV @ p.fhat - clf.W(x)
    return WorstCaseCoeffs(float(a), b, float(c))


def worstcase_cbf_coeffs(model: WorstCaseModel | ModelPoint, cbf: CbfSpec, x: Array) -> WorstCaseCoeffs:
    x = np.asarray(x, dtype=float)
    p = model if isinstance(model, ModelPoint) else model.at(x)
    gh = p.gradh_hat
    _check_dims(gh, p)
    ngh = np.linalg.norm(gh)
    ng = np.linalg.norm(p.ghat, 2)
    nf = np.linalg.norm(p.fhat)
    a = p.e_gradh * p.e_g + p.e_gradh * ng + ngh * p.e_g
    b = gh @ p.ghat
    c = (-p.e_gradh * p.e_f - p.e_gradh * nf - ngh * p.e_f
         + gh @ p.fhat + cbf.alpha(p.hhat - p.e_h))
    return WorstCaseCoeffs(float(a), b, float(c))


def worstcase_soccs(model: WorstCaseModel, clf: ClfSpec, cbf: CbfSpec, x: Array) -> tuple[Socc, Socc]:
    """The CLF and CBF worst-case constraints at ``x``, embedded in general form."""
    p = model.at(np.asarray(x, dtype=float))
    return (worstcase_clf_coeffs(p, clf, x).socc(), worstcase_cbf_coeffs(p, cbf, x).socc())


@dataclass(frozen=True)
class GpTerms:
    """Affine-mean / quadratic-variance GP predictions of the Lie-derivative errors.

    ``gamma_*`` map a state to ``R^(m+1)`` and ``G_*`` to ``R^((m+1) x (m+1))``;
    the first entry (column) multiplies the constant ``1`` of ``[1; u]``.
    """

    gamma_V: Callable[[Array], Array]
    G_V: Callable[[Array], Array]
    gamma_h: Callable[[Array], Array]
    G_h: Callable[[Array], Array]
    beta_delta: float
    delta: float

    def __post_init__(self):
        if not self.beta_delta > 0:
            raise ValueError("beta_delta must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def _gp_blocks(gamma: Array, G: Array, beta: float, m: int):
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if gamma.shape != (m + 1,) or G.shape != (m + 1, m + 1):
        raise DimensionError(f"GP terms must have m+1={m + 1} rows, got {gamma.shape}, {G.shape}")
    return beta * G[:, 1:], beta * G[:, 0], gamma


def gp_clf_socc(terms: GpTerms, clf: ClfSpec, model: WorstCaseModel | ModelPoint, x: Array) -> Socc:
    x = np.asarray(x, dtype=float)
    p = model if isinstance(model, ModelPoint) else model.at(x)
    gV = np.asarray(clf.gradV(x), dtype=float)
    _check_dims(gV, p)
    m = p.ghat.shape[1]
    Q, r, gamma = _gp_blocks(terms.gamma_V(x), terms.G_V(x), terms.beta_delta, m)
    b = -(gV @ p.ghat) - gamma[1:]
    c = -(gV @ p.fhat) - clf.W(x) - gamma[0]
    return Socc(Q, r, b, c)


def gp_cbf_socc(terms: GpTerms, cbf: CbfSpec, model: WorstCaseModel | ModelPoint, x: Array) -> Socc:
    x = np.asarray(x, dtype=float)
    p = model if isinstance(model, ModelPoint) else model.at(x)
    gh = p.gradh_hat
    _check_dims(gh, p)
    m = p.ghat.shape[1]
    Q, r, gamma = _gp_blocks(terms.gamma_h(x), terms.G_h(x), terms.beta_delta, m)
    b = gh @ p.ghat + gamma[1:]
    c = gh @ p.fhat + gamma[0] + cbf.alpha(p.hhat)
    return Socc(Q, r, b, c)


def random_strict_socc(
    rng: np.random.Generator,
    m: int,
    u0: Array,
    margin: float = 0.1,
    rows: int | None = None,
    r_in_image: bool = False,
) -> Socc:
    """Random SOCC holding at ``u0`` with slack exactly ``margin``.

    ``c`` is chosen after sampling ``Q, r, b`` so that the residual at ``u0``
    equals ``-margin``. With ``r_in_image`` the offset lies in the range of ``Q``.
    """
    k = m + 1 if rows is None else rows
    Q = rng.normal(size=(k, m))
    r = Q @ rng.normal(size=m) if r_in_image else rng.normal(size=k)
    b = rng.normal(size=m) * rng.uniform(0.2, 3.0)
    u0 = np.asarray(u0, dtype=float)
    c = np.linalg.norm(Q @ u0 + r) - b @ u0 + margin
    return Socc(Q, r, b, c)
