"""Closed-form controller satisfying a single second-order cone constraint.

For ``|Q u + r| <= b u + c`` with ``Q`` of full column rank, write
``bt = b (Q'Q)^-1 Q'`` and ``ct = c - bt r``. The point

    v_s = 0                                          if |bt| <= 1
    v_s = ((-ct + sqrt(ct^2 + bb^2)) / bb) bt        otherwise, bb = (|bt| - 1) |bt|

lies in the cone ``|v| <= bt v + ct`` and ``u_s = (Q'Q)^-1 Q' (v_s - r)`` maps
it back to the input space whenever ``v_s - r`` lies in the range of ``Q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import Socc
from .core import Array

COND_LIMIT = 1e12


class SingularQ(ValueError):
    pass


class ImageConditionViolated(ValueError):
    pass


class NotStrictlyFeasible(ValueError):
    pass


@dataclass(frozen=True)
class UniversalIntermediates:
    tilde_b: Array
    tilde_c: float
    bar_b: float
    v_s: Array
    u_s: Array
    im_residual: float


def _pseudo_inverse(Q: Array) -> Array:
    QtQ = Q.T @ Q
    if np.linalg.cond(QtQ) > COND_LIMIT:
        raise SingularQ(f"Q'Q is singular to working precision (cond > {COND_LIMIT:g})")
    return np.linalg.solve(QtQ, Q.T)


def _v_s(tilde_b: Array, tilde_c: float) -> tuple[Array, float]:
    nb = float(np.linalg.norm(tilde_b))
    bar_b = (nb - 1.0) * nb
    if nb <= 1.0:
        if tilde_c < 0 or (nb == 1.0 and tilde_c == 0.0):
            raise NotStrictlyFeasible(
                f"|tilde_b| = {nb:.6g} <= 1 with tilde_c = {tilde_c:.6g}: no strictly feasible point"
            )
        return np.zeros_like(tilde_b), bar_b
    scale = (-tilde_c + math.hypot(tilde_c, bar_b)) / bar_b
    return scale * tilde_b, bar_b


def check_image_condition(s: Socc) -> float:
    """Distance of ``v_s - r`` from the range of ``Q``."""
    Pinv = _pseudo_inverse(s.Q)
    tilde_b = s.b @ Pinv
    v, _ = _v_s(tilde_b, s.c - tilde_b @ s.r)
    w = v - s.r
    return float(np.linalg.norm(w - s.Q @ (Pinv @ w)))


def universal_control(s: Socc, im_tol: float = 1e-9,
                      verify_feasible: bool = False) -> tuple[Array, UniversalIntermediates]:
    """Universal control ``u_s`` for one SOCC, with its intermediates.

    With ``verify_feasible`` strict feasibility is first confirmed by a
    phase-I solve; otherwise it is the caller's responsibility.

    Raises
    ------
    SingularQ
        ``Q'Q`` has condition number above ``COND_LIMIT``. This always
        happens for the worst-case embedding with ``a = 0``; use
        :func:`universal_control_worstcase` there.
    ImageConditionViolated
        ``v_s - r`` is farther than ``im_tol`` from the range of ``Q``.
    NotStrictlyFeasible
        The phase-I check, or the sign test on ``tilde_c``, fails.
    """
    if verify_feasible:
        from .socp import SoccProgram, SolverConfig, phase1

        tol = SolverConfig().tol_strict
        t, _ = phase1(SoccProgram([s]), stop_below=-tol)
        if t >= -tol:
            raise NotStrictlyFeasible(f"phase-I value {t:.3g} is not negative")
    Pinv = _pseudo_inverse(s.Q)
    tilde_b = s.b @ Pinv
    tilde_c = float(s.c - tilde_b @ s.r)
    v_s, bar_b = _v_s(tilde_b, tilde_c)
    w = v_s - s.r
    u_s = Pinv @ w
    im_res = float(np.linalg.norm(w - s.Q @ u_s))
    if im_res > im_tol:
        raise ImageConditionViolated(f"v_s - r is {im_res:.3g} away from Im(Q)")
    return u_s, UniversalIntermediates(tilde_b, tilde_c, bar_b, v_s, u_s, im_res)


def universal_control_worstcase(a: float, b: Array, c: float) -> Array:
    """Universal control for ``a |u| <= b u + c`` without forming ``Q``.

    With ``Q = a [I; 0]`` the pseudo-inverse is ``[I 0] / a`` and
    ``tilde_b = (b / a, 0)``. For ``a = 0`` the constraint is a half-space and
    the answer is ``0`` when ``c >= 0``, else the projection of ``0`` onto it.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    if a < 0:
        raise ValueError("cone coefficient must be nonnegative")
    if a == 0.0:
        if c >= 0:
            return np.zeros_like(b)
        nb2 = float(b @ b)
        if nb2 == 0.0:
            raise NotStrictlyFeasible("0 >= -c with c < 0 has no solution")
        return -c * b / nb2
    v, _ = _v_s(b / a, float(c))
    return v / a


__all__ = [
    "COND_LIMIT",
    "ImageConditionViolated",
    "NotStrictlyFeasible",
    "SingularQ",
    "UniversalIntermediates",
    "check_image_condition",
    "universal_control",
    "universal_control_worstcase",
]
