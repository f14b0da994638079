import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from safesocp.constraints import Socc, embed_worstcase, random_strict_socc, socc_residual
from safesocp.socp import (T_CAP, EmptyFeasibleGrid, SoccProgram, SolverConfig, Status,
                           brute_force_min_norm, kkt_residual, phase1, solve_min_norm,
                           squared_constraints)

E1 = np.array([1.0, 0.0])


def halfspace(b, c):
    return embed_worstcase(0.0, b, c)


FREE = SoccProgram([halfspace(E1, 1.0)])                            # 0 <= u1 + 1
SHIFTED = SoccProgram([halfspace(E1, -2.0)])                        # u1 >= 2
CONFLICT = SoccProgram([halfspace(E1, -1.0), halfspace(-E1, -1.0)])  # u1 >= 1 and -u1 >= 1
CONE = SoccProgram([embed_worstcase(1.0, 2 * E1, -1.0)])            # |u| <= 2 u1 - 1
FLAT = SoccProgram([embed_worstcase(1.0, E1, -1.0)])                # |u| <= u1 - 1


def random_program(rng, m=None, p=None):
    m = int(rng.integers(1, 4)) if m is None else m
    p = int(rng.integers(1, 5)) if p is None else p
    u0 = rng.uniform(-3, 3, m)
    return SoccProgram([random_strict_socc(rng, m, u0, rng.uniform(0.05, 0.5)) for _ in range(p)])


def test_phase1_unbounded_is_capped():
    t, u = phase1(FREE)
    assert t <= -T_CAP
    assert max(FREE.residuals(u)) <= t + 1e-8


def test_phase1_infeasible_pair():
    t, _ = phase1(CONFLICT)
    assert t == pytest.approx(1.0, abs=1e-6)


def test_phase1_flat_cone_is_not_strict():
    # residual |u| - u1 + 1 >= 1 everywhere, approached along u1 -> inf
    t, _ = phase1(FLAT)
    assert t >= 1.0 - 1e-6
    res = solve_min_norm(FLAT)
    assert res.status is Status.INFEASIBLE


def test_solve_examples():
    r = solve_min_norm(FREE)
    assert r.feasible and not np.any(r.u_star)
    r = solve_min_norm(SHIFTED)
    assert r.feasible
    np.testing.assert_allclose(r.u_star, [2.0, 0.0], atol=1e-7)
    r = solve_min_norm(CONE)
    np.testing.assert_allclose(r.u_star, [1.0, 0.0], atol=1e-7)
    assert r.kkt_residual <= 1e-8


def test_solve_infeasible_reports_certificate():
    r = solve_min_norm(CONFLICT)
    assert r.status is Status.INFEASIBLE and r.u_star is None
    assert r.phase1_value >= -SolverConfig().tol_strict


def test_marginal_flag():
    # u1 >= 1 and u1 <= 1: compatible but not strictly
    r = solve_min_norm(SoccProgram([halfspace(E1, -1.0), halfspace(-E1, 1.0)]))
    assert r.status is Status.INFEASIBLE and r.marginal


def test_squared_examples():
    assert squared_constraints(halfspace(E1, 1.0), np.zeros(2)) == (-1.0, -1.0)
    g1, g2 = squared_constraints(embed_worstcase(1.0, 2 * E1, -1.0), E1)
    assert abs(g1) <= 1e-12 and g2 <= 0
    g1, g2 = squared_constraints(embed_worstcase(1.0, 2 * E1, -1.0), np.array([0.0, 3.0]))
    assert g1 > 0 or g2 > 0


def test_oracle_examples():
    assert np.linalg.norm(brute_force_min_norm(SHIFTED, 5.0, 1e-3) - [2.0, 0.0]) <= 2e-3
    np.testing.assert_array_equal(brute_force_min_norm(FREE, 5.0, 1e-3), [0.0, 0.0])
    with pytest.raises(EmptyFeasibleGrid):
        brute_force_min_norm(CONFLICT, 5.0, 1e-3)


def test_oracle_dimension_guard():
    with pytest.raises(ValueError):
        brute_force_min_norm(SoccProgram([halfspace(np.ones(4), 1.0)]))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol_feas=0.0)
    with pytest.raises(ValueError):
        SolverConfig(mu_factor=1.0)


def test_program_dimension_check():
    with pytest.raises(ValueError):
        SoccProgram([halfspace(E1, 1.0), halfspace(np.ones(3), 1.0)])
    with pytest.raises(ValueError):
        SoccProgram([])


def test_against_oracle_small_batch():
    rng = np.random.default_rng(7)
    for _ in range(25):
        prog = random_program(rng)
        r = solve_min_norm(prog)
        o = brute_force_min_norm(prog, 5.0, 1e-3)
        assert abs(np.linalg.norm(r.u_star) - np.linalg.norm(o)) <= 1e-2


@given(st.integers(0, 2**32 - 1))
def test_feasible_result_contract(seed):
    rng = np.random.default_rng(seed)
    prog = random_program(rng)
    cfg = SolverConfig()
    r = solve_min_norm(prog, cfg)
    assert r.feasible
    assert max(prog.residuals(r.u_star)) <= cfg.tol_feas
    assert r.kkt_residual <= cfg.tol_kkt
    assert np.all(r.multipliers >= 0)
    duals = []
    for s, lam in zip(prog.constraints, r.multipliers):
        sv = s.b @ r.u_star + s.c
        duals.append((lam, -lam * (s.Q @ r.u_star + s.r) / sv if sv > 0 else np.zeros(len(s.r))))
    assert kkt_residual(prog, r.u_star, duals) <= 1e-6


@given(st.integers(0, 2**32 - 1))
def test_deterministic_and_unique(seed):
    prog = random_program(np.random.default_rng(seed))
    a, b = solve_min_norm(prog), solve_min_norm(prog)
    assert np.linalg.norm(a.u_star - b.u_star) <= 1e-7


@given(st.integers(0, 2**32 - 1), st.floats(-1e-3, 1e-3))
def test_warm_start_matches_cold(seed, shift):
    rng = np.random.default_rng(seed)
    prog = random_program(rng)
    first = solve_min_norm(prog)
    nearby = SoccProgram([Socc(s.Q, s.r, s.b, s.c + shift) for s in prog.constraints])
    cold, warm = solve_min_norm(nearby), solve_min_norm(nearby, warm=first)
    assert cold.status is warm.status
    if cold.feasible:
        assert np.linalg.norm(cold.u_star - warm.u_star) <= 1e-6 * max(1.0, np.linalg.norm(cold.u_star))


@given(st.integers(0, 2**32 - 1))
def test_phase1_witness_attains_value(seed):
    prog = random_program(np.random.default_rng(seed))
    t, u = phase1(prog)
    assert t < 0
    assert max(prog.residuals(u)) <= t + 1e-8 * max(1.0, abs(t))


@given(st.integers(0, 2**32 - 1))
def test_infeasible_random_pair(seed):
    # u1 >= k and u1 <= k - gap: the best t splits the gap
    rng = np.random.default_rng(seed)
    k, gap = rng.uniform(-3, 3), rng.uniform(0.01, 2)
    prog = SoccProgram([halfspace(E1, -k), halfspace(-E1, k - gap)])
    t, _ = phase1(prog)
    assert t == pytest.approx(gap / 2, rel=1e-6, abs=1e-8)
    assert solve_min_norm(prog).status is Status.INFEASIBLE


@given(st.integers(0, 2**32 - 1))
def test_squared_form_equivalence(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    s = random_strict_socc(rng, m, rng.normal(size=m), rng.uniform(-1, 1))
    u = rng.normal(size=m) * 3
    g1, g2 = squared_constraints(s, u)
    res = socc_residual(s, u)
    scale = 1e-9 * max(1.0, abs(s.c) + np.linalg.norm(s.b) * np.linalg.norm(u)) ** 2
    if abs(res) > 1e-9 and abs(g1) > scale:
        assert (g1 <= 0 and g2 <= 0) == (res <= 0)


def test_iteration_budget_reported():
    r = solve_min_norm(SHIFTED, SolverConfig(max_iterations=1))
    assert r.status is Status.MAX_ITERATIONS and r.u_star is None
