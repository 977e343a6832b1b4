from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.optimize

from acrestore.lpac import (
    EQ,
    GE,
    LE,
    InfeasibleError,
    IterationLimitError,
    LinearProgram,
    UnboundedError,
    build_lpac,
    cosine_cuts,
    extract_solution,
    lpac_to_measurements,
    simplex_solve,
    solve_lpac,
    verify_certificates,
    write_lp_text,
)


def linprog_reference(lp: LinearProgram):
    """Solve a LinearProgram with scipy's HiGHS backend for cross checks."""
    n = lp.n_var
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for coeffs, sense, rhs, _name in lp.rows:
        row = np.zeros(n)
        for j, val in coeffs.items():
            row[j] = val
        if sense == LE:
            a_ub.append(row)
            b_ub.append(rhs)
        elif sense == GE:
            a_ub.append(-row)
            b_ub.append(-rhs)
        else:
            a_eq.append(row)
            b_eq.append(rhs)
    bounds = [(lo if math.isfinite(lo) else None, hi if math.isfinite(hi) else None)
              for lo, hi in zip(lp.lower, lp.upper)]
    return scipy.optimize.linprog(
        lp.objective,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )


# ---------------------------------------------------------------------------
# simplex
# ---------------------------------------------------------------------------


def test_simplex_trivial_bound():
    lp = LinearProgram()
    x = lp.add_var("x", 0.0, math.inf, cost=1.0)
    lp.add_row({x: 1.0}, GE, 3.0)
    result = simplex_solve(lp)
    assert result.x[0] == pytest.approx(3.0)
    assert verify_certificates(result)["ok"]


def test_simplex_infeasible():
    lp = LinearProgram()
    x = lp.add_var("x", cost=1.0)
    lp.add_row({x: 1.0}, LE, 0.0)
    lp.add_row({x: 1.0}, GE, 1.0)
    with pytest.raises(InfeasibleError):
        simplex_solve(lp)


def test_simplex_unbounded():
    lp = LinearProgram()
    x = lp.add_var("x", 0.0, math.inf, cost=-1.0)
    lp.add_row({x: 1.0}, GE, 0.0)
    with pytest.raises(UnboundedError):
        simplex_solve(lp)


def test_simplex_degenerate_tie_terminates():
    # multiple optimal bases; Bland's rule must still terminate
    lp = LinearProgram()
    x = lp.add_var("x", 0.0, math.inf, cost=1.0)
    y = lp.add_var("y", 0.0, math.inf, cost=1.0)
    lp.add_row({x: 1.0, y: 1.0}, GE, 1.0)
    lp.add_row({x: 1.0, y: 1.0}, GE, 1.0)
    lp.add_row({x: 1.0}, LE, 1.0)
    result = simplex_solve(lp)
    ref = linprog_reference(lp)
    assert result.objective == pytest.approx(ref.fun, abs=1e-9)


def test_simplex_matches_reference_on_random_lps():
    rng = np.random.default_rng(42)
    solved = 0
    for _ in range(60):
        n, m = int(rng.integers(2, 9)), int(rng.integers(2, 12))
        lp = LinearProgram()
        for j in range(n):
            lp.add_var(f"x{j}", 0.0, float(rng.uniform(0.5, 4.0)), cost=float(rng.normal()))
        for _i in range(m):
            coeffs = {j: float(rng.normal()) for j in range(n)}
            sense = (LE, GE)[int(rng.integers(0, 2))]
            lp.add_row(coeffs, sense, float(rng.uniform(-1.0, 2.0)))
        ref = linprog_reference(lp)
        try:
            mine = simplex_solve(lp)
        except InfeasibleError:
            assert ref.status == 2
            continue
        assert ref.status == 0
        assert mine.objective == pytest.approx(ref.fun, abs=1e-7)
        cert = verify_certificates(mine)
        assert cert["ok"], cert
        solved += 1
    assert solved > 20


def test_simplex_equality_and_free_variables():
    lp = LinearProgram()
    x = lp.add_var("x", cost=2.0)          # free
    y = lp.add_var("y", -1.0, 5.0, cost=-1.0)
    lp.add_row({x: 1.0, y: 1.0}, EQ, 2.0)
    lp.add_row({x: -1.0, y: 2.0}, LE, 4.0)
    mine = simplex_solve(lp)
    ref = linprog_reference(lp)
    assert mine.objective == pytest.approx(ref.fun, abs=1e-9)


def test_iteration_limit_raises():
    lp = LinearProgram()
    xs = [lp.add_var(f"x{j}", 0.0, math.inf, cost=-1.0) for j in range(4)]
    for j in range(4):
        lp.add_row({xs[j]: 1.0, xs[(j + 1) % 4]: 0.5}, LE, 2.0)
    with pytest.raises(IterationLimitError):
        simplex_solve(lp, max_iter=1)


# ---------------------------------------------------------------------------
# cosine envelope
# ---------------------------------------------------------------------------


def test_tangent_at_zero_caps_phi_at_one():
    points, floor = cosine_cuts(math.pi / 3, 9)
    assert 0.0 in points
    # the cut at zero reads phi <= 1
    k = list(points).index(0.0)
    assert math.cos(points[k]) + points[k] * math.sin(points[k]) == pytest.approx(1.0)
    assert floor == pytest.approx(0.5)


def test_envelope_contains_cosine():
    rng = np.random.default_rng(3)
    for _ in range(20):
        theta_max = float(rng.uniform(0.1, math.pi / 2 * 0.95))
        n_tan = int(rng.integers(2, 15))
        points, floor = cosine_cuts(theta_max, n_tan)
        grid = np.linspace(-theta_max, theta_max, 1000)
        cos_grid = np.cos(grid)
        for point in points:
            cut = math.cos(point) - math.sin(point) * (grid - point)
            assert np.all(cut >= cos_grid - 1e-12)
        assert np.all(floor <= cos_grid + 1e-12)


# ---------------------------------------------------------------------------
# LPAC model
# ---------------------------------------------------------------------------


def expected_row_count(network, n_cos, n_circle, n_cost):
    rows = 4 * network.n_branch          # flow definitions
    rows += 2 * network.n_bus            # power balance
    rows += n_cos * network.n_branch     # cosine tangents
    rows += 2 * network.n_branch         # angle limits
    rows += sum(2 * n_circle for br in network.branches if br.s_max > 0)
    rows += 2 * (network.n_bus - 1)      # near-nominal voltage tie-break
    for gen in network.generators:
        rows += 1 if (gen.c2 == 0.0 or gen.p_max == gen.p_min) else n_cost
    return rows


def test_lp_dimensions_two_bus(two_bus):
    lp = build_lpac(two_bus, 7, 8, 4)
    # v, th per bus; phi + 4 flows per branch; pg, qg, cost per generator;
    # one deviation variable per non-slack bus
    assert lp.n_var == 2 * 2 + 5 * 1 + 3 * 1 + 1
    assert lp.n_row == expected_row_count(two_bus, 7, 8, 4)


def test_lp_dimensions_case5(case5):
    lp = build_lpac(case5, 9, 8, 6)
    assert lp.n_var == 2 * 5 + 5 * 6 + 3 * 5 + 4
    assert lp.n_row == expected_row_count(case5, 9, 8, 6)


def test_voltage_tiebreak_does_not_move_cost(case5):
    # the deviation penalty only selects among cost-equal optima
    with_tiebreak = solve_lpac(case5)
    plain = simplex_solve(build_lpac(case5, v_tiebreak=0.0))
    assert with_tiebreak.objective == pytest.approx(plain.objective, rel=1e-9)
    # reported objective is the generation cost of the dispatch
    gen_cost = sum(g.cost(p) for g, p in zip(case5.generators, with_tiebreak.p_gen))
    assert with_tiebreak.objective == pytest.approx(gen_cost, rel=1e-6)


def test_lpac_matches_reference_solver(case5):
    lp = build_lpac(case5, 9, 8, 6)
    mine = simplex_solve(lp)
    ref = linprog_reference(lp)
    assert ref.status == 0
    assert mine.objective == pytest.approx(ref.fun, rel=1e-6)
    assert verify_certificates(mine)["ok"]


def test_lpac_matches_reference_solver_case14(case14):
    lp = build_lpac(case14, 9, 8, 6)
    mine = simplex_solve(lp)
    ref = linprog_reference(lp)
    assert ref.status == 0
    assert mine.objective == pytest.approx(ref.fun, rel=1e-6)


def test_lpac_objective_nondecreasing_under_nested_refinement(case5):
    # nested tangent families tighten the outer envelope, so the minimum
    # cost can only go up
    objectives = [simplex_solve(build_lpac(case5, n, 8, 6)).objective for n in (5, 9, 17)]
    assert objectives[0] <= objectives[1] + 1e-6
    assert objectives[1] <= objectives[2] + 1e-6


def test_lpac_solution_fields(case5):
    sol = solve_lpac(case5, check=True)
    assert sol.v[case5.slack] == 0.0
    assert sol.theta[case5.slack] == 0.0
    assert np.all(sol.p_gen <= [g.p_max + 1e-9 for g in case5.generators])
    assert np.all(sol.p_gen >= [g.p_min - 1e-9 for g in case5.generators])
    # generation covers load plus linearized losses
    assert sol.p_gen.sum() == pytest.approx(case5.p_load.sum(), abs=0.1)
    # angle limits hold
    dtheta = sol.theta[case5.f_idx] - sol.theta[case5.t_idx]
    limits = np.array([br.theta_max for br in case5.branches])
    assert np.all(np.abs(dtheta) <= limits + 1e-9)


def test_lpac_infeasible_on_absurd_load(case5):
    heavy = case5.with_loads(case5.p_load * 5.0, case5.q_load * 5.0)
    with pytest.raises(InfeasibleError):
        solve_lpac(heavy)


def test_measurement_packing(case5):
    sol = solve_lpac(case5)
    z = lpac_to_measurements(case5, sol)
    assert z.m == 2 * 5 + 2 * 5 + 4 * 6
    z.validate(case5)
    # vm entries are deviations shifted back to magnitudes
    assert z.values[:5] == pytest.approx(1.0 + sol.v)
    # flow entries are the LP variables verbatim
    kinds = [k.kind for k in z.kinds]
    first_pf = kinds.index("pf")
    assert z.values[first_pf : first_pf + 6] == pytest.approx(sol.flows[:, 0])


def test_measurement_packing_flat_deviation(two_bus):
    from acrestore.lpac import LpacSolution

    sol = LpacSolution(
        v=np.zeros(2), theta=np.zeros(2), phi=np.ones(1),
        flows=np.zeros((1, 4)), p_gen=np.array([0.4]), q_gen=np.array([0.1]),
        objective=0.0,
    )
    z = lpac_to_measurements(two_bus, sol)
    assert z.values[:2] == pytest.approx([1.0, 1.0])


def test_lp_text_export_roundtrips_through_reference(case5):
    lp = build_lpac(case5, 5, 4, 3)
    text = write_lp_text(lp)
    assert "Minimize" in text and "Subject To" in text and "Bounds" in text
    # reference solve of the same model object stays consistent
    ref = linprog_reference(lp)
    mine = simplex_solve(lp)
    assert mine.objective == pytest.approx(ref.fun, rel=1e-6)
