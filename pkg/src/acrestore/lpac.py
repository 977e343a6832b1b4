"""Cold-start linear-programming approximation of the OPF, with an
embedded dense simplex solver.

The model works in voltage-deviation coordinates (v = vm - 1), linearizes
the flow equations around the flat point, represents cos(angle difference)
by a lifted variable confined to a polyhedral envelope of upper tangent
cuts plus a chord floor, replaces the apparent-power disc by tangent
half-planes, and replaces each quadratic generation cost by a secant
epigraph. Both the deviation and the angle are pinned to zero at the slack
bus; only differences of either enter the flow model, so the pin removes a
spurious translation degeneracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acpf import MeasurementSet, canonical_kinds
from .netmodel import Network

LE, GE, EQ = "<=", ">=", "=="

_FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-9
# minimum acceptable pivot magnitude on the (equilibrated) tableau; smaller
# entries make ratio-test rows ineligible to protect basis conditioning
_RATIO_TOL = 1e-7


class SimplexError(RuntimeError):
    pass


class InfeasibleError(SimplexError):
    pass


class UnboundedError(SimplexError):
    pass


class IterationLimitError(SimplexError):
    pass


@dataclass
class LinearProgram:
    """min c'x over sparse rows with senses and per-variable bounds."""

    var_names: list[str] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    rows: list = field(default_factory=list)  # (coeffs dict, sense, rhs, name)

    def add_var(self, name: str, lower=-math.inf, upper=math.inf, cost=0.0) -> int:
        if not (lower <= upper):
            raise ValueError(f"variable {name}: empty bound interval")
        self.var_names.append(name)
        self.objective.append(float(cost))
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return len(self.var_names) - 1

    def add_row(self, coeffs: dict, sense: str, rhs: float, name: str = ""):
        if sense not in (LE, GE, EQ):
            raise ValueError(f"unknown sense {sense!r}")
        for j, val in coeffs.items():
            if not (0 <= j < len(self.var_names)) or not math.isfinite(val):
                raise ValueError(f"row {name!r}: bad coefficient ({j}, {val})")
        if not math.isfinite(rhs):
            raise ValueError(f"row {name!r}: non-finite rhs")
        self.rows.append((dict(coeffs), sense, float(rhs), name))

    @property
    def n_var(self) -> int:
        return len(self.var_names)

    @property
    def n_row(self) -> int:
        return len(self.rows)


def write_lp_text(lp: LinearProgram) -> str:
    """Export in the plain text LP format understood by external solvers."""

    def term(coef, name, first):
        sign = "-" if coef < 0 else ("" if first else "+")
        return f" {sign} {abs(coef):.12g} {name}".rstrip()

    out = ["Minimize", " obj:"]
    line = ""
    for j, c in enumerate(lp.objective):
        if c != 0.0:
            line += term(c, lp.var_names[j], line == "")
    out.append(line or " 0 x0")
    out.append("Subject To")
    for k, (coeffs, sense, rhs, name) in enumerate(lp.rows):
        line = f" {name or f'c{k}'}:"
        body = ""
        for j in sorted(coeffs):
            if coeffs[j] != 0.0:
                body += term(coeffs[j], lp.var_names[j], body == "")
        rel = {LE: "<=", GE: ">=", EQ: "="}[sense]
        out.append(line + (body or " 0 " + lp.var_names[0]) + f" {rel} {rhs:.12g}")
    out.append("Bounds")
    for j, name in enumerate(lp.var_names):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo == hi:
            out.append(f" {name} = {lo:.12g}")
        else:
            lo_s = "-inf" if lo == -math.inf else f"{lo:.12g}"
            hi_s = "+inf" if hi == math.inf else f"{hi:.12g}"
            out.append(f" {lo_s} <= {name} <= {hi_s}")
    out.append("End")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# standard form and the tableau simplex
# ---------------------------------------------------------------------------


@dataclass
class StandardForm:
    """min c'x, A x = b, x >= 0, with the map back to original variables.

    var_map[j] = (offset, [(column, sign), ...]) reconstructs original
    variable j from standard-form columns. Rows are equilibrated; b >= 0.
    """

    a_mat: np.ndarray
    b_vec: np.ndarray
    c_vec: np.ndarray
    var_map: list
    n_structural: int


def to_standard_form(lp: LinearProgram) -> StandardForm:
    c_list: list[float] = []
    var_map = []
    n_rows = lp.n_row
    extra_rows = []  # (column, cap) for two-sided bounds

    dense_rows = np.zeros((n_rows, lp.n_var))
    rhs = np.zeros(n_rows)
    senses = []
    for i, (coeffs, sense, b, _name) in enumerate(lp.rows):
        for j, val in coeffs.items():
            dense_rows[i, j] += val
        rhs[i] = b
        senses.append(sense)

    col_of_var = []  # structural columns created per original variable
    for j in range(lp.n_var):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo == hi:
            var_map.append((lo, []))
            col_of_var.append(())
            continue
        if math.isinf(lo) and math.isinf(hi):
            cp = len(c_list)
            c_list += [lp.objective[j], -lp.objective[j]]
            var_map.append((0.0, [(cp, 1.0), (cp + 1, -1.0)]))
            col_of_var.append(((cp, 1.0), (cp + 1, -1.0)))
        elif math.isinf(hi):
            cp = len(c_list)
            c_list.append(lp.objective[j])
            var_map.append((lo, [(cp, 1.0)]))
            col_of_var.append(((cp, 1.0),))
        elif math.isinf(lo):
            cp = len(c_list)
            c_list.append(-lp.objective[j])
            var_map.append((hi, [(cp, -1.0)]))
            col_of_var.append(((cp, -1.0),))
        else:
            cp = len(c_list)
            c_list.append(lp.objective[j])
            var_map.append((lo, [(cp, 1.0)]))
            col_of_var.append(((cp, 1.0),))
            extra_rows.append((cp, hi - lo))

    n_struct = len(c_list)
    total_rows = n_rows + len(extra_rows)
    a_mat = np.zeros((total_rows, n_struct))
    b_vec = np.zeros(total_rows)

    for i in range(n_rows):
        shift = 0.0
        for j in range(lp.n_var):
            coef = dense_rows[i, j]
            if coef == 0.0:
                continue
            offset, cols = var_map[j][0], col_of_var[j]
            shift += coef * offset
            for col, sign in cols:
                a_mat[i, col] += coef * sign
        b_vec[i] = rhs[i] - shift
    for k, (col, cap) in enumerate(extra_rows):
        a_mat[n_rows + k, col] = 1.0
        b_vec[n_rows + k] = cap
        senses.append(LE)

    # one slack/surplus column per inequality row
    slack_cols = []
    for i, sense in enumerate(senses):
        if sense == EQ:
            slack_cols.append(None)
        else:
            slack_cols.append((i, 1.0 if sense == LE else -1.0))
    n_slack = sum(1 for s in slack_cols if s is not None)
    full = np.zeros((total_rows, n_struct + n_slack))
    full[:, :n_struct] = a_mat
    pos = n_struct
    for entry in slack_cols:
        if entry is None:
            continue
        i, sign = entry
        full[i, pos] = sign
        pos += 1
    c_vec = np.concatenate([np.array(c_list), np.zeros(n_slack)])

    # row equilibration, then sign normalization so b >= 0
    scale = np.abs(full).max(axis=1)
    scale[scale == 0.0] = 1.0
    full /= scale[:, None]
    b_vec = b_vec / scale
    flip = b_vec < 0
    full[flip] *= -1.0
    b_vec[flip] *= -1.0

    return StandardForm(full, b_vec, c_vec, var_map, n_struct)


@dataclass
class SimplexResult:
    x: np.ndarray  # original variable values
    objective: float
    x_std: np.ndarray
    basis: np.ndarray
    std: StandardForm
    iterations: int
    kept_rows: np.ndarray  # rows surviving redundancy elimination


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int):
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    basis[row] = col


def _rebuild_tableau(a_mat, b_vec, costs, basis):
    """Fresh tableau for a given basis; clears accumulated rounding error."""
    basis_mat = a_mat[:, basis]
    try:
        body = np.linalg.solve(basis_mat, np.column_stack([a_mat, b_vec]))
    except np.linalg.LinAlgError as exc:
        raise SimplexError("singular basis during reinversion") from exc
    tableau = np.empty((a_mat.shape[0] + 1, a_mat.shape[1] + 1))
    tableau[:-1] = body
    z_row = np.concatenate([costs, [0.0]])
    z_row -= costs[basis] @ body
    tableau[-1] = z_row
    return tableau


_REINVERT_EVERY = 250
_STALL_LIMIT = 40


def _iterate(tableau, basis, a_mat, b_vec, costs, max_iter):
    """Pivot to optimality; returns (tableau, iteration count).

    Uses Dantzig's most-negative-reduced-cost rule while the objective makes
    progress and falls back to Bland's anti-cycling rule through degenerate
    stretches; the tableau is reinverted periodically to shed rounding error.
    """
    n_cols = a_mat.shape[1]
    stall = 0
    last_obj = tableau[-1, -1]
    for iteration in range(max_iter):
        if iteration and iteration % _REINVERT_EVERY == 0:
            tableau = _rebuild_tableau(a_mat, b_vec, costs, basis)
        reduced = tableau[-1, :n_cols]
        if stall < _STALL_LIMIT:
            col = int(np.argmin(reduced))
            if reduced[col] >= -_PIVOT_TOL:
                return tableau, iteration
        else:  # Bland: lowest-index improving column
            candidates = np.flatnonzero(reduced < -_PIVOT_TOL)
            if candidates.size == 0:
                return tableau, iteration
            col = int(candidates[0])
        column = tableau[:-1, col]
        rows = np.flatnonzero(column > _RATIO_TOL)
        if rows.size == 0:
            if np.all(column <= _PIVOT_TOL):
                raise UnboundedError("objective unbounded below")
            rows = np.flatnonzero(column > _PIVOT_TOL)
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[np.flatnonzero(ratios <= best + 1e-12)]
        if stall < _STALL_LIMIT:
            # break ties on the largest pivot element for stability
            row = int(ties[np.argmax(column[ties])])
        else:
            # Bland: leave on the smallest basis index
            row = int(ties[np.argmin(basis[ties])])
        _pivot(tableau, basis, row, col)
        obj = tableau[-1, -1]
        stall = stall + 1 if obj >= last_obj - 1e-12 else 0
        last_obj = obj
    raise IterationLimitError(f"no optimum after {max_iter} pivots")


def simplex_solve(lp: LinearProgram, max_iter: int | None = None) -> SimplexResult:
    """Two-phase dense tableau simplex with Bland's anti-cycling rule.

    Returns an optimal basic solution mapped back to the original variable
    space. Raises InfeasibleError, UnboundedError, or IterationLimitError.
    """
    std = to_standard_form(lp)
    m, n = std.a_mat.shape
    if max_iter is None:
        max_iter = 20000 + 60 * (m + n)

    # phase 1: artificial basis, minimize the artificial sum
    a_ext = np.hstack([std.a_mat, np.eye(m)])
    costs_p1 = np.concatenate([np.zeros(n), np.ones(m)])
    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = std.a_mat
    tableau[:m, n : n + m] = np.eye(m)
    tableau[:m, -1] = std.b_vec
    tableau[-1, :] = -tableau[:m, :].sum(axis=0)
    tableau[-1, n : n + m] = 0.0
    basis = np.arange(n, n + m)

    tableau, iters = _iterate(tableau, basis, a_ext, std.b_vec, costs_p1, max_iter)
    if tableau[-1, -1] < -_FEAS_TOL * max(1.0, np.abs(std.b_vec).max()):
        raise InfeasibleError(
            f"phase-1 infeasibility {-tableau[-1, -1]:.3e}"
        )

    # drive leftover artificials out of the basis, dropping redundant rows
    keep_rows = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < n:
            continue
        pivot_cols = np.flatnonzero(np.abs(tableau[i, :n]) > _PIVOT_TOL)
        if pivot_cols.size:
            _pivot(tableau, basis, i, int(pivot_cols[0]))
        else:
            keep_rows[i] = False
    kept = np.flatnonzero(keep_rows)
    a_mat = std.a_mat[kept]
    b_vec = std.b_vec[kept]
    basis = basis[keep_rows]
    m = basis.size

    # phase 2 on a fresh tableau built from the feasible basis
    tableau = _rebuild_tableau(a_mat, b_vec, std.c_vec, basis)
    tableau, more = _iterate(tableau, basis, a_mat, b_vec, std.c_vec, max_iter)
    iters += more

    x_std = np.zeros(n)
    x_std[basis] = tableau[:m, -1]
    x_orig = np.empty(lp.n_var)
    for j, (offset, cols) in enumerate(std.var_map):
        x_orig[j] = offset + sum(sign * x_std[col] for col, sign in cols)
    objective = float(np.array(lp.objective) @ x_orig)
    return SimplexResult(x_orig, objective, x_std, basis.copy(), std, iters, kept)


def verify_certificates(result: SimplexResult, tol: float = _FEAS_TOL) -> dict:
    """Independent optimality check of a simplex result.

    Recomputes the basic solution and the duals from the returned basis with
    fresh dense factorizations and checks primal feasibility (on all rows,
    including any dropped as redundant), nonnegativity, and reduced-cost
    nonnegativity on the solved standard form.
    """
    std, basis, kept = result.std, result.basis, result.kept_rows
    a_kept, b_kept = std.a_mat[kept], std.b_vec[kept]
    c_vec = std.c_vec
    basis_mat = a_kept[:, basis]
    x_basic = np.linalg.solve(basis_mat, b_kept)
    x = np.zeros(std.a_mat.shape[1])
    x[basis] = x_basic
    primal_residual = float(np.abs(std.a_mat @ x - std.b_vec).max())
    min_x = float(x.min())
    duals = np.linalg.solve(basis_mat.T, c_vec[basis])
    reduced = c_vec - a_kept.T @ duals
    min_reduced = float(reduced.min())
    ok = primal_residual <= tol and min_x >= -tol and min_reduced >= -tol
    return {
        "ok": bool(ok),
        "primal_residual": primal_residual,
        "min_variable": min_x,
        "min_reduced_cost": min_reduced,
    }


# ---------------------------------------------------------------------------
# LPAC model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LpacSolution:
    v: np.ndarray       # per-bus voltage deviation from 1.0
    theta: np.ndarray   # per-bus angle, radians
    phi: np.ndarray     # per-branch lifted cosine
    flows: np.ndarray   # (n_branch, 4): p_from, q_from, p_to, q_to
    p_gen: np.ndarray
    q_gen: np.ndarray
    objective: float


def cosine_cuts(theta_max: float, n_tangents: int):
    """Tangent points and a chord floor bounding cos on [-theta_max, theta_max]."""
    if n_tangents < 2:
        raise ValueError("at least two tangent points required")
    points = np.linspace(-theta_max, theta_max, n_tangents)
    return points, math.cos(theta_max)


# tie-break between cost-equal vertices: prefer near-nominal voltages.
# Negligible against generation costs, so the optimal cost is unaffected.
_V_TIEBREAK = 1.0


def build_lpac(
    network: Network,
    n_cos_tangents: int = 9,
    n_circle_cuts: int = 8,
    n_cost_segments: int = 6,
    v_tiebreak: float = _V_TIEBREAK,
) -> LinearProgram:
    """Assemble the cold-start linear OPF approximation for the network.

    Voltage deviations carry a tiny absolute-value penalty that selects the
    near-nominal point among cost-equal optima; deviation magnitudes are
    otherwise degenerate on shunt-free networks. Pass v_tiebreak=0 to drop
    the penalty.
    """
    if n_cos_tangents < 2 or n_circle_cuts < 2 or n_cost_segments < 2:
        raise ValueError("tangent, circle-cut, and cost-segment counts must be >= 2")
    lp = LinearProgram()
    nb, ne, ng = network.n_bus, network.n_branch, network.n_gen

    v_idx = []
    th_idx = []
    for i, bus in enumerate(network.buses):
        if i == network.slack:
            v_idx.append(lp.add_var(f"v[{bus.id}]", 0.0, 0.0))
            th_idx.append(lp.add_var(f"th[{bus.id}]", 0.0, 0.0))
        else:
            v_idx.append(lp.add_var(f"v[{bus.id}]", bus.v_min - 1.0, bus.v_max - 1.0))
            th_idx.append(lp.add_var(f"th[{bus.id}]"))
    phi_idx = [
        lp.add_var(f"phi[{e}]", math.cos(br.theta_max), math.inf)
        for e, br in enumerate(network.branches)
    ]
    pf_idx = [lp.add_var(f"pf[{e}]") for e in range(ne)]
    qf_idx = [lp.add_var(f"qf[{e}]") for e in range(ne)]
    pt_idx = [lp.add_var(f"pt[{e}]") for e in range(ne)]
    qt_idx = [lp.add_var(f"qt[{e}]") for e in range(ne)]
    pg_idx = [
        lp.add_var(f"pg[{g}]", gen.p_min, gen.p_max)
        for g, gen in enumerate(network.generators)
    ]
    qg_idx = [
        lp.add_var(f"qg[{g}]", gen.q_min, gen.q_max)
        for g, gen in enumerate(network.generators)
    ]
    cost_idx = [lp.add_var(f"cost[{g}]", cost=1.0) for g in range(ng)]

    # directed flow definitions from the linearized flow model
    for e, br in enumerate(network.branches):
        y = 1.0 / complex(br.r, br.x)
        g, b = y.real, y.imag
        f, t = int(network.f_idx[e]), int(network.t_idx[e])
        lp.add_row(
            {pf_idx[e]: 1.0, phi_idx[e]: g, th_idx[f]: b, th_idx[t]: -b},
            EQ, g, f"pflow_def[{e}]",
        )
        lp.add_row(
            {qf_idx[e]: 1.0, v_idx[f]: b, v_idx[t]: -b, th_idx[f]: g,
             th_idx[t]: -g, phi_idx[e]: -b},
            EQ, -b, f"qflow_def[{e}]",
        )
        lp.add_row(
            {pt_idx[e]: 1.0, phi_idx[e]: g, th_idx[t]: b, th_idx[f]: -b},
            EQ, g, f"pflow_rev_def[{e}]",
        )
        lp.add_row(
            {qt_idx[e]: 1.0, v_idx[t]: b, v_idx[f]: -b, th_idx[t]: g,
             th_idx[f]: -g, phi_idx[e]: -b},
            EQ, -b, f"qflow_rev_def[{e}]",
        )

    # bus power balance with first-order shunt terms
    for i, bus in enumerate(network.buses):
        p_row: dict[int, float] = {}
        q_row: dict[int, float] = {}
        for g in network.gens_at(i):
            p_row[pg_idx[g]] = 1.0
            q_row[qg_idx[g]] = 1.0
        for e in range(ne):
            if network.f_idx[e] == i:
                p_row[pf_idx[e]] = p_row.get(pf_idx[e], 0.0) - 1.0
                q_row[qf_idx[e]] = q_row.get(qf_idx[e], 0.0) - 1.0
            if network.t_idx[e] == i:
                p_row[pt_idx[e]] = p_row.get(pt_idx[e], 0.0) - 1.0
                q_row[qt_idx[e]] = q_row.get(qt_idx[e], 0.0) - 1.0
        if bus.g_shunt != 0.0:
            p_row[v_idx[i]] = p_row.get(v_idx[i], 0.0) - 2.0 * bus.g_shunt
        if bus.b_shunt != 0.0:
            q_row[v_idx[i]] = q_row.get(v_idx[i], 0.0) + 2.0 * bus.b_shunt
        lp.add_row(p_row, EQ, bus.p_load + bus.g_shunt, f"pbal[{bus.id}]")
        lp.add_row(q_row, EQ, bus.q_load - bus.b_shunt, f"qbal[{bus.id}]")

    # cosine envelope tangents and angle-difference limits
    for e, br in enumerate(network.branches):
        f, t = int(network.f_idx[e]), int(network.t_idx[e])
        points, _floor = cosine_cuts(br.theta_max, n_cos_tangents)
        for k, point in enumerate(points):
            lp.add_row(
                {phi_idx[e]: 1.0, th_idx[f]: math.sin(point), th_idx[t]: -math.sin(point)},
                LE, math.cos(point) + point * math.sin(point), f"cos_cut[{e},{k}]",
            )
        lp.add_row({th_idx[f]: 1.0, th_idx[t]: -1.0}, LE, br.theta_max, f"ang_hi[{e}]")
        lp.add_row({th_idx[f]: 1.0, th_idx[t]: -1.0}, GE, -br.theta_max, f"ang_lo[{e}]")

    # apparent-power discs as tangent half-planes, both terminals
    for e, br in enumerate(network.branches):
        if br.s_max <= 0.0:
            continue
        for k in range(n_circle_cuts):
            alpha = 2.0 * math.pi * k / n_circle_cuts
            ca, sa = math.cos(alpha), math.sin(alpha)
            lp.add_row({pf_idx[e]: ca, qf_idx[e]: sa}, LE, br.s_max, f"smax_f[{e},{k}]")
            lp.add_row({pt_idx[e]: ca, qt_idx[e]: sa}, LE, br.s_max, f"smax_t[{e},{k}]")

    # near-nominal tie-break: |v| epigraph with a negligible cost
    if v_tiebreak > 0.0:
        for i, bus in enumerate(network.buses):
            if i == network.slack:
                continue
            dev = lp.add_var(f"vdev[{bus.id}]", 0.0, math.inf, cost=v_tiebreak)
            lp.add_row({dev: 1.0, v_idx[i]: -1.0}, GE, 0.0, f"vdev_hi[{bus.id}]")
            lp.add_row({dev: 1.0, v_idx[i]: 1.0}, GE, 0.0, f"vdev_lo[{bus.id}]")

    # secant epigraph of each quadratic generation cost
    for g, gen in enumerate(network.generators):
        if gen.c2 == 0.0 or gen.p_max == gen.p_min:
            lp.add_row(
                {cost_idx[g]: 1.0, pg_idx[g]: -gen.c1},
                GE, gen.c0, f"cost_cut[{g},0]",
            )
            continue
        points = np.linspace(gen.p_min, gen.p_max, n_cost_segments + 1)
        for k in range(n_cost_segments):
            a, b_pt = points[k], points[k + 1]
            slope = (gen.cost(b_pt) - gen.cost(a)) / (b_pt - a)
            lp.add_row(
                {cost_idx[g]: 1.0, pg_idx[g]: -slope},
                GE, gen.cost(a) - slope * a, f"cost_cut[{g},{k}]",
            )

    return lp


def extract_solution(network: Network, lp: LinearProgram, x: np.ndarray) -> LpacSolution:
    pos = {name: j for j, name in enumerate(lp.var_names)}
    nb, ne, ng = network.n_bus, network.n_branch, network.n_gen
    v = np.array([x[pos[f"v[{bus.id}]"]] for bus in network.buses])
    theta = np.array([x[pos[f"th[{bus.id}]"]] for bus in network.buses])
    phi = np.array([x[pos[f"phi[{e}]"]] for e in range(ne)])
    flows = np.column_stack(
        [
            [x[pos[f"pf[{e}]"]] for e in range(ne)],
            [x[pos[f"qf[{e}]"]] for e in range(ne)],
            [x[pos[f"pt[{e}]"]] for e in range(ne)],
            [x[pos[f"qt[{e}]"]] for e in range(ne)],
        ]
    )
    p_gen = np.array([x[pos[f"pg[{g}]"]] for g in range(ng)])
    q_gen = np.array([x[pos[f"qg[{g}]"]] for g in range(ng)])
    objective = float(sum(x[pos[f"cost[{g}]"]] for g in range(ng)))
    return LpacSolution(v, theta, phi, flows, p_gen, q_gen, objective)


def solve_lpac(
    network: Network,
    n_cos_tangents: int = 9,
    n_circle_cuts: int = 8,
    n_cost_segments: int = 6,
    check: bool = False,
) -> LpacSolution:
    """Build and solve the linear approximation; optionally verify certificates."""
    lp = build_lpac(network, n_cos_tangents, n_circle_cuts, n_cost_segments)
    result = simplex_solve(lp)
    if check:
        cert = verify_certificates(result)
        if not cert["ok"]:
            raise SimplexError(f"certificate check failed: {cert}")
    return extract_solution(network, lp, result.x)


def lpac_to_measurements(network: Network, sol: LpacSolution) -> MeasurementSet:
    """Pack a solved approximation into the canonical measurement layout.

    Flow entries are the LP's flow variables verbatim; nothing is recomputed
    through the nonlinear model, so the set carries exactly the linearization
    inconsistency the restorer has to resolve.
    """
    p_inj = -network.p_load.copy()
    q_inj = -network.q_load.copy()
    for g, bus in zip(range(network.n_gen), network.gen_bus):
        p_inj[bus] += sol.p_gen[g]
        q_inj[bus] += sol.q_gen[g]
    kinds = canonical_kinds(network)
    values = np.concatenate(
        [
            1.0 + sol.v,
            sol.theta,
            p_inj,
            q_inj,
            sol.flows[:, 0],
            sol.flows[:, 1],
            sol.flows[:, 2],
            sol.flows[:, 3],
        ]
    )
    return MeasurementSet(kinds, values)
