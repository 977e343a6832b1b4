"""AC power-flow measurement model, Jacobian, Newton solver, and reports.

The voltage state is polar: one magnitude per bus plus one angle per
non-slack bus (the slack angle is the zero reference), so the state
dimension is 2*n_bus - 1. Measurement functions map a state to voltage
magnitudes, angles, net bus injections, and directed branch flows, all in
per-unit and radians. Everything here is a pure function of the
(immutable) network and a state, so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netmodel import Network, PQ, PV, SLACK

BUS_KINDS = ("vm", "va", "pinj", "qinj")
BRANCH_KINDS = ("pf", "qf", "pt", "qt")
ALL_KINDS = BUS_KINDS + BRANCH_KINDS


class MeasurementError(ValueError):
    """Invalid measurement kind, reference, or layout."""


class PowerFlowError(RuntimeError):
    """Newton power flow failed (non-convergence or singular Jacobian)."""


@dataclass(frozen=True)
class MeasurementKind:
    """One scalar observable: kind name plus a bus or branch position.

    Bus kinds (vm, va, pinj, qinj) use the bus position; flow kinds use the
    branch position, with pf/qf taken at the from terminal and pt/qt at the
    to terminal.
    """

    kind: str
    index: int

    def is_voltage(self) -> bool:
        return self.kind in ("vm", "va")


@dataclass(frozen=True)
class MeasurementSet:
    """Tagged values taken from a relaxed/approximated solution."""

    kinds: tuple[MeasurementKind, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if len(self.kinds) != values.size:
            raise MeasurementError(
                f"{len(self.kinds)} kinds but {values.size} values"
            )

    @property
    def m(self) -> int:
        return len(self.kinds)

    def validate(self, network: Network):
        validate_kinds(network, self.kinds)

    def subset(self, keep) -> "MeasurementSet":
        keep = list(keep)
        return MeasurementSet(
            tuple(self.kinds[i] for i in keep), self.values[keep]
        )


def validate_kinds(network: Network, kinds) -> None:
    seen = set()
    for k in kinds:
        if k.kind not in ALL_KINDS:
            raise MeasurementError(f"unknown measurement kind {k.kind!r}")
        limit = network.n_bus if k.kind in BUS_KINDS else network.n_branch
        if not (0 <= k.index < limit):
            raise MeasurementError(f"{k.kind}[{k.index}] out of range")
        if k in seen:
            raise MeasurementError(f"duplicate measurement {k.kind}[{k.index}]")
        seen.add(k)


def canonical_kinds(
    network: Network, with_va: bool = True, with_injections: bool = True,
    with_flows: bool = True,
) -> tuple[MeasurementKind, ...]:
    """The canonical layout: vm, va, pinj, qinj by bus, then flows by branch."""
    kinds: list[MeasurementKind] = []
    kinds += [MeasurementKind("vm", i) for i in range(network.n_bus)]
    if with_va:
        kinds += [MeasurementKind("va", i) for i in range(network.n_bus)]
    if with_injections:
        kinds += [MeasurementKind("pinj", i) for i in range(network.n_bus)]
        kinds += [MeasurementKind("qinj", i) for i in range(network.n_bus)]
    if with_flows:
        for name in BRANCH_KINDS:
            kinds += [MeasurementKind(name, e) for e in range(network.n_branch)]
    return tuple(kinds)


@dataclass(frozen=True)
class StateVector:
    """Polar voltage state; the slack angle is pinned to zero."""

    vm: np.ndarray
    va: np.ndarray
    slack: int

    def __post_init__(self):
        vm = np.asarray(self.vm, dtype=float)
        va = np.asarray(self.va, dtype=float)
        object.__setattr__(self, "vm", vm)
        object.__setattr__(self, "va", va)
        if vm.shape != va.shape:
            raise ValueError("vm and va must have equal length")
        if np.any(vm <= 0.0):
            raise ValueError("voltage magnitudes must be strictly positive")
        if va[self.slack] != 0.0:
            raise ValueError("slack angle must be zero")

    @property
    def n(self) -> int:
        return 2 * self.vm.size - 1

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.vm, np.delete(self.va, self.slack)])

    @classmethod
    def from_vector(cls, vec: np.ndarray, slack: int) -> "StateVector":
        vec = np.asarray(vec, dtype=float)
        nb = (vec.size + 1) // 2
        va = np.insert(vec[nb:], slack, 0.0)
        return cls(vec[:nb].copy(), va, slack)

    @classmethod
    def flat(cls, network: Network) -> "StateVector":
        return cls(np.ones(network.n_bus), np.zeros(network.n_bus), network.slack)

    def voltages(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)


def _group(network: Network, kinds) -> dict:
    """Row positions and bus/branch indices per kind family."""
    validate_kinds(network, kinds)
    groups: dict[str, tuple[list[int], list[int]]] = {
        name: ([], []) for name in ALL_KINDS
    }
    for row, k in enumerate(kinds):
        groups[k.kind][0].append(row)
        groups[k.kind][1].append(k.index)
    return {
        name: (np.array(rows, dtype=int), np.array(idx, dtype=int))
        for name, (rows, idx) in groups.items()
        if rows
    }


def _branch_flows(network: Network, v: np.ndarray):
    vf, vt = v[network.f_idx], v[network.t_idx]
    s_from = vf * np.conj(network.y_ff * vf + network.y_ft * vt)
    s_to = vt * np.conj(network.y_tf * vf + network.y_tt * vt)
    return s_from, s_to


def eval_h(network: Network, state: StateVector, kinds) -> np.ndarray:
    """Evaluate the measurement functions at the given state."""
    groups = _group(network, kinds)
    v = state.voltages()
    out = np.empty(len(kinds))
    need_inj = "pinj" in groups or "qinj" in groups
    need_flow = any(name in groups for name in BRANCH_KINDS)
    s_inj = v * np.conj(network.ybus @ v) if need_inj else None
    s_from = s_to = None
    if need_flow:
        s_from, s_to = _branch_flows(network, v)
    for name, (rows, idx) in groups.items():
        if name == "vm":
            out[rows] = state.vm[idx]
        elif name == "va":
            out[rows] = state.va[idx]
        elif name == "pinj":
            out[rows] = s_inj[idx].real
        elif name == "qinj":
            out[rows] = s_inj[idx].imag
        elif name == "pf":
            out[rows] = s_from[idx].real
        elif name == "qf":
            out[rows] = s_from[idx].imag
        elif name == "pt":
            out[rows] = s_to[idx].real
        else:
            out[rows] = s_to[idx].imag
    return out


def _injection_derivatives(network: Network, v: np.ndarray):
    """dS/dvm and dS/dva for all bus injections, dense n_bus x n_bus."""
    i_inj = network.ybus @ v
    v_norm = np.exp(1j * np.angle(v))
    ds_dvm = (v[:, None] * np.conj(network.ybus * v_norm[None, :]))
    ds_dvm[np.diag_indices_from(ds_dvm)] += np.conj(i_inj) * v_norm
    ds_dva = 1j * v[:, None] * np.conj(
        np.diag(i_inj) - network.ybus * v[None, :]
    )
    return ds_dvm, ds_dva


def eval_H(network: Network, state: StateVector, kinds) -> np.ndarray:
    """Measurement Jacobian (m x n) in the [vm, non-slack va] column order."""
    groups = _group(network, kinds)
    nb = network.n_bus
    v = state.voltages()
    v_norm = np.exp(1j * state.va)
    m = len(kinds)
    h_full = np.zeros((m, 2 * nb))

    if "vm" in groups:
        rows, idx = groups["vm"]
        h_full[rows, idx] = 1.0
    if "va" in groups:
        rows, idx = groups["va"]
        h_full[rows, nb + idx] = 1.0

    if "pinj" in groups or "qinj" in groups:
        ds_dvm, ds_dva = _injection_derivatives(network, v)
        if "pinj" in groups:
            rows, idx = groups["pinj"]
            h_full[rows, :nb] = ds_dvm[idx].real
            h_full[rows, nb:] = ds_dva[idx].real
        if "qinj" in groups:
            rows, idx = groups["qinj"]
            h_full[rows, :nb] = ds_dvm[idx].imag
            h_full[rows, nb:] = ds_dva[idx].imag

    if any(name in groups for name in BRANCH_KINDS):
        f, t = network.f_idx, network.t_idx
        vf, vt = v[f], v[t]
        i_from = network.y_ff * vf + network.y_ft * vt
        i_to = network.y_tf * vf + network.y_tt * vt
        # from side
        dsf_dvmf = v_norm[f] * np.conj(i_from) + vf * np.conj(network.y_ff) * np.conj(v_norm[f])
        dsf_dvmt = vf * np.conj(network.y_ft) * np.conj(v_norm[t])
        dsf_dvaf = 1j * (vf * np.conj(i_from) - vf * np.conj(network.y_ff * vf))
        dsf_dvat = -1j * vf * np.conj(network.y_ft * vt)
        # to side
        dst_dvmt = v_norm[t] * np.conj(i_to) + vt * np.conj(network.y_tt) * np.conj(v_norm[t])
        dst_dvmf = vt * np.conj(network.y_tf) * np.conj(v_norm[f])
        dst_dvat = 1j * (vt * np.conj(i_to) - vt * np.conj(network.y_tt * vt))
        dst_dvaf = -1j * vt * np.conj(network.y_tf * vf)

        sides = {
            "pf": (dsf_dvmf.real, dsf_dvmt.real, dsf_dvaf.real, dsf_dvat.real),
            "qf": (dsf_dvmf.imag, dsf_dvmt.imag, dsf_dvaf.imag, dsf_dvat.imag),
            "pt": (dst_dvmf.real, dst_dvmt.real, dst_dvaf.real, dst_dvat.real),
            "qt": (dst_dvmf.imag, dst_dvmt.imag, dst_dvaf.imag, dst_dvat.imag),
        }
        for name, (d_vmf, d_vmt, d_vaf, d_vat) in sides.items():
            if name not in groups:
                continue
            rows, idx = groups[name]
            h_full[rows, f[idx]] = d_vmf[idx]
            h_full[rows, t[idx]] = d_vmt[idx]
            h_full[rows, nb + f[idx]] = d_vaf[idx]
            h_full[rows, nb + t[idx]] = d_vat[idx]

    return np.delete(h_full, nb + network.slack, axis=1)


# ---------------------------------------------------------------------------
# Conventional Newton power flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PfSpec:
    """Per-bus fixed quantities: (p, vm) at PV, (p, q) at PQ, vm at slack.

    p/q targets are net injections (generation minus load) in per-unit.
    """

    bus_type: tuple[str, ...]
    p_set: np.ndarray
    q_set: np.ndarray
    vm_set: np.ndarray

    def __post_init__(self):
        if self.bus_type.count(SLACK) != 1:
            raise ValueError("exactly one slack bus required")
        for name in ("p_set", "q_set", "vm_set"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


def newton_pf(
    network: Network,
    spec: PfSpec,
    x0: StateVector | None = None,
    tol: float = 1e-8,
    max_iter: int = 30,
) -> StateVector:
    """Full Newton power flow; returns a state with mismatch below tol.

    Raises PowerFlowError on non-convergence within max_iter or on a
    singular Jacobian.
    """
    nb = network.n_bus
    types = np.array(spec.bus_type)
    slack = int(np.flatnonzero(types == SLACK)[0])
    pv = np.flatnonzero(types == PV)
    pq = np.flatnonzero(types == PQ)
    pvpq = np.concatenate([pv, pq])

    if x0 is None:
        x0 = StateVector.flat(network)
    vm = x0.vm.copy()
    va = x0.va.copy()
    vm[slack] = spec.vm_set[slack]
    vm[pv] = spec.vm_set[pv]
    va[slack] = 0.0

    s_target = spec.p_set + 1j * spec.q_set

    for iteration in range(max_iter + 1):
        v = vm * np.exp(1j * va)
        s_calc = v * np.conj(network.ybus @ v)
        mism = s_calc - s_target
        f = np.concatenate([mism[pvpq].real, mism[pq].imag])
        if f.size == 0 or np.max(np.abs(f)) < tol:
            return StateVector(vm, va, slack)
        if iteration == max_iter or not np.all(np.isfinite(f)):
            raise PowerFlowError(
                f"power flow did not converge in {max_iter} iterations "
                f"(max mismatch {np.max(np.abs(f)):.3e} p.u.)"
            )

        ds_dvm, ds_dva = _injection_derivatives(network, v)
        j11 = ds_dva[np.ix_(pvpq, pvpq)].real
        j12 = ds_dvm[np.ix_(pvpq, pq)].real
        j21 = ds_dva[np.ix_(pq, pvpq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError("singular power-flow Jacobian") from exc
        va[pvpq] += dx[: pvpq.size]
        vm[pq] += dx[pvpq.size:]
        if np.any(vm <= 0.0):
            raise PowerFlowError("power flow diverged (non-positive magnitude)")

    raise PowerFlowError("unreachable")


# ---------------------------------------------------------------------------
# Operating points, benchmark restoration, constraint reporting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatingPoint:
    """A state together with the injections and flows it implies."""

    state: StateVector
    p_inj: np.ndarray
    q_inj: np.ndarray
    flows: np.ndarray  # (n_branch, 4): p_from, q_from, p_to, q_to
    p_gen: np.ndarray
    q_gen: np.ndarray


def _split_bus_generation(network: Network, p_bus: np.ndarray, q_bus: np.ndarray):
    """Distribute bus-level generation over co-located units.

    The split is proportional to each unit's p_max (q_max for reactive),
    falling back to an equal split when all capacities at the bus are zero.
    """
    p_gen = np.zeros(network.n_gen)
    q_gen = np.zeros(network.n_gen)
    for bus in network.gen_buses():
        units = network.gens_at(bus)
        p_caps = np.array([network.generators[g].p_max for g in units])
        q_caps = np.array([abs(network.generators[g].q_max) for g in units])
        p_w = p_caps / p_caps.sum() if p_caps.sum() > 0 else np.full(len(units), 1 / len(units))
        q_w = q_caps / q_caps.sum() if q_caps.sum() > 0 else np.full(len(units), 1 / len(units))
        for w_p, w_q, g in zip(p_w, q_w, units):
            p_gen[g] = w_p * p_bus[bus]
            q_gen[g] = w_q * q_bus[bus]
    return p_gen, q_gen


def operating_point(network: Network, state: StateVector) -> OperatingPoint:
    """Injections, flows, and generator outputs implied by a state."""
    v = state.voltages()
    s_inj = v * np.conj(network.ybus @ v)
    s_from, s_to = _branch_flows(network, v)
    flows = np.column_stack([s_from.real, s_from.imag, s_to.real, s_to.imag])
    p_bus_gen = s_inj.real + network.p_load
    q_bus_gen = s_inj.imag + network.q_load
    p_gen, q_gen = _split_bus_generation(network, p_bus_gen, q_bus_gen)
    return OperatingPoint(state, s_inj.real, s_inj.imag, flows, p_gen, q_gen)


def benchmark_restore(network: Network, z: MeasurementSet) -> OperatingPoint:
    """Restore by fixing generator-bus voltage magnitudes and non-slack
    generator active injections from z, then solving a power flow.

    Loads at the remaining (PQ) buses come from the network. Requires a vm
    entry for every generator bus and a pinj entry for every non-slack
    generator bus.
    """
    z.validate(network)
    table = {(k.kind, k.index): z.values[row] for row, k in enumerate(z.kinds)}
    gen_buses = set(int(b) for b in network.gen_buses())
    slack = network.slack

    missing = []
    for bus in sorted(gen_buses):
        if ("vm", bus) not in table:
            missing.append(f"vm[bus {network.buses[bus].id}]")
        if bus != slack and ("pinj", bus) not in table:
            missing.append(f"pinj[bus {network.buses[bus].id}]")
    if missing:
        raise MeasurementError(
            "benchmark restoration needs " + ", ".join(missing)
        )

    bus_type = []
    p_set = np.zeros(network.n_bus)
    q_set = np.zeros(network.n_bus)
    vm_set = np.ones(network.n_bus)
    for bus in range(network.n_bus):
        if bus == slack:
            bus_type.append(SLACK)
            vm_set[bus] = table[("vm", bus)]
        elif bus in gen_buses:
            bus_type.append(PV)
            vm_set[bus] = table[("vm", bus)]
            p_set[bus] = table[("pinj", bus)]
        else:
            bus_type.append(PQ)
            p_set[bus] = -network.p_load[bus]
            q_set[bus] = -network.q_load[bus]

    spec = PfSpec(tuple(bus_type), p_set, q_set, vm_set)
    state = newton_pf(network, spec)
    return operating_point(network, state)


@dataclass(frozen=True)
class ViolationReport:
    """Per-family maximum constraint violation of an operating point.

    Restored points are not forced to satisfy the operating limits, so this
    reports rather than enforces. Generator bounds are checked on bus-level
    aggregate generation; buses without generators count as zero-capacity.
    """

    voltage: float
    generator: float
    flow: float
    angle: float
    worst: dict = field(default_factory=dict)

    def max_violation(self) -> float:
        return max(self.voltage, self.generator, self.flow, self.angle)


def constraint_report(network: Network, op: OperatingPoint) -> ViolationReport:
    vm = op.state.vm
    v_lo = np.array([b.v_min for b in network.buses])
    v_hi = np.array([b.v_max for b in network.buses])
    v_viol = np.maximum(np.maximum(v_lo - vm, vm - v_hi), 0.0)

    p_bus = op.p_inj + network.p_load
    q_bus = op.q_inj + network.q_load
    p_lo = np.zeros(network.n_bus)
    p_hi = np.zeros(network.n_bus)
    q_lo = np.zeros(network.n_bus)
    q_hi = np.zeros(network.n_bus)
    for g, bus in zip(network.generators, network.gen_bus):
        p_lo[bus] += g.p_min
        p_hi[bus] += g.p_max
        q_lo[bus] += g.q_min
        q_hi[bus] += g.q_max
    g_viol = np.maximum.reduce(
        [p_lo - p_bus, p_bus - p_hi, q_lo - q_bus, q_bus - q_hi, np.zeros(network.n_bus)]
    )

    s_from = np.hypot(op.flows[:, 0], op.flows[:, 1])
    s_to = np.hypot(op.flows[:, 2], op.flows[:, 3])
    s_max = np.array([br.s_max for br in network.branches])
    limited = s_max > 0
    f_viol = np.zeros(network.n_branch)
    f_viol[limited] = np.maximum(
        np.maximum(s_from[limited], s_to[limited]) - s_max[limited], 0.0
    )

    dtheta = np.abs(op.state.va[network.f_idx] - op.state.va[network.t_idx])
    t_max = np.array([br.theta_max for br in network.branches])
    a_viol = np.maximum(dtheta - t_max, 0.0)

    def _worst(values, describe):
        if values.size == 0 or values.max() <= 0:
            return None
        return describe(int(values.argmax()))

    worst = {
        "voltage": _worst(v_viol, lambda i: f"bus {network.buses[i].id}"),
        "generator": _worst(g_viol, lambda i: f"bus {network.buses[i].id}"),
        "flow": _worst(
            f_viol,
            lambda e: f"branch {network.branches[e].from_bus}-{network.branches[e].to_bus}",
        ),
        "angle": _worst(
            a_viol,
            lambda e: f"branch {network.branches[e].from_bus}-{network.branches[e].to_bus}",
        ),
    }
    return ViolationReport(
        voltage=float(v_viol.max(initial=0.0)),
        generator=float(g_viol.max(initial=0.0)),
        flow=float(f_viol.max(initial=0.0)),
        angle=float(a_viol.max(initial=0.0)),
        worst=worst,
    )
