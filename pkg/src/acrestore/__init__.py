"""Restore AC-power-flow-feasible operating points from relaxed or
approximated optimal power flow solutions, with offline weight training."""

from .netmodel import (
    Branch,
    Bus,
    Generator,
    Network,
    branch_two_port,
    load_bundled_case,
    load_case,
    parse_case,
    serialize_case,
)
from .acpf import (
    MeasurementKind,
    MeasurementSet,
    OperatingPoint,
    PfSpec,
    StateVector,
    benchmark_restore,
    canonical_kinds,
    constraint_report,
    eval_H,
    eval_h,
    newton_pf,
    operating_point,
)
from .wls import WlsResult, wls_restore
from .sens import solution_sensitivity

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "Bus",
    "Generator",
    "MeasurementKind",
    "MeasurementSet",
    "Network",
    "OperatingPoint",
    "PfSpec",
    "StateVector",
    "WlsResult",
    "benchmark_restore",
    "branch_two_port",
    "canonical_kinds",
    "constraint_report",
    "eval_H",
    "eval_h",
    "load_bundled_case",
    "load_case",
    "newton_pf",
    "operating_point",
    "parse_case",
    "serialize_case",
    "solution_sensitivity",
    "wls_restore",
]
