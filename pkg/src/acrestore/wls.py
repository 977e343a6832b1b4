"""Gauss-Newton weighted least squares restoration.

Finds the voltage state whose modeled measurements best match a tagged
measurement vector under positive diagonal weights. The normal-equation
step is solved with a dense Cholesky factorization (the weighted normal
matrix is symmetric positive definite whenever the configuration is
observable) with an LU fallback for numerically indefinite cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .acpf import MeasurementSet, StateVector, eval_H, eval_h
from .netmodel import Network

W_FLOOR = 1e-8

# a step is rejected and halved when it inflates the objective this much
_DAMP_RATIO = 10.0
_MAX_HALVINGS = 5


class UnobservableError(RuntimeError):
    """The weighted normal matrix is singular for this measurement layout."""


@dataclass(frozen=True)
class WlsResult:
    state: StateVector
    residual: np.ndarray  # z - h(state)
    objective: float
    iterations: int
    converged: bool
    objective_trace: tuple = ()
    state_trace: tuple = ()


def check_weights(weights: np.ndarray, m: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.size != m:
        raise ValueError(f"{weights.size} weights for {m} measurements")
    if np.any(weights < W_FLOOR):
        raise ValueError(f"weights must be >= {W_FLOOR}")
    return weights


def _solve_normal(h_mat: np.ndarray, weights: np.ndarray, rhs_vec: np.ndarray,
                  labels) -> np.ndarray:
    """Solve (H' W H) x = rhs, raising UnobservableError when singular.

    The normal matrix is Jacobi-scaled before the Cholesky factorization and
    the solution is polished with one step of iterative refinement; both
    reduce the conditioning penalty of the normal-equation approach.
    """
    normal = (h_mat * weights[:, None]).T @ h_mat
    diag = np.diag(normal).copy()
    singular = diag <= 0.0
    if singular.any():
        j = int(np.flatnonzero(singular)[0])
        raise UnobservableError(
            f"no measurement weight acts on state entry {labels[j]}"
        )
    scale = 1.0 / np.sqrt(diag)
    scaled = normal * scale[:, None] * scale[None, :]
    rhs_scaled = rhs_vec * scale
    try:
        cho = scipy.linalg.cho_factor(scaled, check_finite=False)
        y = scipy.linalg.cho_solve(cho, rhs_scaled, check_finite=False)
        resid = rhs_scaled - scaled @ y
        y = y + scipy.linalg.cho_solve(cho, resid, check_finite=False)
        return y * scale
    except scipy.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(scaled)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1.0):
        null = eigvecs[:, 0]
        order = np.argsort(-np.abs(null))[:3]
        dominant = ", ".join(f"{labels[j]} ({null[j]:+.2f})" for j in order)
        raise UnobservableError(
            "singular normal matrix; unobservable direction dominated by " + dominant
        )
    # indefinite only through rounding: fall back to a pivoted solve
    lu = scipy.linalg.lu_factor(scaled, check_finite=False)
    return scipy.linalg.lu_solve(lu, rhs_scaled, check_finite=False) * scale


def wls_restore(
    network: Network,
    z: MeasurementSet,
    weights: np.ndarray,
    x0: StateVector | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
    keep_iterates: bool = False,
) -> WlsResult:
    """Iterate Gauss-Newton steps on the weighted least squares objective.

    Starts from a flat state unless x0 is given. Convergence means the
    applied step fell below tol in max-norm; non-convergence is reported in
    the result flag rather than raised. The step direction is invariant to
    uniform scaling of the weights; a step that inflates the objective by
    more than 10x is halved (at most 5 times) before being applied.
    """
    z.validate(network)
    weights = check_weights(weights, z.m)
    if z.m < network.n_state:
        raise UnobservableError(
            f"{z.m} measurements cannot determine {network.n_state} states"
        )
    labels = network.state_labels()
    # the step is homogeneous of degree zero in the weights; dividing by the
    # largest weight up front makes that invariance hold in floating point
    # and keeps the normal matrix well scaled
    w_scale = float(weights.max())
    weights = weights / w_scale

    state = x0 if x0 is not None else StateVector.flat(network)
    residual = z.values - eval_h(network, state, z.kinds)
    objective = float(residual @ (weights * residual))
    obj_trace = [objective]
    state_trace = [state] if keep_iterates else []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        h_mat = eval_H(network, state, z.kinds)
        grad = h_mat.T @ (weights * residual)
        step = _solve_normal(h_mat, weights, grad, labels)

        x_vec = state.as_vector()
        candidate = None
        for _ in range(_MAX_HALVINGS + 1):
            try:
                trial = StateVector.from_vector(x_vec + step, state.slack)
            except ValueError:  # step left the positive-magnitude region
                step = step / 2.0
                continue
            cand_residual = z.values - eval_h(network, trial, z.kinds)
            cand_objective = float(cand_residual @ (weights * cand_residual))
            candidate = trial
            if cand_objective <= _DAMP_RATIO * objective:
                break
            step = step / 2.0
        if candidate is None:
            break

        state, residual, objective = candidate, cand_residual, cand_objective
        obj_trace.append(objective)
        if keep_iterates:
            state_trace.append(state)
        if np.max(np.abs(step)) < tol:
            converged = True
            break

    return WlsResult(
        state=state,
        residual=residual,
        objective=objective * w_scale,
        iterations=iterations,
        converged=converged,
        objective_trace=tuple(value * w_scale for value in obj_trace),
        state_trace=tuple(state_trace),
    )
