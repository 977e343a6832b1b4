"""Analytic sensitivity of the restored state to the diagonal weights.

Evaluated at a converged restoration with the measurement Jacobian held
fixed there. With A = (H' W H)^-1 H' and the projected residual
rho = r - H A W r, the derivative of the state with respect to weight i is
the i-th column of A scaled by rho_i. Only the diagonal-weight slice is
computed; when the converged residual is zero the sensitivity vanishes.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .acpf import MeasurementSet, StateVector, eval_H, eval_h
from .netmodel import Network
from .wls import UnobservableError, check_weights


def solution_sensitivity(
    network: Network,
    z: MeasurementSet,
    weights: np.ndarray,
    x_r: StateVector,
) -> np.ndarray:
    """Sensitivity matrix of shape (n_state, m measurements) at x_r.

    x_r must be a converged restoration for (z, weights); the result is
    homogeneous of degree -1 in the weights.
    """
    z.validate(network)
    weights = check_weights(weights, z.m)
    residual = z.values - eval_h(network, x_r, z.kinds)
    h_mat = eval_H(network, x_r, z.kinds)
    normal = (h_mat * weights[:, None]).T @ h_mat
    try:
        cho = scipy.linalg.cho_factor(normal, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise UnobservableError("singular normal matrix") from exc
    a_mat = scipy.linalg.cho_solve(cho, h_mat.T, check_finite=False)
    projected = residual - h_mat @ (a_mat @ (weights * residual))
    return a_mat * projected[None, :]
