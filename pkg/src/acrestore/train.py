"""Offline weight training: loss, gradient accumulation, and Adam updates.

Training minimizes the squared voltage-space distance between restored
states and ground-truth states over a scenario dataset by adjusting the
diagonal measurement weights. Per-record restorations are independent, so
the gradient pass can fan out over threads; the reduction is performed in
record order, making results identical in sequential and threaded runs.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acpf import MeasurementSet, StateVector
from .netmodel import Network
from .sens import solution_sensitivity
from .wls import W_FLOOR, wls_restore

logger = logging.getLogger(__name__)

VOLTAGE_INIT_WEIGHT = 1e4
POWER_INIT_WEIGHT = 1e3


class TrainingError(RuntimeError):
    """Too many per-record solver failures to trust the gradient."""


@dataclass(frozen=True)
class ScenarioRecord:
    """One training/test sample: perturbed loads, ground truth, measurements."""

    p_load: np.ndarray
    q_load: np.ndarray
    x_ac: StateVector
    z: MeasurementSet
    source_tag: str = "synthetic"
    index: int = 0


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iter: int = 200
    w_init: np.ndarray | None = None
    w_floor: float = W_FLOOR
    rng_seed: int = 0
    batch_size: int | None = None  # None = full batch
    threads: int = 1

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("moment decay factors must lie in (0, 1)")
        if self.eta <= 0.0:
            raise ValueError("learning rate must be positive")


@dataclass
class TrainTrace:
    """Per-iteration loss, gradient max-norm, and periodic weight snapshots."""

    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    snapshot_every: int = 50
    snapshots: list = field(default_factory=list)  # (iteration, weights)

    def record(self, iteration: int, loss_value: float, grad: np.ndarray, w: np.ndarray):
        self.loss.append(loss_value)
        self.grad_norm.append(float(np.max(np.abs(grad))) if grad.size else 0.0)
        if self.snapshot_every and iteration % self.snapshot_every == 0:
            self.snapshots.append((iteration, w.copy()))


def check_layout(dataset: list[ScenarioRecord]) -> tuple:
    """All records of a dataset must share one measurement-kind layout."""
    if not dataset:
        raise ValueError("empty dataset")
    layout = dataset[0].z.kinds
    for rec in dataset[1:]:
        if rec.z.kinds != layout:
            raise ValueError(
                f"record {rec.index}: measurement layout differs from the first record"
            )
    return layout


def default_initial_weights(kinds) -> np.ndarray:
    """Heuristic starting weights: 1e4 on voltage entries, 1e3 on power entries."""
    return np.array(
        [VOLTAGE_INIT_WEIGHT if k.is_voltage() else POWER_INIT_WEIGHT for k in kinds]
    )


def loss(dataset: list[ScenarioRecord], restored: list[StateVector]) -> float:
    """Summed squared voltage distance, normalized by the state dimension.

    Magnitudes in per-unit and angles in radians contribute alike.
    """
    if len(dataset) != len(restored):
        raise ValueError("one restored state per record required")
    total = 0.0
    denom = None
    for rec, state in zip(dataset, restored):
        diff = state.as_vector() - rec.x_ac.as_vector()
        if denom is None:
            denom = diff.size
        elif diff.size != denom:
            raise ValueError("state dimension differs between records")
        total += float(diff @ diff)
    return total / denom


def _restore_and_weigh(network, rec, weights, tol, max_iter):
    result = wls_restore(network, rec.z, weights, tol=tol, max_iter=max_iter)
    if not result.converged:
        raise RuntimeError("restoration did not converge")
    sens = solution_sensitivity(network, rec.z, weights, result.state)
    mismatch = result.state.as_vector() - rec.x_ac.as_vector()
    return sens.T @ mismatch, result.state


def _gradient_pass(
    network: Network,
    dataset: list[ScenarioRecord],
    weights: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 50,
    threads: int = 1,
):
    """Gradient over the dataset plus the restored states used to compute it.

    Failed records are skipped with a log entry; more than 10% failures
    aborts. Contributions are reduced in record order so threaded and
    sequential runs agree exactly.
    """
    check_layout(dataset)
    per_record: list = [None] * len(dataset)

    def work(i):
        try:
            per_record[i] = _restore_and_weigh(
                network, dataset[i], weights, tol, max_iter
            )
        except Exception as exc:  # noqa: BLE001 - any solver failure skips the record
            logger.warning("record %d skipped: %s", dataset[i].index, exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(dataset))))
    else:
        for i in range(len(dataset)):
            work(i)

    failures = sum(1 for item in per_record if item is None)
    if failures > 0.10 * len(dataset):
        raise TrainingError(
            f"{failures} of {len(dataset)} records failed restoration"
        )

    grad = np.zeros(weights.size)
    survivors, states = [], []
    for rec, item in zip(dataset, per_record):
        if item is None:
            continue
        grad += item[0]
        survivors.append(rec)
        states.append(item[1])
    return grad, survivors, states


def accumulate_gradient(
    network: Network,
    dataset: list[ScenarioRecord],
    weights: np.ndarray,
    threads: int = 1,
) -> np.ndarray:
    """Summed loss gradient with respect to the weights over the dataset."""
    grad, _, _ = _gradient_pass(network, dataset, weights, threads=threads)
    return grad


def adam_step(
    w: np.ndarray,
    m_t: np.ndarray,
    v_t: np.ndarray,
    g: np.ndarray,
    t: int,
    config: TrainConfig,
):
    """One Adam update of the weights; returns (w, m_t, v_t) at step t >= 1."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    m_t = config.beta1 * m_t + (1.0 - config.beta1) * g
    v_t = config.beta2 * v_t + (1.0 - config.beta2) * g * g
    m_hat = m_t / (1.0 - config.beta1**t)
    v_hat = v_t / (1.0 - config.beta2**t)
    w = w - config.eta * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return np.maximum(w, config.w_floor), m_t, v_t


def train_weights(
    network: Network,
    train_set: list[ScenarioRecord],
    config: TrainConfig,
    snapshot_every: int = 50,
) -> tuple[np.ndarray, TrainTrace]:
    """Run the full-batch gradient-descent training loop.

    Each outer iteration restores every (batch) record with the current
    weights, accumulates the analytic gradient, applies one Adam update,
    and records the loss of the restorations that produced the gradient.
    """
    layout = check_layout(train_set)
    w = (
        np.asarray(config.w_init, dtype=float).copy()
        if config.w_init is not None
        else default_initial_weights(layout)
    )
    if w.size != len(layout):
        raise ValueError(f"{w.size} initial weights for {len(layout)} measurements")
    m_t = np.zeros_like(w)
    v_t = np.zeros_like(w)
    trace = TrainTrace(snapshot_every=snapshot_every)
    rng = np.random.default_rng(config.rng_seed)

    for t in range(1, config.max_iter + 1):
        if config.batch_size and config.batch_size < len(train_set):
            pick = rng.choice(len(train_set), size=config.batch_size, replace=False)
            batch = [train_set[i] for i in sorted(pick)]
        else:
            batch = train_set
        grad, survivors, states = _gradient_pass(
            network, batch, w, threads=config.threads
        )
        trace.record(t, loss(survivors, states), grad, w)
        w, m_t, v_t = adam_step(w, m_t, v_t, grad, t, config)

    return w, trace
