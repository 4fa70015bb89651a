"""Snapshot selection algorithms: Bagging, Epoch, NeuralBAG, SECA and SimAnn.

Each selector maps a :class:`PredictionCube` to a :class:`Selection` with
uniform weights. The validation scenario is taken from the cube: a cube
carrying out-of-bag weights is validated on each net's out-of-bag points,
otherwise all cube points form one shared validation set. Ties in every
argmin go to the smallest snapshot index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .ensemble_core import (
    PredictionCube,
    Selection,
    per_net_val_sse,
    validation_error,
)

__all__ = [
    "SimAnnConfig",
    "select_bagging",
    "select_epoch",
    "select_neuralbag",
    "select_seca",
    "select_simann",
    "SELECTORS",
]


def _check_mode(cube: PredictionCube, mode):
    if mode is None:
        return cube.mode
    mode = getattr(mode, "mode", mode)
    if mode == "oob" and cube.oob_weights is None:
        raise ValueError("out-of-bag selection needs a cube with oob_weights")
    if mode == "external" and cube.oob_weights is not None:
        raise ValueError("external selection needs a cube without oob_weights")
    return mode


def _count(counter, k):
    if counter is not None:
        counter.add(k)


def select_bagging(cube: PredictionCube, mode=None, counter=None) -> Selection:
    """Each net stopped at the minimum of its own validation error."""
    _check_mode(cube, mode)
    tau = [int(np.argmin(per_net_val_sse(cube, n, counter))) for n in range(cube.n_nets)]
    return Selection.uniform(tau)


def select_epoch(cube: PredictionCube, mode=None, counter=None) -> Selection:
    """One common snapshot minimizing the ensemble validation error."""
    _check_mode(cube, mode)
    M, T = cube.n_nets, cube.n_snapshots
    errors = [validation_error(cube, np.full(M, t), counter) for t in range(T)]
    return Selection.uniform(np.full(M, int(np.argmin(errors))))


def select_neuralbag(cube: PredictionCube, mode=None, counter=None) -> Selection:
    """Net n stops where the out-of-bag ensemble, all nets at the same
    snapshot, has minimum error on net n's out-of-bag points."""
    mode = _check_mode(cube, mode)
    if mode != "oob":
        raise ValueError("NeuralBAG is defined for out-of-bag validation only")
    M, T = cube.n_nets, cube.n_snapshots
    W = cube.oob_weights
    t_all = cube.point_targets
    tau = np.empty(M, dtype=np.intp)
    for n in range(M):
        pts = cube.validation_points(n)
        Wn = W[pts]
        errs = np.empty(T)
        for t in range(T):
            phi = np.einsum("pm,mp->p", Wn, cube.values[:, t, pts])
            _count(counter, M)
            resid = t_all[pts] - phi
            errs[t] = resid @ resid
        tau[n] = int(np.argmin(errs))
    return Selection.uniform(tau)


def select_seca(cube: PredictionCube, mode=None, order=None, counter=None) -> Selection:
    """Stepwise construction: member m is stopped where the simple average of
    members 1..m has minimum error on member m's validation points, earlier
    members frozen at their chosen snapshots.

    ``order`` is a permutation of net indices (default: index order).
    """
    _check_mode(cube, mode)
    M, T = cube.n_nets, cube.n_snapshots
    order = np.arange(M) if order is None else np.asarray(order, dtype=np.intp)
    if sorted(order.tolist()) != list(range(M)):
        raise ValueError("order must be a permutation of the net indices")
    tau = np.zeros(M, dtype=np.intp)
    partial = np.zeros(cube.n_points)  # sum of frozen members' predictions
    for m, net in enumerate(order, start=1):
        pts = cube.validation_points(net)
        cand = (partial[pts][None, :] + cube.values[net][:, pts]) / m
        _count(counter, m * T)
        resid = cand - cube.point_targets[pts]
        errs = np.einsum("tp,tp->t", resid, resid)
        tau[net] = int(np.argmin(errs))
        partial += cube.values[net, tau[net]]
    return Selection.uniform(tau)


@dataclass
class SimAnnConfig:
    """Annealing schedule; ``steps=None`` means ``p * T`` for the cube at hand."""

    p: int = 15
    steps: int | None = None
    delta_fraction: float = 1.0 / 20.0
    cooling_base: float = 0.995
    seed: int | None = 0

    def __post_init__(self):
        if self.steps is not None and self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not 0 < self.cooling_base < 1:
            raise ValueError("cooling_base must lie in (0, 1)")

    def n_steps(self, T):
        return self.p * T if self.steps is None else self.steps


def select_simann(
    cube: PredictionCube, mode=None, cfg: SimAnnConfig | None = None, start=None, counter=None
) -> Selection:
    """Simulated annealing over the per-net snapshot vector.

    Nets are visited in a cyclic sweep. A move shifts one net by
    ``r * T * delta_fraction`` snapshots (r uniform in [-1, 1], rounded, at
    least one index, clamped to the valid range). Uphill moves are accepted
    with probability ``1 / (1 + exp(beta * dE))`` where
    ``1/beta = cooling_base**q * E(start) / 2`` at step q. The lowest-error
    vector ever visited is returned. ``start`` defaults to the Bagging
    selection; the counter records the candidate evaluations only.
    """
    _check_mode(cube, mode)
    cfg = cfg or SimAnnConfig()
    M, T = cube.n_nets, cube.n_snapshots
    if start is None:
        start = select_bagging(cube)
    tau = np.array(getattr(start, "tau", start), dtype=np.intp)
    if tau.shape != (M,) or np.any(tau < 0) or np.any(tau >= T):
        raise ValueError("invalid start selection")
    steps = cfg.n_steps(T)
    if steps == 0 or T == 1:
        return Selection.uniform(tau)

    rng = np.random.default_rng(cfg.seed)
    energy = validation_error(cube, tau)
    temp0 = energy / 2.0
    best, best_energy = tau.copy(), energy
    span = T * cfg.delta_fraction
    for q in range(1, steps + 1):
        n = (q - 1) % M
        r = rng.uniform(-1.0, 1.0)
        shift = int(round(r * span))
        if shift == 0:
            shift = 1 if r >= 0 else -1
        proposal = tau.copy()
        proposal[n] = min(max(tau[n] + shift, 0), T - 1)
        new_energy = validation_error(cube, proposal, counter)
        delta = new_energy - energy
        u = rng.random()
        if delta < 0:
            accept = True
        else:
            temp = cfg.cooling_base**q * temp0
            accept = temp > 0 and u < expit(-delta / temp)
        if accept:
            tau, energy = proposal, new_energy
            if energy < best_energy:
                best, best_energy = tau.copy(), energy
    return Selection.uniform(best)


SELECTORS = {
    "bagging": select_bagging,
    "epoch": select_epoch,
    "neuralbag": select_neuralbag,
    "seca": select_seca,
    "simann": select_simann,
}
