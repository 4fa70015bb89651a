"""Ensemble prediction over a snapshot prediction cube and the validation
error functionals minimized by the selectors.

Every functional accepts an optional :class:`EvalCounter`, incremented by the
number of member-snapshot evaluations the call performs. Errors are sums of
squares; normalization is left to :mod:`snapens.weighting_eval`.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "PredictionCube",
    "Selection",
    "EvalCounter",
    "ensemble_predict",
    "ensemble_sse",
    "oob_ensemble_sse",
    "per_net_val_sse",
    "validation_error",
    "save_cube",
    "load_cube",
    "save_selection",
    "load_selection",
]


class EvalCounter:
    def __init__(self):
        self.network_evals = 0

    def add(self, k):
        self.network_evals += int(k)

    def __repr__(self):
        return f"EvalCounter(network_evals={self.network_evals})"


def _count(counter, k):
    if counter is not None:
        counter.add(k)


class PredictionCube:
    """Read-only predictions ``values[net, snapshot, point]`` with targets.

    With ``oob_weights`` (P x M, rows normalized over the nets that did not
    train on the point) the cube is in out-of-bag mode; otherwise every point
    belongs to one shared external validation set.
    """

    def __init__(self, values, point_targets, oob_weights=None):
        values = np.array(values, dtype=float)
        if values.ndim != 3:
            raise ValueError("cube values must be a 3-d array [net, snapshot, point]")
        targets = np.array(point_targets, dtype=float).reshape(-1)
        if targets.shape[0] != values.shape[2]:
            raise ValueError("one target per cube point required")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(targets))):
            raise ValueError("cube contains non-finite values")
        if oob_weights is not None:
            oob_weights = np.array(oob_weights, dtype=float)
            if oob_weights.shape != (values.shape[2], values.shape[0]):
                raise ValueError("oob_weights must have shape (points, nets)")
            oob_weights.setflags(write=False)
        values.setflags(write=False)
        targets.setflags(write=False)
        self.values = values
        self.point_targets = targets
        self.oob_weights = oob_weights

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_nets(self):
        return self.values.shape[0]

    @property
    def n_snapshots(self):
        return self.values.shape[1]

    @property
    def n_points(self):
        return self.values.shape[2]

    @property
    def mode(self):
        return "external" if self.oob_weights is None else "oob"

    @property
    def gamma(self):
        """Boolean (P, M) membership: point p is validation data for net n."""
        if self.oob_weights is None:
            return np.ones((self.n_points, self.n_nets), dtype=bool)
        return self.oob_weights > 0

    def validation_points(self, net):
        if self.oob_weights is None:
            return np.arange(self.n_points)
        return np.flatnonzero(self.oob_weights[:, net] > 0)

    def member_rows(self, tau):
        """(M, P) predictions of each net at its selected snapshot."""
        tau = np.asarray(tau, dtype=np.intp)
        return self.values[np.arange(self.n_nets), tau, :]

    def scaled(self, c):
        """Copy with targets and predictions multiplied by ``c``."""
        return PredictionCube(self.values * c, self.point_targets * c, self.oob_weights)

    def subset_points(self, idx, oob_weights=None):
        idx = np.asarray(idx, dtype=np.intp)
        return PredictionCube(self.values[:, :, idx], self.point_targets[idx], oob_weights)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.values).tobytes())
        h.update(np.ascontiguousarray(self.point_targets).tobytes())
        if self.oob_weights is not None:
            h.update(np.ascontiguousarray(self.oob_weights).tobytes())
        return h.hexdigest()


@dataclass
class Selection:
    """Snapshot index per net plus aggregation weights."""

    tau: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=np.intp).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.tau.shape != self.weights.shape:
            raise ValueError("tau and weights must have the same length")
        if np.any(self.tau < 0):
            raise ValueError("negative snapshot index")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")

    @classmethod
    def uniform(cls, tau):
        tau = np.asarray(tau, dtype=np.intp).reshape(-1)
        return cls(tau, np.full(tau.shape[0], 1.0 / tau.shape[0]))

    def __len__(self):
        return self.tau.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Selection):
            return NotImplemented
        return np.array_equal(self.tau, other.tau) and np.array_equal(self.weights, other.weights)

    def check(self, cube: PredictionCube):
        if len(self) != cube.n_nets:
            raise ValueError(f"selection has {len(self)} nets, cube has {cube.n_nets}")
        if np.any(self.tau >= cube.n_snapshots):
            raise IndexError("snapshot index out of range for cube")


def ensemble_predict(cube: PredictionCube, sel: Selection) -> np.ndarray:
    sel.check(cube)
    return sel.weights @ cube.member_rows(sel.tau)


def ensemble_sse(cube: PredictionCube, sel: Selection, counter=None) -> float:
    resid = cube.point_targets - ensemble_predict(cube, sel)
    _count(counter, cube.n_nets)
    return float(resid @ resid)


def oob_ensemble_sse(cube: PredictionCube, tau, counter=None) -> float:
    """Out-of-bag error: each point is predicted by the nets that never saw it.

    Points covered by no net have an all-zero weight row and are skipped.
    """
    if cube.oob_weights is None:
        raise ValueError("cube has no out-of-bag weights")
    tau = np.asarray(tau, dtype=np.intp)
    if tau.shape != (cube.n_nets,) or np.any(tau >= cube.n_snapshots) or np.any(tau < 0):
        raise IndexError("invalid snapshot vector for cube")
    W = cube.oob_weights
    rows = cube.member_rows(tau)
    phi = np.einsum("pn,np->p", W, rows)
    covered = W.sum(axis=1) > 0
    resid = (cube.point_targets - phi)[covered]
    _count(counter, cube.n_nets)
    return float(resid @ resid)


def per_net_val_sse(cube: PredictionCube, net: int, counter=None) -> np.ndarray:
    """Validation SSE of every snapshot of one net, on that net's validation points."""
    pts = cube.validation_points(net)
    resid = cube.values[net][:, pts] - cube.point_targets[pts]
    _count(counter, cube.n_snapshots)
    return np.einsum("tp,tp->t", resid, resid)


def validation_error(cube: PredictionCube, tau, counter=None) -> float:
    """Ensemble validation error of a snapshot vector under the cube's mode."""
    if cube.oob_weights is not None:
        return oob_ensemble_sse(cube, tau, counter)
    return ensemble_sse(cube, Selection.uniform(tau), counter)


# --------------------------------------------------------------------------
# persistence
#
# cube file: magic b"PCUB", version u32, M u32, T u32, P u32, has_oob u32,
#            values (M*T*P, C order), targets (P), [oob_weights (P*M)];
#            all little-endian f64

_CUBE_MAGIC = b"PCUB"


def save_cube(cube: PredictionCube, path):
    M, T, P = cube.shape
    with Path(path).open("wb") as fh:
        fh.write(_CUBE_MAGIC)
        fh.write(struct.pack("<5I", 1, M, T, P, int(cube.oob_weights is not None)))
        fh.write(cube.values.astype("<f8").tobytes())
        fh.write(cube.point_targets.astype("<f8").tobytes())
        if cube.oob_weights is not None:
            fh.write(cube.oob_weights.astype("<f8").tobytes())


def load_cube(path) -> PredictionCube:
    raw = Path(path).read_bytes()
    if raw[:4] != _CUBE_MAGIC:
        raise ValueError(f"{path}: not a prediction cube file")
    version, M, T, P, has_oob = struct.unpack_from("<5I", raw, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    off = 24
    values = np.frombuffer(raw, "<f8", M * T * P, off).reshape(M, T, P)
    off += values.nbytes
    targets = np.frombuffer(raw, "<f8", P, off)
    off += targets.nbytes
    w = None
    if has_oob:
        w = np.frombuffer(raw, "<f8", P * M, off).reshape(P, M)
    return PredictionCube(values, targets, w)


def save_selection(sel: Selection, path):
    """Text lines ``net_index tau weight``."""
    with Path(path).open("w") as fh:
        for n, (t, w) in enumerate(zip(sel.tau, sel.weights)):
            fh.write(f"{n} {int(t)} {float(w)!r}\n")


def load_selection(path) -> Selection:
    entries = []
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            n, t, w = line.split()
            entries.append((int(n), int(t), float(w)))
    entries.sort()
    if [e[0] for e in entries] != list(range(len(entries))):
        raise ValueError(f"{path}: net indices must be 0..M-1")
    return Selection([e[1] for e in entries], [e[2] for e in entries])
