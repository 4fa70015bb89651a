"""Single-hidden-layer tanh perceptrons trained with snapshot checkpoints.

Training and the gradient used by the finite-difference checks share one
compiled routine (``_accumulate_grad``). Nets are trained in standardized
input/target units; the store keeps the affine maps back to raw units.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .data_gen import RegressionDataset

__all__ = [
    "MLPParams",
    "TrainConfig",
    "SnapshotStore",
    "TrainingDivergence",
    "init_params",
    "forward",
    "loss_and_gradient",
    "train_with_snapshots",
    "train_many",
    "predict_cube",
    "save_store",
    "load_store",
]


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch, net=0):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}, net {net}")
        self.epoch = epoch
        self.net = net


@dataclass
class MLPParams:
    hidden_weights: np.ndarray  # (h, d)
    hidden_biases: np.ndarray  # (h,)
    output_weights: np.ndarray  # (h,)
    output_bias: float

    def __post_init__(self):
        self.hidden_weights = np.atleast_2d(np.asarray(self.hidden_weights, dtype=float))
        self.hidden_biases = np.asarray(self.hidden_biases, dtype=float).reshape(-1)
        self.output_weights = np.asarray(self.output_weights, dtype=float).reshape(-1)
        self.output_bias = float(self.output_bias)
        h = self.hidden_weights.shape[0]
        if self.hidden_biases.shape != (h,) or self.output_weights.shape != (h,):
            raise ValueError("inconsistent parameter shapes")

    @property
    def input_dim(self):
        return self.hidden_weights.shape[1]

    @property
    def hidden_units(self):
        return self.hidden_weights.shape[0]

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [
                self.hidden_weights.ravel(),
                self.hidden_biases,
                self.output_weights,
                [self.output_bias],
            ]
        )

    @classmethod
    def unflatten(cls, vec, d, h):
        vec = np.asarray(vec, dtype=float)
        if vec.size != h * d + 2 * h + 1:
            raise ValueError("parameter vector has the wrong length")
        return cls(
            vec[: h * d].reshape(h, d).copy(),
            vec[h * d : h * d + h].copy(),
            vec[h * d + h : h * d + 2 * h].copy(),
            vec[-1],
        )

    def __eq__(self, other):
        if not isinstance(other, MLPParams):
            return NotImplemented
        return np.array_equal(self.flatten(), other.flatten())


@dataclass
class TrainConfig:
    hidden_units: int
    total_epochs: int = 2000
    snapshot_count: int = 200
    learning_rate: float = 0.01
    batch_mode: str = "full-batch"
    seed: int = 0
    standardize: bool = True
    init_scale: float = 1.0

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be at least 1")
        if self.snapshot_count < 1 or self.total_epochs < 1:
            raise ValueError("epochs and snapshot count must be positive")
        if self.total_epochs % self.snapshot_count:
            raise ValueError("total_epochs must be a multiple of snapshot_count")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.batch_mode not in ("full-batch", "per-pattern"):
            raise ValueError(f"unknown batch mode {self.batch_mode!r}")

    @property
    def snapshot_interval(self):
        return self.total_epochs // self.snapshot_count


@dataclass
class SnapshotStore:
    """T parameter snapshots of one training run.

    Parameters live in the standardized space the net was trained in; the
    affine maps ``x_shift/x_scale`` (inputs) and ``y_shift/y_scale`` (target)
    convert to and from raw units. ``train_losses`` are raw-unit MSEs on the
    training set at each snapshot.
    """

    snapshots: list
    epoch_of: np.ndarray
    train_losses: np.ndarray
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: float = 0.0
    y_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.epoch_of = np.asarray(self.epoch_of, dtype=np.int64)
        self.train_losses = np.asarray(self.train_losses, dtype=float)
        self.x_shift = np.asarray(self.x_shift, dtype=float)
        self.x_scale = np.asarray(self.x_scale, dtype=float)
        if len(self.snapshots) != len(self.epoch_of):
            raise ValueError("one epoch number per snapshot required")
        if np.any(np.diff(self.epoch_of) <= 0):
            raise ValueError("snapshot epochs must be strictly increasing")

    def __len__(self):
        return len(self.snapshots)

    @property
    def input_dim(self):
        return self.snapshots[0].input_dim

    @property
    def hidden_units(self):
        return self.snapshots[0].hidden_units

    def predict(self, index, X) -> np.ndarray:
        """Raw-unit predictions of snapshot ``index`` on rows of ``X``."""
        Z = (np.atleast_2d(np.asarray(X, dtype=float)) - self.x_shift) / self.x_scale
        return self.y_shift + self.y_scale * forward(self.snapshots[index], Z)

    def __eq__(self, other):
        if not isinstance(other, SnapshotStore):
            return NotImplemented
        return (
            len(self) == len(other)
            and all(a == b for a, b in zip(self.snapshots, other.snapshots))
            and np.array_equal(self.epoch_of, other.epoch_of)
            and np.array_equal(self.train_losses, other.train_losses)
            and np.array_equal(self.x_shift, other.x_shift)
            and np.array_equal(self.x_scale, other.x_scale)
            and self.y_shift == other.y_shift
            and self.y_scale == other.y_scale
        )


def init_params(d, h, seed=None, scale=1.0) -> MLPParams:
    """Uniform draws on [-scale/sqrt(fan_in), scale/sqrt(fan_in)] for each layer."""
    if d < 1 or h < 1:
        raise ValueError("d and h must be at least 1")
    rng = np.random.default_rng(seed)
    b_in = scale / np.sqrt(d)
    b_out = scale / np.sqrt(h)
    return MLPParams(
        rng.uniform(-b_in, b_in, (h, d)),
        rng.uniform(-b_in, b_in, h),
        rng.uniform(-b_out, b_out, h),
        rng.uniform(-b_out, b_out),
    )


def forward(params: MLPParams, x):
    """Network output for one input vector (returns a float) or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.ascontiguousarray(np.atleast_2d(x))
    if X.shape[1] != params.input_dim:
        raise ValueError(f"expected {params.input_dim} inputs, got {X.shape[1]}")
    out = np.empty(X.shape[0])
    _forward_rows(
        X,
        params.hidden_weights,
        params.hidden_biases,
        params.output_weights,
        params.output_bias,
        out,
    )
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# compiled core
#
# Every loop accumulates in the same order, so a row's output does not depend
# on which other rows are evaluated with it.


@numba.njit(cache=True)
def _forward_rows(X, W1, b1, W2, b2, out):
    n, d = X.shape
    h = W1.shape[0]
    for i in range(n):
        o = b2
        for j in range(h):
            s = b1[j]
            for q in range(d):
                s += W1[j, q] * X[i, q]
            o += W2[j] * np.tanh(s)
        out[i] = o


@numba.njit(cache=True)
def _accumulate_grad(X, y, W1, b1, W2, b2, gW1, gb1, gW2, gb2, scale):
    """Add ``scale * d/dparams sum_i (f(x_i) - y_i)^2`` into the g* buffers.

    Returns the summed squared error.
    """
    n, d = X.shape
    h = W1.shape[0]
    a = np.empty(h)
    sse = 0.0
    gb2_acc = 0.0
    for i in range(n):
        out = b2[0]
        for j in range(h):
            s = b1[j]
            for q in range(d):
                s += W1[j, q] * X[i, q]
            a[j] = np.tanh(s)
            out += W2[j] * a[j]
        resid = out - y[i]
        sse += resid * resid
        r = 2.0 * scale * resid
        gb2_acc += r
        for j in range(h):
            gW2[j] += r * a[j]
            dz = r * W2[j] * (1.0 - a[j] * a[j])
            gb1[j] += dz
            for q in range(d):
                gW1[j, q] += dz * X[i, q]
    gb2[0] += gb2_acc
    return sse


@numba.njit(cache=True)
def _pattern_step(x, t, W1, b1, W2, b2, lr, a):
    """One in-place update on a single pattern: params -= lr * grad (f(x) - t)^2."""
    h, d = W1.shape
    out = b2[0]
    for j in range(h):
        s = b1[j]
        for q in range(d):
            s += W1[j, q] * x[q]
        a[j] = np.tanh(s)
        out += W2[j] * a[j]
    r = 2.0 * (out - t)
    for j in range(h):
        dz = r * W2[j] * (1.0 - a[j] * a[j])
        W2[j] -= lr * r * a[j]
        b1[j] -= lr * dz
        for q in range(d):
            W1[j, q] -= lr * dz * x[q]
    b2[0] -= lr * r


@numba.njit(cache=True)
def _run_epochs(X, y, W1, b1, W2, b2, lr, n_epochs, orders, per_pattern):
    n = X.shape[0]
    h = W1.shape[0]
    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = np.zeros(1)
    a = np.empty(h)
    for e in range(n_epochs):
        if per_pattern:
            for k in range(n):
                i = orders[e, k]
                _pattern_step(X[i], y[i], W1, b1, W2, b2, lr, a)
        else:
            gW1[:] = 0.0
            gb1[:] = 0.0
            gW2[:] = 0.0
            gb2[0] = 0.0
            _accumulate_grad(X, y, W1, b1, W2, b2, gW1, gb1, gW2, gb2, 1.0 / n)
            for j in range(h):
                for q in range(W1.shape[1]):
                    W1[j, q] -= lr * gW1[j, q]
                b1[j] -= lr * gb1[j]
                W2[j] -= lr * gW2[j]
            b2[0] -= lr * gb2[0]


def _buffers(params):
    return (
        params.hidden_weights.copy(),
        params.hidden_biases.copy(),
        params.output_weights.copy(),
        np.array([params.output_bias]),
    )


def loss_and_gradient(params: MLPParams, X, y):
    """Mean squared error of ``params`` on (X, y) and its gradient as MLPParams.

    This is the routine the trainer itself uses.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1))
    W1, b1, W2, b2 = _buffers(params)
    g = [np.zeros_like(W1), np.zeros_like(b1), np.zeros_like(W2), np.zeros(1)]
    sse = _accumulate_grad(X, y, W1, b1, W2, b2, *g, 1.0 / len(y))
    return sse / len(y), MLPParams(g[0], g[1], g[2], g[3][0])


def _scalers(X, y, standardize):
    d = X.shape[1]
    if not standardize:
        return np.zeros(d), np.ones(d), 0.0, 1.0
    x_scale = X.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    y_scale = float(y.std()) or 1.0
    return X.mean(axis=0), x_scale, float(y.mean()), y_scale


def train_with_snapshots(data: RegressionDataset, cfg: TrainConfig) -> SnapshotStore:
    """Gradient descent on squared error, saving a snapshot every
    ``total_epochs / snapshot_count`` epochs."""
    n = len(data)
    if n == 0:
        raise ValueError("training data is empty")
    x_shift, x_scale, y_shift, y_scale = _scalers(data.inputs, data.targets, cfg.standardize)
    X = np.ascontiguousarray((data.inputs - x_shift) / x_scale)
    y = np.ascontiguousarray((data.targets - y_shift) / y_scale)
    W1, b1, W2, b2 = _buffers(init_params(data.dim, cfg.hidden_units, cfg.seed, cfg.init_scale))
    per_pattern = cfg.batch_mode == "per-pattern"
    order_rng = np.random.default_rng([int(cfg.seed), 1])
    interval = cfg.snapshot_interval
    no_orders = np.zeros((1, 1), dtype=np.int64)
    snaps, losses = [], np.empty(cfg.snapshot_count)
    epochs = np.arange(1, cfg.snapshot_count + 1) * interval
    scratch = [np.zeros_like(W1), np.zeros_like(b1), np.zeros_like(W2), np.zeros(1)]
    for k in range(cfg.snapshot_count):
        if cfg.learning_rate > 0:
            if per_pattern:
                orders = np.stack([order_rng.permutation(n) for _ in range(interval)])
            else:
                orders = no_orders
            _run_epochs(X, y, W1, b1, W2, b2, cfg.learning_rate, interval, orders, per_pattern)
        for buf in scratch:
            buf[:] = 0.0
        loss = _accumulate_grad(X, y, W1, b1, W2, b2, *scratch, 0.0) / n
        if not np.isfinite(loss) or not np.all(np.isfinite(W1)):
            raise TrainingDivergence(int(epochs[k]), cfg.seed)
        losses[k] = loss * y_scale**2
        snaps.append(MLPParams(W1.copy(), b1.copy(), W2.copy(), b2[0]))
    return SnapshotStore(
        snaps, epochs, losses, x_shift, x_scale, y_shift, y_scale, meta={"seed": int(cfg.seed)}
    )


def train_many(datasets, cfg: TrainConfig, seeds=None) -> list:
    """Train one net per dataset; ``seeds[m]`` replaces ``cfg.seed`` for net m."""
    datasets = list(datasets)
    if seeds is None:
        seeds = [cfg.seed + m for m in range(len(datasets))]
    stores = []
    for ds, seed in zip(datasets, seeds):
        stores.append(train_with_snapshots(ds, replace(cfg, seed=int(seed))))
    return stores


def predict_cube(stores, points) -> np.ndarray:
    """Predictions ``[net, snapshot, point]`` of every stored snapshot."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    stores = list(stores)
    if not stores:
        raise ValueError("no snapshot stores given")
    T = len(stores[0])
    if any(len(s) != T for s in stores):
        raise ValueError("stores hold different snapshot counts")
    for s in stores:
        if s.input_dim != X.shape[1]:
            raise ValueError(f"stores expect {s.input_dim} inputs, points have {X.shape[1]}")
    out = np.empty((len(stores), T, X.shape[0]))
    for n, store in enumerate(stores):
        for t in range(T):
            out[n, t] = store.predict(t, X)
    return out


# --------------------------------------------------------------------------
# binary persistence
#
# header: magic b"SNPS", version u32, d u32, h u32, T u32
#         epochs T x i64, train_losses T x f64,
#         x_shift d x f64, x_scale d x f64, y_shift f64, y_scale f64
# body:   T snapshots, each hidden_weights (row-major h x d), hidden_biases,
#         output_weights, output_bias; all little-endian f64

_MAGIC = b"SNPS"
_VERSION = 1


def save_store(store: SnapshotStore, path):
    d, h, T = store.input_dim, store.hidden_units, len(store)
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4I", _VERSION, d, h, T))
        fh.write(store.epoch_of.astype("<i8").tobytes())
        fh.write(store.train_losses.astype("<f8").tobytes())
        fh.write(store.x_shift.astype("<f8").tobytes())
        fh.write(store.x_scale.astype("<f8").tobytes())
        fh.write(struct.pack("<2d", store.y_shift, store.y_scale))
        for p in store.snapshots:
            fh.write(p.flatten().astype("<f8").tobytes())


def load_store(path) -> SnapshotStore:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a snapshot store file")
    version, d, h, T = struct.unpack_from("<4I", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = 20

    def take(count, dtype):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.astype(dtype.lstrip("<"))

    epochs = take(T, "<i8")
    losses = take(T, "<f8")
    x_shift = take(d, "<f8")
    x_scale = take(d, "<f8")
    y_shift, y_scale = take(2, "<f8")
    n_par = h * d + 2 * h + 1
    body = take(T * n_par, "<f8").reshape(T, n_par)
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes")
    snaps = [MLPParams.unflatten(row, d, h) for row in body]
    return SnapshotStore(snaps, epochs, losses, x_shift, x_scale, float(y_shift), float(y_scale))
