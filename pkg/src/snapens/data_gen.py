"""Synthetic regression problems, chaotic time series and CSV ingestion.

Generators return a :class:`RegressionDataset`. Friedman #2/#3 noise can be
specified as a noise-to-signal power ratio; the signal variance used for that
calibration is estimated once per generator from a large noise-free sample and
cached.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "RegressionDataset",
    "NoiseSpec",
    "SeriesEmbedding",
    "friedman1_signal",
    "friedman2_signal",
    "friedman3_signal",
    "gen_friedman1",
    "gen_friedman2",
    "gen_friedman3",
    "gen_ikeda",
    "ikeda_step",
    "mackey_glass_rhs",
    "gen_mackey_glass",
    "embed_series",
    "load_csv",
    "save_csv",
    "signal_variance",
]

CALIBRATION_SAMPLES = 1_000_000
CALIBRATION_SEED = 20_040_101


@dataclass
class RegressionDataset:
    inputs: np.ndarray
    targets: np.ndarray
    name: str = "data"
    noise_sigma: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs.reshape(-1, 1)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"inputs have {self.inputs.shape[0]} rows but targets have "
                f"{self.targets.shape[0]} entries"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("dataset contains non-finite values")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def __len__(self):
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices, name=None) -> "RegressionDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return RegressionDataset(
            self.inputs[idx],
            self.targets[idx],
            name=name or self.name,
            noise_sigma=self.noise_sigma,
            metadata=dict(self.metadata),
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian target noise.

    ``kind`` is one of ``"none"``, ``"gaussian_sigma"`` (``value`` is the
    standard deviation) or ``"noise_to_signal"`` (``value`` is the ratio of
    noise power to signal power).
    """

    kind: str = "none"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_sigma", "noise_to_signal"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.value < 0 or not math.isfinite(self.value):
            raise ValueError("noise level must be a finite non-negative number")

    @classmethod
    def none(cls):
        return cls("none", 0.0)

    @classmethod
    def sigma(cls, sigma):
        return cls("gaussian_sigma", float(sigma))

    @classmethod
    def ratio(cls, ratio):
        return cls("noise_to_signal", float(ratio))


@dataclass(frozen=True)
class SeriesEmbedding:
    dimension: int
    lag: int = 1
    horizon: int = 1

    def __post_init__(self):
        for name in ("dimension", "lag", "horizon"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")

    def n_rows(self, series_length: int) -> int:
        return series_length - (self.dimension - 1) * self.lag - self.horizon


# --------------------------------------------------------------------------
# Friedman problems


def friedman1_signal(x, use_pi=False):
    """Noise-free Friedman #1 response.

    With ``use_pi=False`` the sine term is ``10 sin(x1 x2)``; ``use_pi=True``
    gives the conventional ``10 sin(pi x1 x2)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    arg = x[:, 0] * x[:, 1]
    if use_pi:
        arg = np.pi * arg
    return (
        10.0 * np.sin(arg)
        + 20.0 * (x[:, 2] - 0.5) ** 2
        + 10.0 * x[:, 3]
        + 5.0 * x[:, 4]
    )


def _friedman_radicand(x):
    return x[:, 1] * x[:, 2] - (x[:, 1] * x[:, 3]) ** -2.0


def friedman2_signal(x, return_clipped=False):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    radicand = _friedman_radicand(x)
    clipped = radicand < 0
    y = x[:, 0] ** 2 + np.sqrt(np.where(clipped, 0.0, radicand))
    if return_clipped:
        return y, int(clipped.sum())
    return y


def friedman3_signal(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    # arctan2 == arctan(num / x1) for x1 > 0 and stays finite as x1 -> 0+
    return np.arctan2(_friedman_radicand(x), x[:, 0])


def _friedman23_inputs(rng, n):
    x = np.empty((n, 4))
    x[:, 0] = rng.uniform(0.0, 100.0, n)
    x[:, 1] = 2.0 * np.pi * rng.uniform(20.0, 280.0, n)
    x[:, 2] = rng.uniform(0.0, 1.0, n)
    x[:, 3] = rng.uniform(1.0, 11.0, n)
    return x


_SIGNALS = {
    "friedman1": lambda x: friedman1_signal(x),
    "friedman1_pi": lambda x: friedman1_signal(x, use_pi=True),
    "friedman2": friedman2_signal,
    "friedman3": friedman3_signal,
}


@lru_cache(maxsize=None)
def signal_variance(generator: str) -> float:
    """Variance of the noise-free response, from a fixed 10^6-point sample."""
    rng = np.random.default_rng(CALIBRATION_SEED)
    if generator.startswith("friedman1"):
        x = rng.uniform(0.0, 1.0, (CALIBRATION_SAMPLES, 10))
    elif generator in ("friedman2", "friedman3"):
        x = _friedman23_inputs(rng, CALIBRATION_SAMPLES)
    else:
        raise KeyError(generator)
    return float(np.var(_SIGNALS[generator](x)))


def _noise_sigma(noise: NoiseSpec, generator: str) -> float:
    if noise.kind == "none":
        return 0.0
    if noise.kind == "gaussian_sigma":
        return noise.value
    if noise.value == 0:
        return 0.0
    return math.sqrt(noise.value * signal_variance(generator))


def _check_n(n):
    if int(n) < 1:
        raise ValueError("n must be at least 1")
    return int(n)


def gen_friedman1(n, noise=None, seed=None, use_pi=False) -> RegressionDataset:
    n = _check_n(n)
    noise = noise or NoiseSpec.none()
    if noise.kind == "noise_to_signal":
        raise ValueError("Friedman #1 takes an absolute noise sigma, not a ratio")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (n, 10))
    sigma = _noise_sigma(noise, "friedman1")
    y = friedman1_signal(x, use_pi=use_pi)
    if sigma > 0:
        y = y + rng.normal(0.0, sigma, n)
    return RegressionDataset(
        x, y, name="friedman1", noise_sigma=sigma, metadata={"use_pi": use_pi}
    )


def _friedman23(kind, signal, n, noise, seed):
    n = _check_n(n)
    noise = noise or NoiseSpec.none()
    if noise.kind == "gaussian_sigma":
        raise ValueError(f"{kind} noise is specified as a noise-to-signal ratio")
    rng = np.random.default_rng(seed)
    x = _friedman23_inputs(rng, n)
    if kind == "friedman2":
        y, n_clipped = signal(x, return_clipped=True)
    else:
        y, n_clipped = signal(x), 0
    sigma = _noise_sigma(noise, kind)
    if sigma > 0:
        y = y + rng.normal(0.0, sigma, n)
    meta = {"noise_to_signal": noise.value}
    if kind == "friedman2":
        meta["clipped_radicands"] = n_clipped
    return RegressionDataset(x, y, name=kind, noise_sigma=sigma, metadata=meta)


def gen_friedman2(n, noise=None, seed=None) -> RegressionDataset:
    return _friedman23("friedman2", friedman2_signal, n, noise, seed)


def gen_friedman3(n, noise=None, seed=None) -> RegressionDataset:
    return _friedman23("friedman3", friedman3_signal, n, noise, seed)


# --------------------------------------------------------------------------
# Time series


def ikeda_step(z: complex) -> complex:
    return 1.0 + 0.9 * z * np.exp(0.4j - 6.0j / (1.0 + abs(z) ** 2))


def gen_ikeda(n, burn_in=100, seed=None, z0=None) -> np.ndarray:
    """Real parts of ``n`` Ikeda map iterates after ``burn_in`` discarded ones.

    ``z0`` defaults to a seeded draw from the unit square around the origin.
    """
    n = _check_n(n)
    if z0 is None:
        rng = np.random.default_rng(seed)
        re, im = rng.uniform(-0.5, 0.5, 2)
        z0 = complex(re, im)
    z = complex(z0)
    for _ in range(int(burn_in)):
        z = ikeda_step(z)
    out = np.empty(n)
    for k in range(n):
        z = ikeda_step(z)
        out[k] = z.real
    return out


def mackey_glass_rhs(x, x_delayed, beta=0.2, gamma=0.1, power=10):
    return beta * x_delayed / (1.0 + x_delayed**power) - gamma * x


def gen_mackey_glass(
    n, delay=17.0, dt=0.1, sample_stride=10, seed=None, x0=1.2, burn_in=1000.0
) -> np.ndarray:
    """Mackey-Glass series integrated with RK4.

    History before t=0 is zero. Delayed values between grid points are
    linearly interpolated from the stored trajectory. The system is
    deterministic; ``seed`` is accepted for interface symmetry with the other
    generators and does not affect the output.
    """
    n = _check_n(n)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if int(sample_stride) < 1:
        raise ValueError("sample_stride must be at least 1")
    sample_stride = int(sample_stride)
    burn_steps = int(round(burn_in / dt))
    total = burn_steps + n * sample_stride + 1
    xs = np.empty(total + 1)
    xs[0] = x0

    def delayed(t):
        s = t - delay
        if s < 0:
            return 0.0
        pos = s / dt
        i = int(math.floor(pos))
        frac = pos - i
        if frac < 1e-12:
            return xs[i]
        return (1.0 - frac) * xs[i] + frac * xs[i + 1]

    for k in range(total):
        t = k * dt
        x = xs[k]
        d0 = delayed(t)
        dh = delayed(t + 0.5 * dt)
        d1 = delayed(t + dt)
        k1 = mackey_glass_rhs(x, d0)
        k2 = mackey_glass_rhs(x + 0.5 * dt * k1, dh)
        k3 = mackey_glass_rhs(x + 0.5 * dt * k2, dh)
        k4 = mackey_glass_rhs(x + dt * k3, d1)
        xs[k + 1] = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    start = burn_steps + sample_stride
    return xs[start : start + n * sample_stride : sample_stride].copy()


def embed_series(series, spec: SeriesEmbedding, name="series") -> RegressionDataset:
    s = np.asarray(series, dtype=float).reshape(-1)
    rows = spec.n_rows(len(s))
    if rows < 1:
        raise ValueError(
            f"series of length {len(s)} too short for embedding {spec}"
        )
    offsets = np.arange(spec.dimension) * spec.lag
    idx = np.arange(rows)[:, None] + offsets[None, :]
    target_idx = np.arange(rows) + (spec.dimension - 1) * spec.lag + spec.horizon
    return RegressionDataset(
        s[idx],
        s[target_idx],
        name=name,
        metadata={"dimension": spec.dimension, "lag": spec.lag, "horizon": spec.horizon},
    )


# --------------------------------------------------------------------------
# CSV


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path, target_column=-1, standardize_inputs=False, name=None) -> RegressionDataset:
    """Load a numeric comma-separated file.

    A first line containing any non-numeric field is taken as a header. Rows
    with blank fields are dropped. ``target_column`` may be negative.
    """
    path = Path(path)
    rows = []
    n_cols = None
    dropped = 0
    with path.open(newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not f.strip() for f in record):
                continue
            fields = [f.strip() for f in record]
            if lineno == 1 and not all(_is_number(f) for f in fields if f):
                continue
            if n_cols is None:
                n_cols = len(fields)
            elif len(fields) != n_cols:
                raise ValueError(
                    f"{path}:{lineno}: expected {n_cols} fields, got {len(fields)}"
                )
            if any(f == "" or f.upper() in ("NA", "NAN", "?") for f in fields):
                dropped += 1
                continue
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: unparsable row ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no usable rows")
    data = np.array(rows)
    n_cols = data.shape[1]
    if not -n_cols <= target_column < n_cols:
        raise IndexError(f"target column {target_column} out of range for {n_cols} columns")
    tcol = target_column % n_cols
    x = np.delete(data, tcol, axis=1)
    y = data[:, tcol]
    meta = {"source": str(path), "dropped_rows": dropped}
    if standardize_inputs:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std == 0] = 1.0
        x = (x - mean) / std
        meta["input_mean"] = mean.tolist()
        meta["input_std"] = std.tolist()
    return RegressionDataset(x, y, name=name or path.stem, metadata=meta)


def save_csv(dataset: RegressionDataset, path, header=True):
    """Write inputs followed by the target as the last column."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{i + 1}" for i in range(dataset.dim)] + ["t"])
        for xi, ti in zip(dataset.inputs, dataset.targets):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(ti))])
