"""Bootstrap plans, out-of-bag membership and external validation splits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "BootstrapPlan",
    "SplitSpec",
    "make_bootstrap_plan",
    "external_split",
    "oob_prediction_weights",
    "save_plan",
    "load_plan",
]


@dataclass
class BootstrapPlan:
    """M bootstrap index multisets over ``n_points`` patterns.

    ``gamma[p, n]`` is True when pattern p is out of bag for net n.
    """

    train_indices: np.ndarray  # (M, |L|)
    n_points: int

    def __post_init__(self):
        self.train_indices = np.atleast_2d(np.asarray(self.train_indices, dtype=np.intp))
        if self.train_indices.size and (
            self.train_indices.min() < 0 or self.train_indices.max() >= self.n_points
        ):
            raise ValueError("bootstrap index out of range")
        counts = np.zeros((self.n_points, self.n_members), dtype=np.intp)
        for n, idx in enumerate(self.train_indices):
            np.add.at(counts[:, n], idx, 1)
        self.gamma = counts == 0

    @property
    def n_members(self):
        return self.train_indices.shape[0]

    @property
    def oob_indices(self):
        return [np.flatnonzero(self.gamma[:, n]) for n in range(self.n_members)]


@dataclass(frozen=True)
class SplitSpec:
    """Validation scenario: ``"oob"`` or ``"external"`` with a held-out fraction."""

    mode: str = "oob"
    fraction: float = 0.2
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("oob", "external"):
            raise ValueError(f"unknown validation mode {self.mode!r}")
        if self.mode == "external" and not 0 < self.fraction < 1:
            raise ValueError("validation fraction must lie in (0, 1)")

    @classmethod
    def parse(cls, text, seed=None):
        """``oob``, ``external20``, ``external37`` or ``external:<fraction>``."""
        text = text.strip().lower()
        if text == "oob":
            return cls("oob", seed=seed)
        if text.startswith("external:"):
            return cls("external", float(text.split(":", 1)[1]), seed)
        if text.startswith("external") and text[8:].isdigit():
            return cls("external", int(text[8:]) / 100.0, seed)
        raise ValueError(f"cannot parse validation mode {text!r}")

    @property
    def label(self):
        if self.mode == "oob":
            return "oob"
        return f"external{round(self.fraction * 100):d}"


def make_bootstrap_plan(N, M, seed=None, draw_size=None) -> BootstrapPlan:
    """M uniform with-replacement draws of ``draw_size`` (default N) indices."""
    if N < 2:
        raise ValueError("bootstrap needs at least 2 patterns")
    if M < 1:
        raise ValueError("ensemble size must be at least 1")
    rng = np.random.default_rng(seed)
    size = N if draw_size is None else int(draw_size)
    return BootstrapPlan(rng.integers(0, N, size=(M, size)), N)


def external_split(N, fraction, seed=None):
    """Random (learn, validation) partition with ``round(fraction * N)`` held out."""
    if not 0 < fraction < 1:
        raise ValueError("validation fraction must lie in (0, 1)")
    n_val = int(round(fraction * N))
    if n_val < 1 or n_val >= N:
        raise ValueError(f"fraction {fraction} leaves an empty part for N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def oob_prediction_weights(gamma):
    """Row-normalized out-of-bag weights and the indices of uncovered patterns.

    Patterns that are in-bag for every net get an all-zero row; they are
    returned separately so callers can report them.
    """
    g = np.asarray(gamma, dtype=float)
    support = g.sum(axis=1)
    w = np.divide(g, support[:, None], out=np.zeros_like(g), where=support[:, None] > 0)
    return w, np.flatnonzero(support == 0)


def save_plan(plan: BootstrapPlan, path):
    """One line per net: space-separated training indices."""
    with Path(path).open("w") as fh:
        fh.write(f"# n_points {plan.n_points}\n")
        for row in plan.train_indices:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def load_plan(path) -> BootstrapPlan:
    n_points = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# n_points"):
            n_points = int(line.split()[-1])
        elif line.strip():
            rows.append([int(v) for v in line.split()])
    if n_points is None:
        n_points = max(max(r) for r in rows) + 1
    return BootstrapPlan(np.array(rows), n_points)
