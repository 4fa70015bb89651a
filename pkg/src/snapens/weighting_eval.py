"""Member weighting laws, NMSE, accuracy/diversity split and the sign test."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .ensemble_core import PredictionCube, Selection, ensemble_predict

__all__ = [
    "EvalReport",
    "member_errors",
    "weights_power",
    "weights_exp",
    "WEIGHT_LAWS",
    "weight_selection",
    "nmse",
    "accuracy_diversity",
    "sign_test",
    "write_reports",
    "read_reports",
]


def weights_power(e, alpha):
    """w_i proportional to e_i**(-alpha).

    Members with zero error take all the weight (shared equally) when
    alpha > 0.
    """
    e = np.asarray(e, dtype=float)
    if np.any(e < 0):
        raise ValueError("member errors must be non-negative")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0:
        return np.full(e.shape, 1.0 / e.size)
    zero = e == 0
    if zero.any():
        return zero / zero.sum()
    # work in logs so large alpha does not underflow every term
    logw = -alpha * np.log(e)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def weights_exp(e, alpha):
    """w_i proportional to exp(-alpha * e_i), shifted by min(e) for stability."""
    e = np.asarray(e, dtype=float)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    w = np.exp(-alpha * (e - e.min()))
    return w / w.sum()


WEIGHT_LAWS = {"power": weights_power, "exp": weights_exp}


def member_errors(cube: PredictionCube, tau) -> np.ndarray:
    """MSE of each net at its selected snapshot over all cube points."""
    rows = cube.member_rows(tau)
    return np.mean((rows - cube.point_targets) ** 2, axis=1)


def weight_selection(sel: Selection, cube: PredictionCube, law="power", alpha=2.0) -> Selection:
    """Replace the weights of ``sel`` by ``law`` applied to member errors on ``cube``.

    ``cube`` should cover the whole data set the ensemble was built from
    (never the test points).
    """
    sel.check(cube)
    if alpha == 0:
        return Selection(sel.tau.copy(), sel.weights.copy())
    w = WEIGHT_LAWS[law](member_errors(cube, sel.tau), alpha)
    w = w / w.sum()
    return Selection(sel.tau.copy(), w)


def nmse(predictions, targets, total_variance) -> float:
    if not total_variance > 0:
        raise ValueError("total variance must be positive")
    resid = np.asarray(targets, dtype=float) - np.asarray(predictions, dtype=float)
    return float(np.mean(resid**2) / total_variance)


def accuracy_diversity(cube: PredictionCube, sel: Selection, points=None):
    """(mean member error, mean across-member variance) of a simple average.

    For uniform weights the ensemble MSE equals mean_error - variance.
    """
    if not np.allclose(sel.weights, 1.0 / len(sel), rtol=0, atol=1e-12):
        raise ValueError("the decomposition holds for uniform weights only")
    sel.check(cube)
    rows = cube.member_rows(sel.tau)
    t = cube.point_targets
    if points is not None:
        rows, t = rows[:, points], t[points]
    mean_error = float(np.mean((rows - t) ** 2))
    variance = float(np.mean(np.var(rows, axis=0)))
    return mean_error, variance


def sign_test(wins, n_runs, level=0.05):
    """Win fraction and whether it differs from 1/2 (two-sided exact binomial)."""
    if n_runs <= 0:
        raise ValueError("n_runs must be positive")
    if not 0 <= wins <= n_runs:
        raise ValueError("wins must lie in [0, n_runs]")
    p = binomtest(int(wins), int(n_runs), 0.5, alternative="two-sided").pvalue
    return wins / n_runs, bool(p < level)


@dataclass
class EvalReport:
    run_id: int
    dataset: str
    noise: str
    length: int
    algorithm: str
    nmse: float
    mean_error: float
    variance: float


def evaluate(cube_test: PredictionCube, sel: Selection, total_variance, **labels) -> EvalReport:
    """Test-set report for one selection; mean_error/variance are NMSE-normalized."""
    pred = ensemble_predict(cube_test, sel)
    err = nmse(pred, cube_test.point_targets, total_variance)
    rows = cube_test.member_rows(sel.tau)
    mean_error = float(np.mean((rows - cube_test.point_targets) ** 2)) / total_variance
    variance = float(np.mean(np.var(rows, axis=0))) / total_variance
    return EvalReport(nmse=err, mean_error=mean_error, variance=variance, **labels)


_REPORT_FIELDS = [f.name for f in fields(EvalReport)]


def write_reports(reports, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_REPORT_FIELDS)
        writer.writeheader()
        for r in reports:
            row = asdict(r)
            for key in ("nmse", "mean_error", "variance"):
                row[key] = repr(float(row[key]))
            writer.writerow(row)


def read_reports(path):
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                EvalReport(
                    run_id=int(row["run_id"]),
                    dataset=row["dataset"],
                    noise=row["noise"],
                    length=int(row["length"]),
                    algorithm=row["algorithm"],
                    nmse=float(row["nmse"]),
                    mean_error=float(row["mean_error"]),
                    variance=float(row["variance"]),
                )
            )
    return out
