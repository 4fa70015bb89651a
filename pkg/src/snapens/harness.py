"""Experiment runner: data realization, bootstrap training, selection,
weighting and test evaluation over replications, plus table output.

Seeds: replication r of master seed s draws every random stream from
``SeedSequence([s, r, stream, ...])`` with fixed stream ids (see ``_Streams``),
so a single replication can be rerun on its own.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import data_gen
from .data_gen import NoiseSpec, RegressionDataset, SeriesEmbedding
from .ensemble_core import PredictionCube, Selection, save_cube, save_selection
from .mlp import TrainConfig, TrainingDivergence, predict_cube, train_many
from .resample import (
    SplitSpec,
    external_split,
    make_bootstrap_plan,
    oob_prediction_weights,
    save_plan,
)
from .selectors import SELECTORS, SimAnnConfig
from .weighting_eval import EvalReport, evaluate, sign_test, weight_selection, write_reports

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "BENCHMARK_SETTINGS",
    "build_replication",
    "run_replication",
    "run_experiment",
    "alpha_sweep",
    "summarize",
    "sign_tests",
    "emit_tables",
    "read_summary_csv",
    "paper_grid",
]

ALGORITHM_LABELS = {
    "single": "Single",
    "bagging": "Bagging",
    "epoch": "Epoch",
    "neuralbag": "NeuralBAG",
    "seca": "SECA",
    "simann": "SimAnn",
}

# Architectures and set sizes per data set; keys of "sizes" are |D|, values h.
BENCHMARK_SETTINGS = {
    "friedman1": {
        "sizes": {50: 6, 100: 10, 200: 15},
        "test_size": 1000,
        "noise": {"free": "sigma:0", "low": "sigma:1", "high": "sigma:2"},
    },
    "friedman2": {
        "sizes": {20: 4, 50: 6, 100: 8},
        "test_size": 1000,
        "noise": {"free": "ratio:0", "low": "ratio:0.1111111111111111", "high": "ratio:0.3333333333333333"},
    },
    "friedman3": {
        "sizes": {100: 6, 200: 8, 400: 12},
        "test_size": 1000,
        "noise": {"free": "ratio:0", "low": "ratio:0.1111111111111111", "high": "ratio:0.3333333333333333"},
    },
    "ikeda": {"sizes": {100: 10}, "test_size": 1000, "noise": {"fixed": "none"}, "embedding": 5},
    "mackey-glass": {
        "sizes": {1194: 40},
        "test_size": 1000,
        "noise": {"free": "none"},
        "embedding": 6,
    },
    "abalone": {"sizes": {3132: 5}, "test_size": 1045, "noise": {"fixed": "none"}},
    "boston": {"sizes": {450: 5}, "test_size": 56, "noise": {"fixed": "none"}, "reps": 100},
    "ozone": {"sizes": {295: 5}, "test_size": 35, "noise": {"fixed": "none"}, "reps": 100},
    "servo": {"sizes": {150: 15}, "test_size": 17, "noise": {"fixed": "none"}, "reps": 100},
}


@dataclass
class ExperimentConfig:
    dataset: str = "friedman1"
    noise: str = "free"
    train_size: int = 200
    test_size: int = 1000
    csv_path: str | None = None
    target_column: int = -1
    validation: str = "oob"
    M: int = 20
    T: int = 200
    total_epochs: int = 2000
    hidden_units: int = 15
    learning_rate: float = 0.003
    batch_mode: str = "per-pattern"
    init_scale: float = 0.1
    p: int = 15
    selectors: tuple = ("bagging", "epoch", "neuralbag", "seca", "simann")
    weighting: tuple = ()
    baseline: str = "bagging"
    reps: int = 10
    seed: int = 0
    out: str | None = None
    save_cubes: bool = False
    jobs: int = 1
    embedding_lag: int | None = None
    embedding_horizon: int | None = None

    def __post_init__(self):
        if isinstance(self.selectors, str):
            self.selectors = tuple(s for s in self.selectors.split(",") if s)
        if isinstance(self.weighting, str):
            self.weighting = tuple(w for w in self.weighting.split(",") if w)
        self.selectors = tuple(s.strip().lower() for s in self.selectors)
        for s in self.selectors:
            if s not in SELECTORS:
                raise ValueError(f"unknown selector {s!r}")
        for w in self.weighting:
            parse_weighting(w)
        self.split_spec  # validates
        if self.M < 1 or self.T < 1 or self.reps < 1:
            raise ValueError("M, T and reps must be positive")

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec.parse(self.validation)

    @property
    def selector_list(self):
        if self.split_spec.mode == "oob":
            return list(self.selectors)
        return [s for s in self.selectors if s != "neuralbag"]

    def train_config(self, seed=0) -> TrainConfig:
        return TrainConfig(
            hidden_units=self.hidden_units,
            total_epochs=self.total_epochs,
            snapshot_count=self.T,
            learning_rate=self.learning_rate,
            batch_mode=self.batch_mode,
            seed=seed,
            init_scale=self.init_scale,
        )

    @classmethod
    def paper_defaults(cls, dataset, noise=None, train_size=None, full=False, **overrides):
        """Config with the architecture and sizes used for ``dataset``."""
        key = dataset_family(dataset)
        if key not in BENCHMARK_SETTINGS:
            raise KeyError(f"no benchmark settings for data set {dataset!r}")
        spec = BENCHMARK_SETTINGS[key]
        sizes = spec["sizes"]
        if train_size is None:
            train_size = max(sizes)
        if train_size not in sizes:
            raise ValueError(f"{dataset}: train size must be one of {sorted(sizes)}")
        if noise is None:
            noise = next(iter(spec["noise"]))
        reps = spec.get("reps", 50) if full else 10
        base = dict(
            dataset=dataset,
            noise=noise,
            train_size=train_size,
            test_size=spec["test_size"],
            hidden_units=sizes[train_size],
            M=20,
            T=200,
            p=15,
            reps=reps,
        )
        base.update(overrides)
        return cls(**base)


def dataset_family(name):
    name = name.lower()
    if name.startswith("csv:"):
        return Path(name[4:]).stem.lower()
    return name


def parse_weighting(text):
    law, _, alpha = text.partition(":")
    law = law.strip().lower()
    if law not in ("power", "exp"):
        raise ValueError(f"unknown weighting law {law!r}")
    alpha = float(alpha) if alpha else 2.0
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return law, alpha


def parse_noise(dataset, text) -> NoiseSpec:
    """Noise label to a NoiseSpec: free/low/high, none, sigma:<s> or ratio:<r>."""
    text = str(text).strip().lower()
    fam = dataset_family(dataset)
    named = BENCHMARK_SETTINGS.get(fam, {}).get("noise", {})
    if text in named:
        text = named[text]
    if text in ("none", "free", "fixed", "0"):
        return NoiseSpec.none()
    kind, _, value = text.partition(":")
    if kind == "sigma":
        return NoiseSpec.sigma(float(value)) if float(value) > 0 else NoiseSpec.none()
    if kind == "ratio":
        return NoiseSpec.ratio(float(value)) if float(value) > 0 else NoiseSpec.none()
    raise ValueError(f"cannot parse noise level {text!r} for {dataset}")


class _Streams:
    DATA, SPLIT, BOOTSTRAP, INIT, SIMANN = range(5)

    def __init__(self, master, rep):
        self.master, self.rep = int(master), int(rep)

    def seq(self, stream, *extra):
        return np.random.SeedSequence([self.master, self.rep, stream, *extra])

    def int_seed(self, stream, *extra):
        return int(self.seq(stream, *extra).generate_state(1)[0])


# --------------------------------------------------------------------------
# data realization


def realize_data(cfg: ExperimentConfig, streams: _Streams):
    """(D, test) for one replication."""
    fam = dataset_family(cfg.dataset)
    n, n_test = cfg.train_size, cfg.test_size
    noise = parse_noise(cfg.dataset, cfg.noise)
    data_seed = streams.seq(_Streams.DATA)
    if fam in ("friedman1", "friedman2", "friedman3"):
        gen = getattr(data_gen, f"gen_{fam}")
        full = gen(n + n_test, noise, seed=data_seed)
        D = full.subset(range(n))
        test = full.subset(range(n, n + n_test))
        return D, test
    if fam in ("ikeda", "mackey-glass"):
        dim = BENCHMARK_SETTINGS[fam]["embedding"]
        lag = cfg.embedding_lag or (1 if fam == "ikeda" else 6)
        horizon = cfg.embedding_horizon or (1 if fam == "ikeda" else 6)
        emb = SeriesEmbedding(dim, lag, horizon)
        length = n + n_test + (dim - 1) * lag + horizon
        if fam == "ikeda":
            series = data_gen.gen_ikeda(length, burn_in=100, seed=data_seed)
        else:
            series = _cached_mackey_glass(length)
        ds = data_gen.embed_series(series, emb, name=fam)
        D = ds.subset(range(n))
        test = ds.subset(range(n, n + n_test))
        if noise.kind != "none":
            # noise is added to the training part only; the test set stays clean
            if noise.kind == "gaussian_sigma":
                sigma = noise.value
            else:
                sigma = math.sqrt(noise.value * float(np.var(D.targets)))
            rng = np.random.default_rng(streams.seq(_Streams.DATA, 1))
            D = RegressionDataset(D.inputs, D.targets + rng.normal(0, sigma, len(D)), fam, sigma)
        return D, test
    path = cfg.csv_path or (cfg.dataset[4:] if cfg.dataset.lower().startswith("csv:") else None)
    if path is None:
        raise ValueError(
            f"unknown data set {cfg.dataset!r}; use friedman1/2/3, ikeda, mackey-glass or csv:PATH"
        )
    ds = _cached_csv(path, cfg.target_column)
    if n + 1 > len(ds):
        raise ValueError(f"{path}: {len(ds)} rows cannot give {n} training patterns and a test set")
    perm = np.random.default_rng(streams.seq(_Streams.DATA)).permutation(len(ds))
    n_test = min(n_test, len(ds) - n)
    return ds.subset(perm[:n]), ds.subset(perm[n : n + n_test])


_MG_CACHE: dict = {}
_CSV_CACHE: dict = {}


def _cached_mackey_glass(length):
    if length not in _MG_CACHE:
        _MG_CACHE[length] = data_gen.gen_mackey_glass(length)
    return _MG_CACHE[length]


def _cached_csv(path, target_column):
    key = (str(path), target_column)
    if key not in _CSV_CACHE:
        _CSV_CACHE[key] = data_gen.load_csv(path, target_column)
    return _CSV_CACHE[key]


# --------------------------------------------------------------------------
# one replication


@dataclass
class Replication:
    """Everything the selectors and evaluation of one run need."""

    run_id: int
    D: RegressionDataset
    test: RegressionDataset
    learn_idx: np.ndarray
    val_idx: np.ndarray | None
    plan: object
    stores: list
    cube_select: PredictionCube
    cube_data: PredictionCube
    cube_test: PredictionCube
    total_variance: float
    uncovered: int = 0
    lr_used: float = 0.0
    retried: bool = False


@dataclass
class RunRecord:
    run_id: int
    reports: list
    selections: dict
    cube_fingerprint: str
    uncovered_oob: int = 0
    retried: bool = False


def _train(cfg, learn, plan, streams):
    datasets = [learn.subset(idx) for idx in plan.train_indices]
    seeds = [streams.int_seed(_Streams.INIT, m) for m in range(cfg.M)]
    lr = cfg.learning_rate
    try:
        return train_many(datasets, cfg.train_config(), seeds), lr, False
    except TrainingDivergence as exc:
        log.warning("replication diverged (%s); retrying with learning rate %g", exc, lr / 2)
        lr = lr / 2
        retry_cfg = replace(cfg.train_config(), learning_rate=lr)
        return train_many(datasets, retry_cfg, seeds), lr, True


def build_replication(cfg: ExperimentConfig, rep: int) -> Replication:
    streams = _Streams(cfg.seed, rep)
    D, test = realize_data(cfg, streams)
    N = len(D)
    split = cfg.split_spec
    if split.mode == "external":
        learn_idx, val_idx = external_split(N, split.fraction, seed=streams.seq(_Streams.SPLIT))
    else:
        learn_idx, val_idx = np.arange(N), None
    learn = D.subset(learn_idx)
    plan = make_bootstrap_plan(len(learn_idx), cfg.M, seed=streams.seq(_Streams.BOOTSTRAP))
    stores, lr, retried = _train(cfg, learn, plan, streams)

    values = predict_cube(stores, np.vstack([D.inputs, test.inputs]))
    d_idx = np.arange(N)
    t_idx = np.arange(N, N + len(test))
    targets = np.concatenate([D.targets, test.targets])
    if val_idx is None:
        w, uncovered = oob_prediction_weights(plan.gamma)
        sel_idx = d_idx
        cube_select = PredictionCube(values[:, :, sel_idx], targets[sel_idx], w)
        n_uncovered = len(uncovered)
    else:
        sel_idx = d_idx[val_idx]
        cube_select = PredictionCube(values[:, :, sel_idx], targets[sel_idx])
        n_uncovered = 0
    # test points never reach selection or weighting
    assert np.intersect1d(sel_idx, t_idx).size == 0
    assert np.intersect1d(d_idx, t_idx).size == 0
    cube_data = PredictionCube(values[:, :, d_idx], targets[d_idx])
    cube_test = PredictionCube(values[:, :, t_idx], targets[t_idx])
    return Replication(
        rep, D, test, learn_idx, val_idx, plan, stores, cube_select, cube_data, cube_test,
        float(np.var(D.targets)), n_uncovered, lr, retried,
    )


def weighted_name(selector, law, alpha, n_weightings):
    label = f"W-{ALGORITHM_LABELS[selector]}"
    if n_weightings > 1:
        label += f"({law}:{alpha:g})"
    return label


def run_replication(cfg: ExperimentConfig, rep: int, out_dir=None) -> RunRecord:
    r = build_replication(cfg, rep)
    labels = dict(
        run_id=rep,
        dataset=dataset_family(cfg.dataset),
        noise=str(cfg.noise),
        length=cfg.train_size,
    )
    fingerprint = r.cube_select.fingerprint()
    selections = {}
    reports = []
    for name in cfg.selector_list:
        if name == "simann":
            sel = SELECTORS[name](
                r.cube_select, cfg=SimAnnConfig(p=cfg.p, seed=_Streams(cfg.seed, rep).seq(_Streams.SIMANN))
            )
        else:
            sel = SELECTORS[name](r.cube_select)
        if r.cube_select.fingerprint() != fingerprint:
            raise RuntimeError("selection cube changed during a replication")
        selections[ALGORITHM_LABELS[name]] = sel
        reports.append(evaluate(r.cube_test, sel, r.total_variance, algorithm=ALGORITHM_LABELS[name], **labels))
        if name == "bagging":
            reports.append(_single_report(r, sel, labels))
    weightings = [parse_weighting(w) for w in cfg.weighting]
    for name in cfg.selector_list:
        base = selections[ALGORITHM_LABELS[name]]
        for law, alpha in weightings:
            wsel = weight_selection(base, r.cube_data, law, alpha)
            label = weighted_name(name, law, alpha, len(weightings))
            selections[label] = wsel
            reports.append(evaluate(r.cube_test, wsel, r.total_variance, algorithm=label, **labels))
    if out_dir is not None:
        rep_dir = Path(out_dir) / f"rep_{rep:03d}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        save_plan(r.plan, rep_dir / "bootstrap_plan.txt")
        for label, sel in selections.items():
            save_selection(sel, rep_dir / f"selection_{_slug(label)}.txt")
        if cfg.save_cubes:
            save_cube(r.cube_select, rep_dir / "cube_select.bin")
            save_cube(r.cube_data, rep_dir / "cube_data.bin")
            save_cube(r.cube_test, rep_dir / "cube_test.bin")
    return RunRecord(rep, reports, selections, fingerprint, r.uncovered, r.retried)


def _single_report(r: Replication, bagging_sel: Selection, labels) -> EvalReport:
    """Average test NMSE of the individually validated members."""
    rows = r.cube_test.member_rows(bagging_sel.tau)
    per_member = np.mean((rows - r.cube_test.point_targets) ** 2, axis=1) / r.total_variance
    value = float(per_member.mean())
    return EvalReport(nmse=value, mean_error=value, variance=0.0, algorithm="Single", **labels)


def _slug(label):
    return "".join(c if c.isalnum() else "_" for c in label).strip("_").lower()


def _run_one(args):
    cfg, rep, out_dir = args
    return run_replication(cfg, rep, out_dir)


def run_experiment(cfg: ExperimentConfig, progress=None):
    """All replications of ``cfg``; returns (records, summary rows, sign-test rows).

    With ``cfg.out`` set, reports, summaries, sign tests, tables, bootstrap
    plans and selections are written below it.
    """
    out_dir = Path(cfg.out) if cfg.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, rep, out_dir) for rep in range(cfg.reps)]
    records = []
    started = time.perf_counter()
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            for rec in pool.map(_run_one, jobs):
                records.append(rec)
                if progress:
                    progress(rec, time.perf_counter() - started)
    else:
        for job in jobs:
            rec = _run_one(job)
            records.append(rec)
            if progress:
                progress(rec, time.perf_counter() - started)
    reports = [r for rec in records for r in rec.reports]
    validation = cfg.split_spec.label
    summary = summarize(reports, validation)
    tests = sign_tests(reports, validation, cfg.baseline, cfg.weighting)
    if out_dir is not None:
        write_reports(reports, out_dir / "reports.csv")
        emit_tables(summary, tests, out_dir)
        (out_dir / "config.txt").write_text(config_to_text(cfg))
    return records, summary, tests


# --------------------------------------------------------------------------
# summaries and sign tests


def summarize(reports, validation="oob"):
    """Mean NMSE per (dataset, noise, length, algorithm)."""
    groups = {}
    for r in reports:
        groups.setdefault((r.dataset, r.noise, r.length, r.algorithm), []).append(r)
    rows = []
    for (dataset, noise, length, algorithm), rs in groups.items():
        rows.append(
            dict(
                dataset=dataset,
                validation=validation,
                noise=noise,
                length=length,
                algorithm=algorithm,
                n_runs=len(rs),
                mean_nmse=float(np.mean([r.nmse for r in rs])),
                mean_error=float(np.mean([r.mean_error for r in rs])),
                variance=float(np.mean([r.variance for r in rs])),
            )
        )
    return rows


def _win_pairs(algorithms, baseline, weightings):
    base = ALGORITHM_LABELS.get(baseline, baseline)
    pairs = [(a, base) for a in algorithms if a in ALGORITHM_LABELS.values() and a not in (base, "Single")]
    w_base = [a for a in algorithms if a.startswith(f"W-{base}")]
    for a in algorithms:
        if not a.startswith("W-"):
            continue
        plain = a[2:].split("(")[0]
        if plain in algorithms:
            pairs.append((a, plain))
        suffix = a[len("W-") + len(plain) :]
        wb = f"W-{base}{suffix}"
        if wb in w_base and wb != a:
            pairs.append((a, wb))
    return pairs


def sign_tests(reports, validation="oob", baseline="bagging", weightings=()):
    """Fraction of runs in which an algorithm's test NMSE is strictly lower."""
    by_key = {}
    for r in reports:
        by_key.setdefault((r.dataset, r.noise, r.length), {}).setdefault(r.algorithm, {})[r.run_id] = r.nmse
    rows = []
    for (dataset, noise, length), algs in by_key.items():
        for a, b in _win_pairs(list(algs), baseline, weightings):
            if a not in algs or b not in algs:
                continue
            runs = sorted(set(algs[a]) & set(algs[b]))
            if not runs:
                continue
            wins = sum(algs[a][i] < algs[b][i] for i in runs)
            frac, sig = sign_test(wins, len(runs))
            rows.append(
                dict(
                    dataset=dataset,
                    validation=validation,
                    noise=noise,
                    length=length,
                    algorithm=a,
                    versus=b,
                    wins=wins,
                    n_runs=len(runs),
                    fraction=frac,
                    significant=sig,
                )
            )
    return rows


# --------------------------------------------------------------------------
# tables

SUMMARY_FIELDS = [
    "dataset", "validation", "noise", "length", "algorithm",
    "n_runs", "mean_nmse", "mean_error", "variance",
]
SIGN_FIELDS = [
    "dataset", "validation", "noise", "length", "algorithm",
    "versus", "wins", "n_runs", "fraction", "significant",
]
_ALG_ORDER = ["Single", "Bagging", "Epoch", "NeuralBAG", "SECA", "SimAnn"]


def _alg_key(name):
    plain = name[2:] if name.startswith("W-") else name
    plain = plain.split("(")[0]
    idx = _ALG_ORDER.index(plain) if plain in _ALG_ORDER else len(_ALG_ORDER)
    return (name.startswith("W-"), idx, name)


def _write_csv(rows, fieldnames, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_summary_csv(path):
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                dict(
                    dataset=row["dataset"],
                    validation=row["validation"],
                    noise=row["noise"],
                    length=int(row["length"]),
                    algorithm=row["algorithm"],
                    n_runs=int(row["n_runs"]),
                    mean_nmse=float(row["mean_nmse"]),
                    mean_error=float(row["mean_error"]),
                    variance=float(row["variance"]),
                )
            )
    return out


def read_sign_csv(path):
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                dict(
                    dataset=row["dataset"],
                    validation=row["validation"],
                    noise=row["noise"],
                    length=int(row["length"]),
                    algorithm=row["algorithm"],
                    versus=row["versus"],
                    wins=int(row["wins"]),
                    n_runs=int(row["n_runs"]),
                    fraction=float(row["fraction"]),
                    significant=row["significant"] == "True",
                )
            )
    return out


def nmse_table(summary):
    """{(dataset, validation): (algorithms, [(noise, length, {alg: nmse}, best)])}"""
    tables = {}
    for row in summary:
        key = (row["dataset"], row["validation"])
        tables.setdefault(key, {}).setdefault((row["noise"], row["length"]), {})[row["algorithm"]] = row["mean_nmse"]
    out = {}
    for key, cells in tables.items():
        algs = sorted({a for vals in cells.values() for a in vals}, key=_alg_key)
        rows = []
        for (noise, length), vals in cells.items():
            candidates = {a: v for a, v in vals.items() if a != "Single"} or vals
            best = min(candidates, key=candidates.get)
            rows.append((noise, length, vals, best))
        out[key] = (algs, rows)
    return out


def emit_tables(summary, tests, out_dir):
    """Write summary.csv, signtests.csv and tables.md (NMSE in units of 1e-2)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(summary, SUMMARY_FIELDS, out_dir / "summary.csv")
    _write_csv(tests, SIGN_FIELDS, out_dir / "signtests.csv")
    md = render_markdown(summary, tests)
    (out_dir / "tables.md").write_text(md)
    best_rows = []
    for (dataset, validation), (algs, rows) in nmse_table(summary).items():
        for noise, length, vals, best in rows:
            for a in algs:
                if a in vals:
                    best_rows.append(
                        dict(dataset=dataset, validation=validation, noise=noise, length=length,
                             algorithm=a, nmse_e2=vals[a] * 100, best=a == best)
                    )
    _write_csv(best_rows, ["dataset", "validation", "noise", "length", "algorithm", "nmse_e2", "best"],
               out_dir / "table_nmse.csv")
    return md


def render_markdown(summary, tests):
    lines = []
    tables = nmse_table(summary)
    if not tables:
        lines.append("| Data set | Noise | Length | NMSE (1e-2) |")
        lines.append("|---|---|---|---|")
    for (dataset, validation), (algs, rows) in tables.items():
        lines.append(f"### {dataset}, validation: {validation} (NMSE in units of 1e-2)")
        lines.append("")
        lines.append("| Noise | Length | " + " | ".join(algs) + " |")
        lines.append("|---|---|" + "---|" * len(algs))
        for noise, length, vals, best in rows:
            cells = []
            for a in algs:
                if a not in vals:
                    cells.append("")
                elif a == best:
                    cells.append(f"**{vals[a] * 100:.3g}**")
                else:
                    cells.append(f"{vals[a] * 100:.3g}")
            lines.append(f"| {noise} | {length} | " + " | ".join(cells) + " |")
        lines.append("")
    if tests:
        lines.append("### Sign tests (fraction of runs won; bold = significant at 95%)")
        lines.append("")
        lines.append("| Data set | Noise | Length | Algorithm | vs | Fraction |")
        lines.append("|---|---|---|---|---|---|")
        for t in tests:
            frac = f"{t['fraction']:.2f}"
            if t["significant"]:
                frac = f"**{frac}**"
            lines.append(
                f"| {t['dataset']} | {t['noise']} | {t['length']} | {t['algorithm']} | {t['versus']} | {frac} |"
            )
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# alpha sweep


def alpha_sweep(cfg: ExperimentConfig, alphas, laws=("power", "exp"), selector="seca", progress=None):
    """Test NMSE of a weighted selector across alphas, reusing each run's cube.

    Returns (per-run rows, mean rows); each row has alpha, law and nmse.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("empty alpha list")
    per_run = []
    for rep in range(cfg.reps):
        r = build_replication(cfg, rep)
        if selector == "simann":
            base = SELECTORS[selector](
                r.cube_select, cfg=SimAnnConfig(p=cfg.p, seed=_Streams(cfg.seed, rep).seq(_Streams.SIMANN))
            )
        else:
            base = SELECTORS[selector](r.cube_select)
        for law in laws:
            for alpha in alphas:
                sel = weight_selection(base, r.cube_data, law, alpha)
                rep_ = evaluate(r.cube_test, sel, r.total_variance, run_id=rep, dataset=dataset_family(cfg.dataset),
                                noise=str(cfg.noise), length=cfg.train_size, algorithm=selector)
                per_run.append(dict(run_id=rep, law=law, alpha=alpha, nmse=rep_.nmse))
        if progress:
            progress(rep)
    means = []
    for law in laws:
        for alpha in alphas:
            vals = [row["nmse"] for row in per_run if row["law"] == law and row["alpha"] == alpha]
            means.append(dict(law=law, alpha=alpha, mean_nmse=float(np.mean(vals)), n_runs=len(vals)))
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(per_run, ["run_id", "law", "alpha", "nmse"], out / "alpha_sweep_runs.csv")
        _write_csv(means, ["law", "alpha", "mean_nmse", "n_runs"], out / "alpha_sweep.csv")
    return per_run, means


# --------------------------------------------------------------------------
# config files


def config_to_text(cfg: ExperimentConfig):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(v)
        lines.append(f"{f.name}={'' if v is None else v}")
    return "\n".join(lines) + "\n"


def parse_config_text(text):
    """key=value lines (``#`` comments) to a dict of typed ExperimentConfig fields."""
    types = {f.name: f for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(getattr(defaults, key), value)
    return out


def _coerce(default, value):
    if value == "":
        return None
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if default is None:
        for cast in (int, float):
            try:
                return cast(value)
            except ValueError:
                pass
    return value


def paper_grid(dataset, full=False, **overrides):
    """All (noise, size) configurations used for ``dataset``."""
    spec = BENCHMARK_SETTINGS[dataset_family(dataset)]
    return [
        ExperimentConfig.paper_defaults(dataset, noise=noise, train_size=size, full=full, **overrides)
        for noise in spec["noise"]
        for size in spec["sizes"]
    ]
