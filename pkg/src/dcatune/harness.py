"""Config-driven experiment runner.

A YAML config names a problem family, a data source (synthetic
parameters or a LIBSVM file), a method and its options, and a number of
repetitions.  Repetition ``i`` uses seed ``seed_base + i`` for data
generation/shuffling, so (config, seed) fully determines every emitted
number.  Reported wall time covers the method only (data generation and
I/O excluded).
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from . import applications as apps
from . import baselines, data as dataio, dca
from .errors import DcatuneError, InvalidInputError
from .kernel import SolveOptions

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "load_config",
    "run_experiment",
    "run_single_trace",
    "aggregate",
    "emit",
    "read_records",
    "generate_datasets",
]

PROBLEMS = ("elastic-net", "sparse-group-lasso", "svm-cv")
METHODS = ("dca", "grid", "random")

_CSV_FIELDS = (
    "method",
    "seed",
    "time_s",
    "val_err",
    "test_err",
    "t_final",
    "delta_final",
    "alpha_final",
    "status",
)

_CSV_HEADER_NOTE = (
    "# dcatune experiment records; time_s is method-only wall time "
    "(data generation and I/O excluded)"
)


@dataclass
class ExperimentConfig:
    problem: str
    method: str = "dca"
    repetitions: int = 1
    seed_base: int = 0
    workers: int = 1
    output: Optional[str] = None
    data: dict = field(default_factory=dict)
    algorithm: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise InvalidInputError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.repetitions < 1:
            raise InvalidInputError("repetitions must be >= 1")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        src = self.data.get("file")
        if src is not None and not Path(src).exists():
            raise InvalidInputError(f"data file {src!r} does not exist")


@dataclass
class ExperimentRecord:
    method: str
    seed: int
    time_s: float
    val_err: float
    test_err: float
    t_final: float = math.nan
    delta_final: float = math.nan
    alpha_final: float = math.nan
    status: str = "ok"


def load_config(path, **overrides):
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise InvalidInputError("config must be a mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**raw)


# ---------------------------------------------------------------------------
# problem construction


@dataclass
class _Bundle:
    spec: object
    init: object
    val_data: object
    test_data: object
    hyper_map_grid: object
    hyper_map_random: object
    folds: object = None


def _algo_options(cfg):
    defaults = {"elastic-net": {}, "sparse-group-lasso": {"c_alpha": 0.1, "tol": 0.05}, "svm-cv": {}}[
        cfg.problem
    ]
    params = {**defaults, **cfg.algorithm}
    params.pop("r0", None)
    inner = {}
    for key in ("inner_eps_abs", "inner_eps_rel", "inner_max_iters"):
        if key in params:
            inner[key.removeprefix("inner_")] = params.pop(key)
    opts = dca.AlgoOptions(**params)
    if inner:
        opts = replace(
            opts,
            ll_options=replace(opts.ll_options, **inner),
            sub_options=replace(opts.sub_options, **inner),
        )
    return opts


def _load_file_dataset(cfg):
    with open(cfg.data["file"]) as fh:
        return dataio.parse_libsvm(fh, n_features=cfg.data.get("n_features"))


def _build_problem(cfg, seed):
    d = cfg.data
    if cfg.problem == "elastic-net":
        if "file" in d:
            full = _load_file_dataset(cfg)
            n_tr, n_val = int(d["n_train"]), int(d["n_val"])
            n_te = int(d.get("n_test", full.sample_count - n_tr - n_val))
            train, val, test = dataio.split_shuffle(full, (n_tr, n_val, n_te), seed)
        else:
            train, val, test, _ = dataio.gen_elastic_net(
                int(d.get("n_train", 100)),
                int(d.get("n_val", 20)),
                int(d.get("n_test", 250)),
                int(d.get("p", 250)),
                seed,
            )
        spec = apps.elastic_net_spec(train, val)
        r0 = cfg.algorithm.get("r0", (10.0, 5.0))
        init = dca.initial_iterate(spec, r0=r0)
        return _Bundle(
            spec=spec,
            init=init,
            val_data=val,
            test_data=test,
            hyper_map_grid=apps.elastic_net_hyper_map(tuple(cfg.search.get("log_range", (-5.0, 2.0)))),
            hyper_map_random=apps.elastic_net_hyper_map(tuple(cfg.search.get("log_range", (-5.0, 2.0)))),
        )

    if cfg.problem == "sparse-group-lasso":
        p = int(d.get("p", 600))
        m_groups = int(d.get("n_groups", 30))
        train, val, test, _, groups = dataio.gen_sparse_group_lasso(
            p,
            m_groups,
            seed,
            n_train=int(d.get("n_train", 100)),
            n_val=int(d.get("n_val", 100)),
            n_test=int(d.get("n_test", 100)),
        )
        spec = apps.sparse_group_lasso_spec(train, val, groups)
        r0 = cfg.algorithm.get("r0", np.full(m_groups + 1, 10.0))
        init = dca.initial_iterate(spec, r0=r0)
        rng_range = tuple(cfg.search.get("log_range", (-3.0, 1.0)))
        return _Bundle(
            spec=spec,
            init=init,
            val_data=val,
            test_data=test,
            hyper_map_grid=apps.sparse_group_lasso_hyper_map(m_groups, rng_range),
            hyper_map_random=apps.sparse_group_lasso_hyper_map(m_groups, rng_range, per_group=True),
        )

    # svm-cv
    if "file" in d:
        full = _load_file_dataset(cfg)
    else:
        full = dataio.gen_svm_binary(
            int(d.get("n", 200)),
            int(d.get("p", 10)),
            seed,
            label_noise=float(d.get("label_noise", 0.1)),
        )
    n_folds = int(d.get("n_folds", 3))
    cv_count = n_folds * (full.sample_count // (2 * n_folds))
    cv_part, test = dataio.split_shuffle(
        full, (cv_count, full.sample_count - cv_count), seed
    )
    wbar_lb = float(d.get("wbar_lb", 1e-6))
    wbar_ub = float(d.get("wbar_ub", 10.0))
    spec, folds = apps.svm_crossval_spec(cv_part, n_folds, wbar_lb, wbar_ub)
    r0 = cfg.algorithm.get("r0", (10.0,))
    init = dca.initial_iterate(spec, r0=r0)  # u0 defaults to the lower bounds
    lam_range = tuple(cfg.search.get("lam_range", (-4.0, 4.0)))
    wbar_range = tuple(cfg.search.get("wbar_range", (-6.0, 2.0)))
    return _Bundle(
        spec=spec,
        init=init,
        val_data=cv_part,
        test_data=test,
        hyper_map_grid=apps.svm_hyper_map(folds.p, lam_range, wbar_range),
        hyper_map_random=apps.svm_hyper_map(folds.p, lam_range, wbar_range, per_feature=True),
        folds=folds,
    )


def _metrics(cfg, bundle, x, u):
    if cfg.problem == "svm-cv":
        point = bundle.spec.full_point(x, u)
        val_err = float(bundle.spec.ul_loss.value(point))
        w, c = apps.svm_fold_average(bundle.folds, x)
        test_err = apps.zero_one_error(bundle.test_data, w, c)
        return val_err, test_err
    val_err = apps.squared_error(bundle.val_data, x)
    test_err = apps.squared_error(bundle.test_data, x)
    return val_err, test_err


def _run_repetition(cfg, index):
    seed = cfg.seed_base + index
    bundle = _build_problem(cfg, seed)
    method = cfg.method
    try:
        if method == "dca":
            opts = _algo_options(cfg)
            t0 = time.perf_counter()
            final, trace = dca.run(bundle.spec, bundle.init, opts, annotate_final=False)
            elapsed = time.perf_counter() - t0
            val_err, test_err = _metrics(cfg, bundle, final.x, final.u)
            last = trace.records[-1]
            return ExperimentRecord(
                method=method,
                seed=seed,
                time_s=elapsed,
                val_err=val_err,
                test_err=test_err,
                t_final=last.t,
                delta_final=last.delta_scaled,
                alpha_final=final.alpha,
                status=trace.reason,
            )
        hyper_map = bundle.hyper_map_grid if method == "grid" else bundle.hyper_map_random
        t0 = time.perf_counter()
        if method == "grid":
            res = baselines.grid_search(
                bundle.spec, hyper_map, grid_points=int(cfg.search.get("grid_points", 10))
            )
        else:
            res = baselines.random_search(
                bundle.spec,
                hyper_map,
                samples=int(cfg.search.get("samples", 100)),
                seed=seed,
            )
        elapsed = time.perf_counter() - t0
        val_err, test_err = _metrics(cfg, bundle, res.x_best, res.best.u)
        return ExperimentRecord(
            method=method,
            seed=seed,
            time_s=elapsed,
            val_err=val_err,
            test_err=test_err,
            status="ok" if res.n_failed == 0 else f"{res.n_failed}-failed-nodes",
        )
    except DcatuneError as exc:
        return ExperimentRecord(
            method=method,
            seed=seed,
            time_s=math.nan,
            val_err=math.nan,
            test_err=math.nan,
            status=f"failed: {exc}",
        )


def run_experiment(cfg):
    """Run all repetitions; returns (records, aggregate).

    Repetitions are independent and may run in a process pool; records
    are reduced in seed order either way.
    """
    indices = list(range(cfg.repetitions))
    if cfg.workers > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, cfg.repetitions)) as pool:
            records = list(pool.map(_run_repetition, [cfg] * len(indices), indices))
    else:
        records = [_run_repetition(cfg, i) for i in indices]
    return records, aggregate(records)


def aggregate(records):
    """Mean, sample std and median of each metric over successful reps."""
    ok = [r for r in records if not r.status.startswith("failed")]
    out = {"n": len(records), "n_failed": len(records) - len(ok)}
    for col in ("time_s", "val_err", "test_err"):
        vals = np.array([getattr(r, col) for r in ok], dtype=float)
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            out[col] = {"mean": math.nan, "std": math.nan, "median": math.nan}
        else:
            out[col] = {
                "mean": float(vals.mean()),
                "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                "median": float(np.median(vals)),
            }
    return out


def run_single_trace(cfg, seed=None):
    """One repetition with per-iteration records (for trace plots)."""
    bundle = _build_problem(cfg, cfg.seed_base if seed is None else seed)
    opts = _algo_options(cfg)
    final, trace = dca.run(bundle.spec, bundle.init, opts, annotate_final=False)
    return final, trace


def generate_datasets(cfg, seed, out_dir):
    """Materialize the config's synthetic datasets as LIBSVM text files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.data
    if cfg.problem == "elastic-net":
        train, val, test, _ = dataio.gen_elastic_net(
            int(d.get("n_train", 100)),
            int(d.get("n_val", 20)),
            int(d.get("n_test", 250)),
            int(d.get("p", 250)),
            seed,
        )
        parts = {"train": train, "val": val, "test": test}
    elif cfg.problem == "sparse-group-lasso":
        train, val, test, _, _ = dataio.gen_sparse_group_lasso(
            int(d.get("p", 600)),
            int(d.get("n_groups", 30)),
            seed,
            n_train=int(d.get("n_train", 100)),
            n_val=int(d.get("n_val", 100)),
            n_test=int(d.get("n_test", 100)),
        )
        parts = {"train": train, "val": val, "test": test}
    else:
        full = dataio.gen_svm_binary(
            int(d.get("n", 200)),
            int(d.get("p", 10)),
            seed,
            label_noise=float(d.get("label_noise", 0.1)),
        )
        parts = {"full": full}
    paths = []
    for name, ds in parts.items():
        path = out / f"{cfg.problem}-{name}-seed{seed}.libsvm"
        with open(path, "w") as fh:
            dataio.write_libsvm(ds, fh)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# output


def emit(records, fmt="csv", path=None):
    """Render records as CSV or a human table; write to ``path`` or
    return the text."""
    if not records:
        raise InvalidInputError("no records to emit")
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(_CSV_HEADER_NOTE + "\n")
        writer = csv.writer(buf)
        writer.writerow(_CSV_FIELDS)
        for r in records:
            writer.writerow(
                [
                    r.method,
                    r.seed,
                    f"{r.time_s:.6g}",
                    f"{r.val_err:.10g}",
                    f"{r.test_err:.10g}",
                    f"{r.t_final:.6g}",
                    f"{r.delta_final:.6g}",
                    f"{r.alpha_final:.6g}",
                    r.status,
                ]
            )
        text = buf.getvalue()
    elif fmt == "table":
        by_method = {}
        for r in records:
            by_method.setdefault(r.method, []).append(r)
        lines = [
            f"{'Method':<10} {'Time':>16} {'Val. Err.':>16} {'Test Err.':>16} "
            f"{'Med. Val.':>10} {'Med. Test':>10}"
        ]
        for name, recs in by_method.items():
            agg = aggregate(recs)
            cells = [
                f"{agg[c]['mean']:.2f} ± {agg[c]['std']:.2f}"
                for c in ("time_s", "val_err", "test_err")
            ]
            lines.append(
                f"{name:<10} {cells[0]:>16} {cells[1]:>16} {cells[2]:>16} "
                f"{agg['val_err']['median']:>10.2f} {agg['test_err']['median']:>10.2f}"
            )
        text = "\n".join(lines) + "\n"
    else:
        raise InvalidInputError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise InvalidInputError(f"cannot write {path!r}: {exc}") from exc
        return None
    return text


def read_records(path):
    """Parse a CSV produced by ``emit`` back into records."""
    records = []
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    for row in reader:
        records.append(
            ExperimentRecord(
                method=row["method"],
                seed=int(row["seed"]),
                time_s=float(row["time_s"]),
                val_err=float(row["val_err"]),
                test_err=float(row["test_err"]),
                t_final=float(row["t_final"]),
                delta_final=float(row["delta_final"]),
                alpha_final=float(row["alpha_final"]),
                status=row["status"],
            )
        )
    return records
