"""Causal-MSE scoring and the replicate benchmark harness.

A run crosses methods x replicates (x noise levels for the proxy
corruption grid). Each replicate derives its seed from the base seed by
XOR with the replicate index, draws fresh training data and a held-out
proxy sample, fits every method, and scores the predicted potential
outcome curve against a single shared ground-truth curve.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import estimators, scm
from .errors import DimensionError, DomainError, ProxmmrError
from .tensor import Tensor

TRUTH_SEED = 20220601        # ground truth is shared by every method/replicate
TRUTH_MC = 10_000
_HELDOUT_TAG = 0x8E1D_0074_0000_0003
HELDOUT_M = 1000


def c_mse(predicted: Tensor, truth: Tensor) -> float:
    """Mean squared gap between curves of equal length."""
    p = np.ravel(predicted)
    t = np.ravel(truth)
    if p.shape != t.shape:
        raise DimensionError(f"curve length mismatch: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


@dataclass
class EvalRecord:
    method: str
    n_train: int
    var_z: float
    var_w: float
    replicate: int
    seed: int
    c_mse: Optional[float]
    curve: Optional[Tensor]
    truth: Optional[Tensor]
    wall_s: float
    status: str  # "ok" or "failed: <reason>"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SummaryRow:
    method: str
    n_train: int
    var_z: float
    var_w: float
    median: Optional[float]
    iqr: Optional[float]
    count: int
    failures: int


def demand_truth_curve(var_w: float = 1.0, mc: int = TRUTH_MC,
                       seed: int = TRUTH_SEED):
    grid = scm.demand_eval_grid()
    ey, se = scm.demand_ground_truth(grid, mc, seed, var_w=var_w)
    return grid, ey, se


def _run_one(task: Dict) -> EvalRecord:
    method = task["method"]
    replicate = task["replicate"]
    seed = task["base_seed"] ^ replicate
    start = time.perf_counter()
    try:
        if task["experiment"] == "demand":
            cfg = scm.DemandConfig(
                n=task["n_train"], var_z1=task["var_z"], var_z2=task["var_z"],
                var_w=task["var_w"], seed=seed,
            )
            data = scm.demand_sample(cfg)
            held_cfg = scm.DemandConfig(
                n=HELDOUT_M, var_z1=task["var_z"], var_z2=task["var_z"],
                var_w=task["var_w"], seed=seed ^ _HELDOUT_TAG,
            )
            heldout_w = scm.demand_sample(held_cfg).w
            a_grid = np.asarray(task["a_grid"])
        else:
            cfg = scm.SpriteConfig(
                n=task["n_train"], side=task["side"], b_seed=task["b_seed"],
                seed=seed,
            )
            data = scm.sprite_sample(cfg)
            held_cfg = scm.SpriteConfig(
                n=HELDOUT_M, side=task["side"], b_seed=task["b_seed"],
                seed=seed ^ _HELDOUT_TAG,
            )
            heldout_w = scm.sprite_sample(held_cfg).w
            a_grid = np.asarray(task["a_grid"])
        train_config = estimators.default_train_config(
            task["experiment"], method, seed=seed,
            side=task.get("side", 32), overrides=task.get("overrides"),
        )
        est = estimators.fit(data.estimator_view(), train_config,
                             task["experiment"])
        curve = estimators.predict_curve(est, a_grid, heldout_w)
        truth = np.asarray(task["truth"])
        score = c_mse(curve, truth)
        if not np.isfinite(score):
            raise ProxmmrError("non-finite c-MSE")
        record = EvalRecord(
            method=method, n_train=task["n_train"], var_z=task["var_z"],
            var_w=task["var_w"], replicate=replicate, seed=seed,
            c_mse=score, curve=curve, truth=truth,
            wall_s=time.perf_counter() - start, status="ok",
        )
    except ProxmmrError as exc:
        record = EvalRecord(
            method=method, n_train=task["n_train"], var_z=task["var_z"],
            var_w=task["var_w"], replicate=replicate, seed=seed,
            c_mse=None, curve=None, truth=None,
            wall_s=time.perf_counter() - start,
            status=f"failed: {exc}",
        )
    return record


def run_replicates(experiment: str, methods: Sequence[str], n_train: int,
                   replicates: int, base_seed: int,
                   var_z: float = 1.0, var_w: float = 1.0,
                   overrides: Optional[Dict] = None, jobs: int = 1,
                   side: int = 32, b_seed: int = 0) -> List[EvalRecord]:
    if replicates < 1:
        raise DomainError(f"replicates must be >= 1, got {replicates}")
    if experiment == "demand":
        # The scored estimand is the standard benchmark curve: proxy
        # corruption changes the data a method sees, never the target.
        a_grid, truth, _ = demand_truth_curve()
    elif experiment == "sprite":
        _, images, truth = scm.sprite_truth_curve(
            scm.SpriteConfig(n=1, side=side, b_seed=b_seed)
        )
        a_grid = images
    else:
        raise DomainError(f"unknown experiment: {experiment}")
    tasks = [
        {
            "experiment": experiment, "method": method, "replicate": r,
            "base_seed": base_seed, "n_train": n_train,
            "var_z": var_z, "var_w": var_w, "overrides": overrides,
            "side": side, "b_seed": b_seed,
            "a_grid": a_grid, "truth": truth,
        }
        for method in methods
        for r in range(replicates)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]
    records.sort(key=_record_key)
    return records


def run_noise_grid(methods: Sequence[str], n_train: int = 5000,
                   replicates: int = 20, base_seed: int = 0,
                   cells: Optional[Sequence[Tuple[float, float]]] = None,
                   overrides: Optional[Dict] = None,
                   jobs: int = 1) -> List[EvalRecord]:
    """run_replicates over each (var_z, var_w) cell of the corruption grid."""
    records: List[EvalRecord] = []
    for var_z, var_w in (cells if cells is not None else scm.noise_grid()):
        records.extend(run_replicates(
            "demand", methods, n_train, replicates, base_seed,
            var_z=var_z, var_w=var_w, overrides=overrides, jobs=jobs,
        ))
    records.sort(key=_record_key)
    return records


def _record_key(rec: EvalRecord):
    return (rec.method, rec.n_train, rec.var_z, rec.var_w, rec.replicate)


def summarize(records: Sequence[EvalRecord]) -> List[SummaryRow]:
    """Median and IQR per group; quartiles use linear interpolation."""
    if not records:
        raise DomainError("summarize requires at least one record")
    groups: Dict[Tuple, List[EvalRecord]] = {}
    for rec in records:
        groups.setdefault(
            (rec.method, rec.n_train, rec.var_z, rec.var_w), []
        ).append(rec)
    rows = []
    for key in sorted(groups):
        group = groups[key]
        values = [r.c_mse for r in group if r.ok]
        failures = len(group) - len(values)
        if values:
            arr = np.array(values)
            median = float(np.median(arr))
            q1, q3 = np.percentile(arr, [25.0, 75.0])  # type-7 quartiles
            iqr = float(q3 - q1)
        else:
            median = iqr = None
        rows.append(SummaryRow(
            method=key[0], n_train=key[1], var_z=key[2], var_w=key[3],
            median=median, iqr=iqr, count=len(values), failures=failures,
        ))
    return rows


# -- CSV interfaces ----------------------------------------------------

RECORD_FIELDS = ("method", "n_train", "var_z", "var_w", "replicate", "seed",
                 "c_mse", "wall_s", "status")
SUMMARY_FIELDS = ("method", "n_train", "var_z", "var_w", "median", "iqr",
                  "count", "failures")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_records_csv(records: Sequence[EvalRecord], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow([
                r.method, r.n_train, _fmt(r.var_z), _fmt(r.var_w),
                r.replicate, r.seed, _fmt(r.c_mse), _fmt(r.wall_s), r.status,
            ])


def read_records_csv(path) -> List[EvalRecord]:
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != list(RECORD_FIELDS):
            raise ProxmmrError(f"{path}:1: bad records header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RECORD_FIELDS):
                raise ProxmmrError(
                    f"{path}:{lineno}: expected {len(RECORD_FIELDS)} fields, "
                    f"got {len(row)}"
                )
            try:
                records.append(EvalRecord(
                    method=row[0], n_train=int(row[1]),
                    var_z=float(row[2]), var_w=float(row[3]),
                    replicate=int(row[4]), seed=int(row[5]),
                    c_mse=float(row[6]) if row[6] else None,
                    curve=None, truth=None,
                    wall_s=float(row[7]) if row[7] else 0.0,
                    status=row[8],
                ))
            except ValueError as exc:
                raise ProxmmrError(f"{path}:{lineno}: {exc}") from None
    return records


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_FIELDS)
        for r in rows:
            writer.writerow([
                r.method, r.n_train, _fmt(r.var_z), _fmt(r.var_w),
                _fmt(r.median), _fmt(r.iqr), r.count, r.failures,
            ])
