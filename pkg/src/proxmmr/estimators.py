"""Trainers and predictors with a uniform fit/predict contract.

Methods: nmmr-u, nmmr-v (kernel-loss bridge networks), naive (MSE
network on the treatment alone, i.e. the confounded observational
regression), ls, ls-qf (ordinary least squares), 2sls (two-stage least
squares). Every fitted estimator exposes ``predict(a_rows, w_rows)`` and
all expected potential outcomes are formed by averaging predictions over
a held-out proxy sample.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import kernels, nn
from .autodiff import Tape
from .errors import ConfigError, DomainError, TrainingError
from .kernels import KernelConfig
from .nn import BridgeModel, MlpConfig
from .scm import EstimatorView
from .tensor import Rng, Tensor

METHODS = ("nmmr-u", "nmmr-v", "naive", "ls", "ls-qf", "2sls")

_INIT_TAG = 0x1D17_AC5E_0000_0001
_SHUFFLE_TAG = 0x5F5F_13B2_0000_0002

_RIDGE = 1e-10


@dataclass(frozen=True)
class TrainConfig:
    method: str
    lr: float = 3e-3
    l2: float = 3e-6
    epochs: int = 3000
    batch_size: int = 1000
    mlp: MlpConfig = field(default_factory=lambda: MlpConfig(2, 4, 80))
    kernel: KernelConfig = field(default_factory=KernelConfig)
    seed: int = 0
    batched_loss: bool = False  # block-iterated kernel statistic

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method: {self.method}")
        if self.l2 < 0 or self.epochs < 1:
            raise ConfigError("l2 must be >= 0 and epochs >= 1")
        if self.method in ("nmmr-u",) and self.batch_size < 2:
            raise ConfigError("U-statistic methods need batch_size >= 2")


# Shipped defaults: the tuned demand configurations, and a desk-scale
# flat-input network for the sprite benchmark.
_DEMAND_NET = {
    "nmmr-u": dict(lr=3e-3, l2=3e-6, epochs=3000, batch_size=1000, depth=4, width=80),
    "nmmr-v": dict(lr=3e-3, l2=3e-6, epochs=3000, batch_size=1000, depth=3, width=80),
    "naive": dict(lr=3e-3, l2=3e-6, epochs=3000, batch_size=1000, depth=2, width=80),
}
_SPRITE_NET = {
    "nmmr-u": dict(lr=3e-4, l2=3e-6, epochs=500, batch_size=256, depth=3, width=128),
    "nmmr-v": dict(lr=3e-4, l2=3e-7, epochs=500, batch_size=256, depth=3, width=128),
    "naive": dict(lr=3e-4, l2=3e-6, epochs=500, batch_size=256, depth=3, width=128),
}


def default_train_config(experiment: str, method: str, seed: int = 0,
                         side: int = 32, overrides: Optional[Dict] = None) -> TrainConfig:
    if method not in METHODS:
        raise ConfigError(f"unknown method: {method}")
    overrides = dict(overrides or {})
    if method in ("ls", "ls-qf", "2sls"):
        if overrides:
            raise ConfigError(f"{method} accepts no training overrides")
        return TrainConfig(method=method, seed=seed, mlp=MlpConfig(2, 1, 1))
    table = _DEMAND_NET if experiment == "demand" else _SPRITE_NET
    base = dict(table[method])
    base.update({k: v for k, v in overrides.items() if v is not None})
    if method == "naive":
        input_dim = 1 if experiment == "demand" else side * side
    else:
        input_dim = 2 if experiment == "demand" else 2 * side * side
    mlp = MlpConfig(input_dim=input_dim, depth=base.pop("depth"),
                    width=base.pop("width"), seed=seed)
    return TrainConfig(
        method=method, mlp=mlp, seed=seed,
        batched_loss=(experiment == "sprite"), **base,
    )


class FittedEstimator:
    """Frozen estimator: a pure, deterministic predict plus diagnostics."""

    def __init__(self, method: str, diagnostics: Optional[Dict] = None):
        self.method = method
        self.diagnostics = diagnostics or {}

    def predict(self, a_rows: Tensor, w_rows: Tensor) -> Tensor:
        raise NotImplementedError


class NetworkEstimator(FittedEstimator):
    """Bridge networks read (a, w); the naive net is a regression in a
    alone, so its curve is the confounded observational E[Y | A = a]."""

    def __init__(self, method, model: BridgeModel, diagnostics=None):
        super().__init__(method, diagnostics)
        self.model = model

    def predict(self, a_rows, w_rows):
        if self.method == "naive":
            return nn.forward_ref(self.model, a_rows)
        return nn.forward_ref(self.model, np.hstack([a_rows, w_rows]))


class LinearEstimator(FittedEstimator):
    """Linear map of a fixed design expansion of (a, w)."""

    def __init__(self, method, coef: Tensor, quadratic: bool, diagnostics=None):
        super().__init__(method, diagnostics)
        self.coef = coef
        self.quadratic = quadratic

    def predict(self, a_rows, w_rows):
        return _design(a_rows, w_rows, self.quadratic) @ self.coef


def _design(a: Tensor, w: Tensor, quadratic: bool) -> Tensor:
    cols = [np.ones((a.shape[0], 1)), a, w]
    if quadratic:
        cols += [a * a, w * w, a * w]
    return np.hstack(cols)


def _solve_ols(x: Tensor, y: Tensor) -> Tensor:
    # Tiny ridge keeps degenerate designs solvable.
    gram = x.T @ x + _RIDGE * np.eye(x.shape[1])
    return np.linalg.solve(gram, x.T @ y)


def fit_ls(view: EstimatorView, quadratic: bool = False) -> FittedEstimator:
    coef = _solve_ols(_design(view.a, view.w, quadratic), view.y)
    method = "ls-qf" if quadratic else "ls"
    return LinearEstimator(method, coef, quadratic)


def fit_2sls(view: EstimatorView) -> FittedEstimator:
    n = view.n
    x1 = np.hstack([np.ones((n, 1)), view.a, view.z])
    if n <= x1.shape[1]:
        raise DomainError("2sls needs more samples than regressors")
    b1 = _solve_ols(x1, view.w)
    w_hat = x1 @ b1
    ss_res = ((view.w - w_hat) ** 2).sum(axis=0)
    ss_tot = ((view.w - view.w.mean(axis=0)) ** 2).sum(axis=0)
    r2 = [float(1.0 - sr / st) if st > 0 else 0.0
          for sr, st in zip(ss_res, ss_tot)]
    x2 = np.hstack([np.ones((n, 1)), view.a, w_hat])
    coef = _solve_ols(x2, view.y)
    return LinearEstimator("2sls", coef, False,
                           diagnostics={"stage1_r2": r2})


def _epoch_batches(rng: Rng, n: int, batch_size: int):
    if batch_size >= n:
        yield np.arange(n)
        return
    perm = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield perm[lo:lo + batch_size]


def _network_loss(tape: Tape, model, inputs, targets, config: TrainConfig,
                  features=None, kernel_matrix=None):
    """Record the training loss on the tape; returns (loss id, param ids)."""
    pred, pids = nn.forward(model, inputs, tape)
    if config.method == "naive":
        err = tape.sub(tape.constant(targets), pred)
        data_term = tape.mean(tape.square(err))
    else:
        variant = "u" if config.method == "nmmr-u" else "v"
        r = tape.sub(tape.constant(targets), pred)
        if config.batched_loss:
            data_term = kernels.batched_statistic_node(
                tape, r, features, config.kernel, variant
            )
        else:
            K = kernel_matrix
            if K is None:
                K = kernels.rbf_matrix(features, config.kernel)
            data_term = kernels.statistic_node(tape, r, K, variant)
    penalty = nn.l2_penalty(tape, pids)
    loss = tape.add(data_term, tape.scale(penalty, config.l2))
    return loss, pids


def fit_network(view: EstimatorView, config: TrainConfig,
                experiment: str) -> FittedEstimator:
    """Train an MLP under the MSE (naive) or kernel-statistic loss."""
    n = view.n
    inputs = view.a if config.method == "naive" else np.hstack([view.a, view.w])
    features = None
    cached_k = None
    if config.method != "naive":
        features = kernels.kernel_features(view, experiment, config.kernel)
        if config.batch_size >= n and not config.batched_loss:
            cached_k = kernels.rbf_matrix(features, config.kernel)

    model = nn.init_mlp(config.mlp, Rng(config.seed ^ _INIT_TAG))
    state = nn.OptimizerState(
        [p.shape for p in model.parameters()], lr=config.lr
    )
    shuffle_rng = Rng(config.seed ^ _SHUFFLE_TAG)
    trace: List[float] = []
    last_idx = np.arange(n)

    def batch_loss(idx, record_grads):
        tape = Tape()
        loss, pids = _network_loss(
            tape, model, inputs[idx], view.y[idx], config,
            features=None if features is None else features[idx],
            kernel_matrix=cached_k if idx.size == n else None,
        )
        val = float(tape.value(loss)[0, 0])
        if not np.isfinite(val):
            raise TrainingError(f"non-finite loss at step {len(trace)}", trace)
        if record_grads:
            tape.backward(loss)
            return val, [tape.grad(p) for p in pids]
        return val, None

    for _ in range(config.epochs):
        for idx in _epoch_batches(shuffle_rng, n, config.batch_size):
            if config.method == "nmmr-u" and idx.size < 2:
                warnings.warn("skipping size-1 batch under the U-statistic")
                continue
            val, grads = batch_loss(idx, record_grads=True)
            trace.append(val)
            model.set_parameters(nn.adam_step(state, model.parameters(), grads))
            last_idx = idx
    # Final trace entry: the last batch's loss under the frozen parameters.
    final_loss, _ = batch_loss(last_idx, record_grads=False)
    trace.append(final_loss)
    return NetworkEstimator(config.method, model, diagnostics={
        "trace": trace,
        "final_loss": final_loss,
        "final_batch": last_idx.copy(),
    })


def fit(view: EstimatorView, config: TrainConfig,
        experiment: str = "demand") -> FittedEstimator:
    if config.method == "ls":
        return fit_ls(view, quadratic=False)
    if config.method == "ls-qf":
        return fit_ls(view, quadratic=True)
    if config.method == "2sls":
        return fit_2sls(view)
    return fit_network(view, config, experiment)


def predict_curve(est: FittedEstimator, a_grid: Tensor,
                  heldout_w: Tensor) -> Tensor:
    """Mean prediction over held-out proxy rows, per treatment grid row."""
    if heldout_w.shape[0] < 1:
        raise DomainError("heldout_w must be nonempty")
    m = a_grid.shape[0]
    out = np.empty((m, 1))
    for i in range(m):
        a_rows = np.tile(a_grid[i:i + 1], (heldout_w.shape[0], 1))
        out[i, 0] = float(est.predict(a_rows, heldout_w).mean())
    return out


# -- persistence -------------------------------------------------------


def estimator_to_json(est: FittedEstimator) -> dict:
    if isinstance(est, NetworkEstimator):
        doc = nn.model_to_json(est.model)
        doc["method"] = est.method
        return doc
    if isinstance(est, LinearEstimator):
        return {
            "schema_version": nn.SCHEMA_VERSION,
            "method": est.method,
            "quadratic": est.quadratic,
            "coefficients": [float(c) for c in est.coef.ravel()],
        }
    raise ConfigError(f"cannot serialize {type(est).__name__}")


def estimator_from_json(doc: dict) -> FittedEstimator:
    method = doc["method"]
    if "coefficients" in doc:
        coef = np.array(doc["coefficients"], dtype=np.float64).reshape(-1, 1)
        return LinearEstimator(method, coef, doc["quadratic"])
    return NetworkEstimator(method, nn.model_from_json(doc))
