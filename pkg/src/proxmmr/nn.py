"""Multilayer perceptron: construction, tape forward pass, Adam, persistence.

Architecture is a chain of affine layers with ReLU between them and a
scalar output head. Initialization is He-uniform (bound sqrt(6/fan_in))
with zero biases, deterministic in the config seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .autodiff import Tape
from .errors import ConfigError, DimensionError, TrainingError
from .tensor import Rng, Tensor

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    depth: int
    width: int
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.input_dim < 1:
            raise ConfigError(f"invalid MLP config: {self}")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation: {self.activation}")

    def layer_dims(self) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) for each affine layer; output dim is 1."""
        if self.depth == 1:
            return [(self.input_dim, 1)]
        dims = [(self.input_dim, self.width)]
        dims += [(self.width, self.width)] * (self.depth - 2)
        dims.append((self.width, 1))
        return dims


class BridgeModel:
    """An MLP with explicit weight/bias arrays, one pair per layer."""

    def __init__(self, config: MlpConfig, layers: List[Tuple[Tensor, Tensor]]):
        self.config = config
        self.layers = layers

    def parameters(self) -> List[Tensor]:
        out = []
        for w, b in self.layers:
            out.extend([w, b])
        return out

    def set_parameters(self, params: List[Tensor]) -> None:
        self.layers = [
            (params[2 * i], params[2 * i + 1]) for i in range(len(self.layers))
        ]

    def copy(self) -> "BridgeModel":
        return BridgeModel(self.config, [(w.copy(), b.copy()) for w, b in self.layers])


def init_mlp(config: MlpConfig, rng: Optional[Rng] = None) -> BridgeModel:
    rng = rng if rng is not None else Rng(config.seed)
    layers = []
    for fan_in, fan_out in config.layer_dims():
        bound = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, (fan_in, fan_out))
        b = np.zeros((1, fan_out))
        layers.append((w, b))
    return BridgeModel(config, layers)


def forward(model: BridgeModel, inputs: Tensor, tape: Tape):
    """Record the forward pass; returns (output node id, parameter node ids).

    Parameter node ids alternate weight, bias per layer, matching
    ``model.parameters()`` order.
    """
    if inputs.shape[1] != model.config.input_dim:
        raise DimensionError(
            f"input has {inputs.shape[1]} columns, model expects "
            f"{model.config.input_dim}"
        )
    param_ids = []
    x = tape.constant(inputs)
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        wid = tape.leaf(w)
        bid = tape.leaf(b)
        param_ids.extend([wid, bid])
        x = tape.add(tape.matmul(x, wid), bid)
        if i != last:
            x = tape.relu(x)
    return x, param_ids


def forward_ref(model: BridgeModel, inputs: Tensor) -> Tensor:
    """Tape-free forward evaluation; must match the taped pass bit-exactly."""
    if inputs.shape[1] != model.config.input_dim:
        raise DimensionError(
            f"input has {inputs.shape[1]} columns, model expects "
            f"{model.config.input_dim}"
        )
    x = inputs
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        x = x @ w + b
        if i != last:
            x = np.maximum(x, 0.0)
    return x


def l2_penalty(tape: Tape, param_ids: List[int]):
    """Sum of squared weight-matrix entries; biases are excluded."""
    total = None
    for wid in param_ids[0::2]:
        s = tape.sum(tape.square(wid))
        total = s if total is None else tape.add(total, s)
    return total


class OptimizerState:
    """Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, shapes, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]


def adam_step(state: OptimizerState, params: List[Tensor],
              grads: List[Tensor]) -> List[Tensor]:
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient in Adam step")
    state.step_count += 1
    t = state.step_count
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / (1.0 - state.beta1 ** t)
        v_hat = state.v[i] / (1.0 - state.beta2 ** t)
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


# -- persistence -------------------------------------------------------


def model_to_json(model: BridgeModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "input_dim": model.config.input_dim,
            "depth": model.config.depth,
            "width": model.config.width,
            "activation": model.config.activation,
        },
        "layers": [
            {
                "rows": w.shape[0],
                "cols": w.shape[1],
                "weights": [float(x) for x in w.ravel()],
                "bias": [float(x) for x in b.ravel()],
            }
            for w, b in model.layers
        ],
    }


def model_from_json(doc: dict) -> BridgeModel:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version: {doc.get('schema_version')}")
    cfg = doc["config"]
    config = MlpConfig(
        input_dim=cfg["input_dim"], depth=cfg["depth"], width=cfg["width"],
        activation=cfg["activation"],
    )
    layers = []
    for layer in doc["layers"]:
        rows, cols = layer["rows"], layer["cols"]
        w = np.array(layer["weights"], dtype=np.float64).reshape(rows, cols)
        b = np.array(layer["bias"], dtype=np.float64).reshape(1, cols)
        layers.append((w, b))
    return BridgeModel(config, layers)


def save_model(model: BridgeModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model_to_json(model), f)


def load_model(path) -> BridgeModel:
    with open(path) as f:
        return model_from_json(json.load(f))
