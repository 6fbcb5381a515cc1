"""RBF kernel matrices and the U-/V-statistic quadratic forms.

The kernel acts on concatenated treatment/proxy features: (z1, z2, a) for
the demand benchmark, (z, alpha * flattened image) for the sprite
benchmark. Statistics are exposed both as plain functions and as
differentiable tape nodes, including a block-iterated form that never
materializes more than block_size x n kernel entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .errors import ConfigError, DimensionError, DomainError
from .tensor import Tensor


@dataclass(frozen=True)
class KernelConfig:
    sigma: float = 1.0
    treatment_scale: float = 0.05  # sprite image multiplier inside the kernel
    block_size: int = 256

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be >= 1, got {self.block_size}")


def kernel_features(view, experiment: str,
                    config: KernelConfig = KernelConfig()) -> Tensor:
    """Concatenate the columns the kernel sees, per experiment."""
    if experiment == "demand":
        return np.hstack([view.z, view.a])
    if experiment == "sprite":
        return np.hstack([view.z, config.treatment_scale * view.a])
    raise ConfigError(f"unknown experiment: {experiment}")


def rbf_matrix(features: Tensor, config: KernelConfig = KernelConfig()) -> Tensor:
    """K[i][j] = exp(-||f_i - f_j||^2 / (2 sigma^2))."""
    if not np.all(np.isfinite(features)):
        raise DomainError("kernel features must be finite")
    return _rbf_cross(features, features, config.sigma)


def _rbf_cross(fa: Tensor, fb: Tensor, sigma: float) -> Tensor:
    sq_a = np.einsum("ij,ij->i", fa, fa)
    sq_b = np.einsum("ij,ij->i", fb, fb)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (fa @ fb.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def u_statistic(r: Tensor, K: Tensor) -> float:
    """Off-diagonal average: r^T K0 r / (n (n - 1)), K0 = K with zero diagonal."""
    n = r.shape[0]
    if n < 2:
        raise DomainError("u_statistic requires n >= 2")
    _check_quad_shapes(r, K)
    total = float((r.T @ K @ r)[0, 0]) - float((r.ravel() ** 2 * np.diag(K)).sum())
    return total / (n * (n - 1))


def v_statistic(r: Tensor, K: Tensor) -> float:
    """Full average: r^T K r / n^2."""
    n = r.shape[0]
    _check_quad_shapes(r, K)
    return float((r.T @ K @ r)[0, 0]) / (n * n)


def _check_quad_shapes(r: Tensor, K: Tensor) -> None:
    if r.ndim != 2 or r.shape[1] != 1 or K.shape != (r.shape[0], r.shape[0]):
        raise DimensionError(f"bad statistic shapes: r {r.shape}, K {K.shape}")


# -- differentiable tape forms ----------------------------------------


def statistic_node(tape: Tape, r_id: int, K: Tensor, variant: str) -> int:
    """U- or V-statistic of a residual node against a constant kernel matrix."""
    n = K.shape[0]
    if variant == "u":
        if n < 2:
            raise DomainError("u_statistic requires n >= 2")
        K0 = K.copy()
        np.fill_diagonal(K0, 0.0)
        q = tape.quadratic_form(r_id, K0)
        return tape.scale(q, 1.0 / (n * (n - 1)))
    if variant == "v":
        q = tape.quadratic_form(r_id, K)
        return tape.scale(q, 1.0 / (n * n))
    raise ConfigError(f"unknown statistic variant: {variant}")


def batched_statistic_node(tape: Tape, r_id: int, features: Tensor,
                           config: KernelConfig, variant: str) -> int:
    """Block-iterated statistic: same value as the materialized form.

    Kernel entries are recomputed per row block of size ``block_size``;
    at most block_size x n entries exist at once. Differentiable through
    the residual node only.
    """
    if variant not in ("u", "v"):
        raise ConfigError(f"unknown statistic variant: {variant}")
    r = tape.value(r_id)
    n = r.shape[0]
    if features.shape[0] != n:
        raise DimensionError(
            f"features rows {features.shape[0]} != residual rows {n}"
        )
    if variant == "u" and n < 2:
        raise DomainError("u_statistic requires n >= 2")

    total = 0.0
    kr = np.zeros_like(r)  # accumulates K r (K symmetric)
    for lo in range(0, n, config.block_size):
        hi = min(lo + config.block_size, n)
        K_blk = _rbf_cross(features[lo:hi], features, config.sigma)
        if variant == "u":
            K_blk[np.arange(hi - lo), np.arange(lo, hi)] = 0.0
        kv = K_blk @ r
        total += float((r[lo:hi].T @ kv)[0, 0])
        kr[lo:hi] = kv
    norm = n * (n - 1) if variant == "u" else n * n
    value = np.array([[total / norm]])

    def bwd(g):
        return [g[0, 0] * 2.0 * kr / norm]

    return tape.record(f"batched_{variant}_statistic", [r_id], value, bwd)
