"""Synthetic structural causal models and ground-truth oracles.

Two benchmarks ship with the package:

* demand: a low-dimensional pricing model where latent demand confounds
  price and sales, with fuel cost as treatment proxy and page views as
  outcome proxy. Noise variances on the proxies are configurable for the
  proxy-corruption grid.
* sprite: an image benchmark where the vertical position of a procedurally
  rendered glyph confounds the treatment image and the outcome. The glyph
  is a rotatable 2:3 ellipse rendered at a configurable resolution.

Latent columns (u, the outcome noise) are stored for diagnostics only and
are stripped from every estimator-facing view.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DimensionError, DomainError
from .tensor import Rng, Tensor

# Proxy-noise grid: 9 Z levels x 8 W levels = 72 cells.
Z_NOISE_GRID = (0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
W_NOISE_GRID = (0.0, 0.01, 0.1, 0.5, 1.0, 16.0, 64.0, 150.0)


def noise_grid() -> List[Tuple[float, float]]:
    """All (var_z, var_w) combinations of the proxy-corruption experiment."""
    return list(itertools.product(Z_NOISE_GRID, W_NOISE_GRID))


@dataclass(frozen=True)
class DemandConfig:
    n: int
    var_z1: float = 1.0
    var_z2: float = 1.0
    var_w: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if min(self.var_z1, self.var_z2, self.var_w) < 0:
            raise DomainError("noise variances must be >= 0")


class EstimatorView:
    """The (a, w, z, y) columns an estimator is allowed to see."""

    __slots__ = ("a", "w", "z", "y")

    def __init__(self, a, w, z, y):
        self.a = a
        self.w = w
        self.z = z
        self.y = y

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass
class Dataset:
    a: Tensor
    w: Tensor
    z: Tensor
    y: Tensor
    u: Optional[Tensor] = None       # latent confounder, diagnostics only
    eps_y: Optional[Tensor] = None   # outcome noise, diagnostics only

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def estimator_view(self) -> EstimatorView:
        return EstimatorView(self.a, self.w, self.z, self.y)


# -- demand benchmark --------------------------------------------------


def demand_g(u):
    """Latent-demand response curve; g(5) = -1."""
    u = np.asarray(u, dtype=np.float64)
    return 2.0 * ((u - 5.0) ** 4 / 600.0 + np.exp(-4.0 * (u - 5.0) ** 2)
                  + u / 10.0 - 2.0)


def demand_outcome(a, w, g_u, eps):
    """Sales given price, views, the demand curve value, and outcome noise."""
    return a * np.minimum(np.exp((w - a) / 10.0), 5.0) - 5.0 * g_u + eps


def demand_from_noise(u, e1, e2, e3, e4, e5) -> Dataset:
    """Deterministic structural equations applied to explicit noise draws."""
    g_u = demand_g(u)
    z1 = 2.0 * np.sin(2.0 * np.pi * u / 10.0) + e1
    z2 = 2.0 * np.cos(2.0 * np.pi * u / 10.0) + e2
    w = 7.0 * g_u + 45.0 + e3
    a = 35.0 + (z1 + 3.0) * g_u + z2 + e4
    y = demand_outcome(a, w, g_u, e5)
    return Dataset(a=a, w=w, z=np.hstack([z1, z2]), y=y, u=u, eps_y=e5)


def demand_sample(config: DemandConfig) -> Dataset:
    rng = Rng(config.seed)
    shape = (config.n, 1)
    u = rng.uniform(0.0, 10.0, shape)
    e1 = rng.normal(0.0, math.sqrt(config.var_z1), shape)
    e2 = rng.normal(0.0, math.sqrt(config.var_z2), shape)
    e3 = rng.normal(0.0, math.sqrt(config.var_w), shape)
    e4 = rng.normal(0.0, 1.0, shape)
    e5 = rng.normal(0.0, 1.0, shape)
    return demand_from_noise(u, e1, e2, e3, e4, e5)


def demand_eval_grid(points: int = 10) -> Tensor:
    """Evaluation treatments: equally spaced, inclusive, on [10, 30]."""
    return np.linspace(10.0, 30.0, points).reshape(-1, 1)


def demand_ground_truth(a_grid: Tensor, mc: int, seed: int,
                        var_w: float = 1.0) -> Tuple[Tensor, Tensor]:
    """Monte Carlo E[Y^a] per grid point, with its standard error.

    Intervening on the price leaves the demand and page-view mechanisms
    intact: each replicate redraws (U, view noise, outcome noise) and
    evaluates the outcome equation at the forced price. One shared draw
    set serves every grid point.
    """
    if mc < 1:
        raise DomainError(f"mc must be >= 1, got {mc}")
    rng = Rng(seed)
    u = rng.uniform(0.0, 10.0, (1, mc))
    e3 = rng.normal(0.0, math.sqrt(var_w), (1, mc))
    e5 = rng.normal(0.0, 1.0, (1, mc))
    g_u = demand_g(u)
    w = 7.0 * g_u + 45.0 + e3
    a = np.asarray(a_grid, dtype=np.float64).reshape(-1, 1)
    y = demand_outcome(a, w, g_u, e5)  # (m, mc)
    ey = y.mean(axis=1, keepdims=True)
    se = y.std(axis=1, ddof=1, keepdims=True) / math.sqrt(mc)
    return ey, se


# -- sprite benchmark --------------------------------------------------

SPRITE_SCALES = tuple(0.5 + 0.1 * i for i in range(6))
SPRITE_ROTATIONS = 40   # equally spaced on [0, 2 pi)
SPRITE_POSITIONS = 32   # equally spaced on [0, 1]

_CALIBRATION_TAG = 0x5C41_1B8A_7E00_0001
_CALIBRATION_DRAWS = 10_000


@dataclass(frozen=True)
class SpriteConfig:
    n: int
    side: int = 32
    b_seed: int = 0
    seed: int = 0
    pixel_noise_std: float = 0.1
    outcome_noise_std: float = 0.5

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if self.side < 8:
            raise DomainError(f"side must be >= 8, got {self.side}")


def render_glyph(scale: float, rotation: float, pos_x: float, pos_y: float,
                 side: int) -> Tensor:
    """Antialiased filled ellipse (axes ratio 2:3) in unit coordinates.

    The image is side x side with pixel values in [0, 1]; each pixel is
    the covered fraction of a 4x4 subsample grid. Row index grows with
    pos_y, column index with pos_x.
    """
    if not (0.5 <= scale <= 1.0):
        raise DomainError(f"scale must be in [0.5, 1], got {scale}")
    if not (0.0 <= rotation < 2.0 * np.pi):
        raise DomainError(f"rotation must be in [0, 2 pi), got {rotation}")
    if not (0.0 <= pos_x <= 1.0 and 0.0 <= pos_y <= 1.0):
        raise DomainError(f"position must be in [0, 1], got ({pos_x}, {pos_y})")
    sub = 4
    m = sub * side
    coords = (np.arange(m) + 0.5) / m
    dx = coords[None, :] - pos_x
    dy = coords[:, None] - pos_y
    c, s = np.cos(rotation), np.sin(rotation)
    xr = c * dx + s * dy
    yr = -s * dx + c * dy
    ax = 0.2 * scale
    ay = 0.3 * scale
    inside = (xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0
    return inside.reshape(side, sub, side, sub).mean(axis=(1, 3))


def sprite_weight_matrix(b_seed: int, side: int) -> Tensor:
    """Outcome weights: side^2 x 10 with entries in [0, 1)."""
    return Rng(b_seed).uniform(0.0, 1.0, (side * side, 10))


def _image_score(images: Tensor, b: Tensor) -> Tensor:
    """||vec(image)^T B||^2 / 10 per row."""
    proj = images @ b
    return np.einsum("ij,ij->i", proj, proj).reshape(-1, 1) / 10.0


_scale_cache: dict = {}


def sprite_outcome_scale(b_seed: int, side: int) -> Tuple[float, float]:
    """Centering/scaling constants keeping the structural outcome at O(1).

    Empirical mean and standard deviation of the image score over 10,000
    noised treatment images; computed once per (b_seed, side) and cached.
    """
    key = (b_seed, side)
    if key not in _scale_cache:
        b = sprite_weight_matrix(b_seed, side)
        rng = Rng(b_seed ^ _CALIBRATION_TAG)
        imgs = _draw_treatment_images(rng, _CALIBRATION_DRAWS, side, 0.1)[0]
        scores = _image_score(imgs, b)
        _scale_cache[key] = (float(scores.mean()), float(scores.std(ddof=0)))
    return _scale_cache[key]


def _draw_treatment_images(rng: Rng, n: int, side: int, noise_std: float):
    """Sample (images, scale, rotation, pos_x, pos_y) per the treatment SCM."""
    s_idx = rng.integers(0, 6, (n,))
    r_idx = rng.integers(0, SPRITE_ROTATIONS, (n,))
    x_idx = rng.integers(0, SPRITE_POSITIONS, (n,))
    y_idx = rng.integers(0, SPRITE_POSITIONS, (n,))
    scale = 0.5 + 0.1 * s_idx
    rot = 2.0 * np.pi * r_idx / SPRITE_ROTATIONS
    pos_x = x_idx / (SPRITE_POSITIONS - 1)
    pos_y = y_idx / (SPRITE_POSITIONS - 1)
    imgs = np.empty((n, side * side))
    for i in range(n):
        imgs[i] = render_glyph(scale[i], rot[i], pos_x[i], pos_y[i], side).ravel()
    imgs += rng.normal(0.0, noise_std, imgs.shape)
    return imgs, scale, rot, pos_x, pos_y


def sprite_sample(config: SpriteConfig) -> Dataset:
    rng = Rng(config.seed)
    n, side = config.n, config.side
    a, scale, rot, pos_x, pos_y = _draw_treatment_images(
        rng, n, side, config.pixel_noise_std
    )
    # W shows only the confounder: fixed scale/rotation/posX, posY from U.
    w_clean = {
        py: render_glyph(0.8, 0.0, 0.5, py, side).ravel()
        for py in np.unique(pos_y)
    }
    w = np.stack([w_clean[py] for py in pos_y])
    w += rng.normal(0.0, config.pixel_noise_std, w.shape)
    u = pos_y.reshape(-1, 1)
    b = sprite_weight_matrix(config.b_seed, side)
    c0, c1 = sprite_outcome_scale(config.b_seed, side)
    eps = rng.normal(0.0, config.outcome_noise_std, (n, 1))
    structural = (_image_score(a, b) - c0) / c1
    confounding = (31.0 * u - 15.5) ** 2 / 85.25
    y = structural * confounding + eps
    z = np.hstack([scale.reshape(-1, 1), rot.reshape(-1, 1), pos_x.reshape(-1, 1)])
    return Dataset(a=a, w=w, z=z, y=y, u=u, eps_y=eps)


def sprite_ground_truth(a_image: Tensor, b: Tensor, c0: float, c1: float) -> float:
    """Exact expected potential outcome for one treatment image."""
    flat = np.asarray(a_image, dtype=np.float64).reshape(1, -1)
    if flat.shape[1] != b.shape[0]:
        raise DimensionError(
            f"image has {flat.shape[1]} pixels, weights expect {b.shape[0]}"
        )
    return float((_image_score(flat, b)[0, 0] - c0) / c1)


def sprite_test_grid(side: int):
    """The 588-image evaluation grid: (params, noiseless images)."""
    positions = [i / 31.0 for i in range(0, 31, 5)]  # 0, 5/31, ..., 30/31
    scales = [0.5, 0.8, 1.0]
    rotations = [0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi]
    params = [
        (sc, rot, px, py)
        for px in positions
        for py in positions
        for sc in scales
        for rot in rotations
    ]
    images = np.stack([
        render_glyph(sc, rot, px, py, side).ravel() for sc, rot, px, py in params
    ])
    return params, images


def sprite_truth_curve(config: SpriteConfig):
    """(params, images, exact E[Y^a]) over the evaluation grid."""
    params, images = sprite_test_grid(config.side)
    b = sprite_weight_matrix(config.b_seed, config.side)
    c0, c1 = sprite_outcome_scale(config.b_seed, config.side)
    truth = (_image_score(images, b) - c0) / c1
    return params, images, truth


# -- CSV interfaces ----------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_columns(dataset: Dataset, experiment: str):
    if experiment == "demand":
        header = ["u", "z1", "z2", "w", "a", "y"]
        cols = np.hstack([dataset.u, dataset.z, dataset.w, dataset.a, dataset.y])
    elif experiment == "sprite":
        d2 = dataset.w.shape[1]
        header = (["u", "z_scale", "z_rot", "z_posx"]
                  + [f"w_px_{i}" for i in range(d2)]
                  + [f"a_px_{i}" for i in range(d2)]
                  + ["y"])
        cols = np.hstack([dataset.u, dataset.z, dataset.w, dataset.a, dataset.y])
    else:
        raise DomainError(f"unknown experiment: {experiment}")
    return header, cols


def write_dataset_csv(dataset: Dataset, experiment: str, path,
                      metadata: Optional[dict] = None) -> None:
    header, cols = dataset_columns(dataset, experiment)
    with open(path, "w", newline="") as f:
        if metadata is not None:
            f.write("# " + json.dumps(metadata, sort_keys=True) + "\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in cols:
            writer.writerow([_fmt(x) for x in row])


def write_truth_csv(path, labels, ey, se, label_name: str = "a_value") -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([label_name, "ey_a", "mc_se"])
        for lab, e, s in zip(labels, np.ravel(ey), np.ravel(se)):
            writer.writerow([_fmt(lab) if isinstance(lab, float) else lab,
                             _fmt(e), _fmt(s)])
