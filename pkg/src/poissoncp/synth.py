"""Synthetic sparse Poisson tensors with known ground-truth factors.

A sparse model is built by boosting a random subset of each factor column
well above a small background value, then ``samples`` independent draws
each pick a component by weight and one index per mode by that component's
column distribution, incrementing a single tensor cell.  Every random
choice flows through a PCG64 generator; the stream (and therefore the
output, bit for bit) is fixed by the seed, the draw order documented in
:func:`generate_model` and :func:`sample_tensor`, and nothing else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .kruskal import KruskalModel, normalize
from .sparse_tensor import SparseCountTensor, as_shape

__all__ = [
    "GenConfig",
    "ModeCollinearity",
    "generate_model",
    "sample_tensor",
    "generate_dataset",
    "collinearity_stats",
]


@dataclass(frozen=True)
class GenConfig:
    """Ground-truth generator settings.

    Per column, ceil(boost_fraction * I_n) positions drawn without
    replacement get the value 1 + boost_scale * R * u with u uniform on
    (0, 1); the rest get ``small_value``.  When ``collinearity_alpha`` is
    set, columns 2..R are mixed with column 1 before normalization:
    a_r <- a_1 + alpha * a_r.
    """

    dims: tuple[int, ...]
    rank: int
    samples: int
    boost_fraction: float = 0.2
    boost_scale: float = 10.0
    small_value: float = 0.1
    collinearity_alpha: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        as_shape(self.dims)
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if not 0 < self.boost_fraction <= 1:
            raise ValueError("boost_fraction must lie in (0, 1]")
        if self.boost_scale < 0 or self.small_value <= 0:
            raise ValueError("boost_scale must be >= 0 and small_value > 0")


class ModeCollinearity(NamedTuple):
    all_pairs: float  # mean cosine over distinct column pairs
    versus_first: float  # mean cosine of columns 2..R against column 1


def _rng(entropy) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def generate_model(config: GenConfig) -> KruskalModel:
    """Sparse ground-truth model, normalized with weights summing to one.

    Draw order (one PCG64 stream seeded by ``config.seed``): for each mode
    and then each column, one uniform block ranking the boosted positions
    and one block of boost values; finally one block for the weights.
    """
    rng = _rng(config.seed)
    r = config.rank
    factors = []
    for dim in config.dims:
        n_boost = math.ceil(config.boost_fraction * dim)
        f = np.full((dim, r), config.small_value)
        for col in range(r):
            positions = np.argsort(rng.random(dim))[:n_boost]
            f[positions, col] = 1.0 + config.boost_scale * r * rng.random(n_boost)
        factors.append(f)
    if config.collinearity_alpha is not None:
        alpha = float(config.collinearity_alpha)
        for f in factors:
            f[:, 1:] = f[:, :1] + alpha * f[:, 1:]
    weights = rng.random(r)
    model = normalize(KruskalModel(weights, tuple(factors)))
    unit_weights = _force_sum(model.weights / model.weights.sum(), 1.0)
    return KruskalModel(unit_weights, model.factors, normalized=True)


def sample_tensor(model: KruskalModel, samples: int, seed=0):
    """Draw ``samples`` cells from a normalized model with unit weights.

    Each draw picks a component by weight, then one index per mode from
    that component's column, and increments the cell.  Draw order (one
    PCG64 stream): one uniform block for the components, then one block per
    mode.  Returns (tensor, model with weights rescaled so their sum equals
    ``samples`` exactly, matching the tensor's total count).
    """
    if not model.normalized:
        raise ValueError("sample_tensor needs a normalized model")
    if abs(float(model.weights.sum()) - 1.0) > 1e-8:
        raise ValueError("weights must sum to one before sampling")
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = _rng(seed)
    r = model.rank
    cw = np.cumsum(model.weights)
    cw /= cw[-1]
    comp = np.minimum(
        np.searchsorted(cw, rng.random(samples), side="right"), r - 1
    )
    subs0 = np.empty((samples, model.ndim), dtype=np.int64)
    for k, f in enumerate(model.factors):
        cum = np.cumsum(f, axis=0)
        cum /= cum[-1:, :]
        u = rng.random(samples)
        idx = np.empty(samples, dtype=np.int64)
        for comp_r in np.unique(comp):
            mask = comp == comp_r
            idx[mask] = np.searchsorted(cum[:, comp_r], u[mask], side="right")
        subs0[:, k] = np.minimum(idx, f.shape[0] - 1)
    cells, counts = np.unique(subs0, axis=0, return_counts=True)
    tensor = SparseCountTensor.from_arrays(
        tuple(f.shape[0] for f in model.factors), cells, counts, one_based=False
    )
    scaled = _force_sum(model.weights * float(samples), float(samples))
    return tensor, KruskalModel(scaled, model.factors, normalized=True)


def generate_dataset(config: GenConfig):
    """Ground-truth model plus a sampled tensor.

    The model stream is seeded by ``config.seed`` and the sampling stream by
    ``(config.seed, 1)``, so the two are independent yet both reproducible.
    Returns (scaled truth model, tensor).
    """
    model = generate_model(config)
    tensor, scaled = sample_tensor(model, config.samples, seed=(config.seed, 1))
    return scaled, tensor


def _force_sum(v: np.ndarray, total: float) -> np.ndarray:
    """Adjust nonnegative entries so v.sum() equals ``total`` exactly.

    Entries are quantized to the float spacing of ``total`` (a power of
    two), which makes every partial sum exact regardless of summation
    order; the quantization residual, itself on the grid, lands on the
    largest entry.  Per-entry perturbation is at most half a spacing.
    """
    u = float(np.spacing(total))
    v = np.round(v / u) * u
    delta = total - float(v.sum())
    v[int(np.argmax(v))] += delta
    return v


def collinearity_stats(model: KruskalModel) -> list[ModeCollinearity]:
    """Cosine similarities between l2-normalized factor columns, per mode."""
    stats = []
    for f in model.factors:
        norms = np.linalg.norm(f, axis=0)
        unit = f / np.where(norms == 0.0, 1.0, norms)
        c = unit.T @ unit
        r = c.shape[0]
        if r < 2:
            stats.append(ModeCollinearity(float("nan"), float("nan")))
            continue
        iu = np.triu_indices(r, k=1)
        stats.append(ModeCollinearity(
            all_pairs=float(c[iu].mean()),
            versus_first=float(c[0, 1:].mean()),
        ))
    return stats
