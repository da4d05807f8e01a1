"""Containers for multiview data and per-view linear weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, TooFewSamples, TooFewViews
from .linalg import as_matrix


@dataclass(frozen=True)
class MultiviewBatch:
    """``M`` paired samples of ``I`` views; view ``i`` is an ``M x D_i`` array."""

    views: tuple

    def __post_init__(self):
        views = tuple(as_matrix(v, f"view {i}") for i, v in enumerate(self.views))
        if not views:
            raise TooFewViews("a batch needs at least one view")
        m = views[0].shape[0]
        if any(v.shape[0] != m for v in views):
            raise ShapeMismatch("all views must share the sample count")
        if m < 2:
            raise TooFewSamples(f"need at least 2 samples, got {m}")
        object.__setattr__(self, "views", views)

    @property
    def n_samples(self):
        return self.views[0].shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def dims(self):
        return tuple(v.shape[1] for v in self.views)

    def take(self, idx):
        return MultiviewBatch(tuple(v[idx] for v in self.views))

    def stacked(self):
        return np.hstack(self.views)


def _as_alpha(alpha, n_views):
    if alpha is None:
        a = np.zeros(n_views)
    else:
        a = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n_views,)).copy()
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError(f"ridge parameters must lie in [0, 1], got {a}")
    return a


@dataclass(frozen=True)
class WeightSet:
    """Per-view weights ``U_i`` (``D_i x K``) and ridge parameters ``alpha_i``."""

    views: tuple
    alpha: np.ndarray = field(default=None)

    def __post_init__(self):
        views = tuple(as_matrix(u, f"weights {i}") for i, u in enumerate(self.views))
        if not views:
            raise TooFewViews("need weights for at least one view")
        k = views[0].shape[1]
        if any(u.shape[1] != k for u in views):
            raise ShapeMismatch("all views must share K")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "alpha", _as_alpha(self.alpha, len(views)))

    @property
    def k(self):
        return self.views[0].shape[1]

    @property
    def dims(self):
        return tuple(u.shape[0] for u in self.views)

    def stacked(self):
        return np.vstack(self.views)

    @classmethod
    def from_stacked(cls, u, dims, alpha=None):
        u = as_matrix(u, "U")
        if u.shape[0] != sum(dims):
            raise ShapeMismatch(f"stacked weights have {u.shape[0]} rows, dims sum to {sum(dims)}")
        bounds = np.cumsum((0,) + tuple(dims))
        return cls(tuple(u[a:b] for a, b in zip(bounds[:-1], bounds[1:])), alpha)

    def replace(self, views):
        return WeightSet(tuple(views), self.alpha)

    def transform(self, batch):
        """Representations ``X_i U_i`` for every view of ``batch``."""
        check_compatible(batch, self)
        return [x @ u for x, u in zip(batch.views, self.views)]


def check_compatible(batch, weights):
    if batch.dims != weights.dims:
        raise ShapeMismatch(f"batch dims {batch.dims} do not match weight dims {weights.dims}")
