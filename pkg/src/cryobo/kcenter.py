"""Model-free batch coverage: greedy farthest-point (k-center) selection.

Purely explorative; used to bootstrap campaigns with a diverse initial set.
Distances are Euclidean on raw molar concentration vectors.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ValidationFailure

_DIST_DECIMALS = 10


class CoverageState:
    """Known set, candidate pool, and the per-candidate min-distance cache."""

    def __init__(self, known: np.ndarray, pool: np.ndarray,
                 pool_ids: Sequence[str] | None = None):
        self.known = np.atleast_2d(np.asarray(known, dtype=float)) if np.size(known) \
            else np.empty((0, np.atleast_2d(np.asarray(pool, dtype=float)).shape[1]))
        self.pool = np.atleast_2d(np.asarray(pool, dtype=float))
        if self.pool.shape[0] == 0:
            raise ValidationFailure("k-center needs a nonempty pool")
        if self.known.shape[0] and self.known.shape[1] != self.pool.shape[1]:
            raise ValidationFailure("known/pool dimension mismatch")
        if pool_ids is None:
            width = len(str(max(self.pool.shape[0] - 1, 1)))
            pool_ids = [str(i).zfill(width) for i in range(self.pool.shape[0])]
        if len(pool_ids) != self.pool.shape[0]:
            raise ValidationFailure("pool_ids length mismatch")
        self.pool_ids = list(pool_ids)
        known_rows = {tuple(row) for row in self.known.tolist()}
        if any(tuple(row) in known_rows for row in self.pool.tolist()):
            raise ValidationFailure("pool must be disjoint from the known set")
        self.selected: list[int] = []
        if self.known.shape[0]:
            self.min_dist = self._dists_to(self.known).min(axis=1)
        else:
            self.min_dist = None  # bootstrap: no known data yet

    def _dists_to(self, centers: np.ndarray) -> np.ndarray:
        diff = self.pool[:, None, :] - centers[None, :, :]
        return np.sqrt((diff * diff).sum(axis=2))

    def _pick(self, scores: np.ndarray) -> int:
        rounded = np.round(scores, _DIST_DECIMALS)
        rounded[self.selected] = -np.inf
        best = rounded.max()
        contenders = np.flatnonzero(rounded == best)
        return int(min(contenders, key=lambda i: self.pool_ids[i]))

    def select_next(self) -> int:
        """Greedy step: the candidate farthest from known ∪ already-picked."""
        if len(self.selected) >= self.pool.shape[0]:
            raise ValidationFailure("pool exhausted")
        if self.min_dist is None:
            centroid = self.pool.mean(axis=0)
            idx = self._pick(np.linalg.norm(self.pool - centroid, axis=1))
            self.min_dist = self._dists_to(self.pool[idx][None, :]).ravel()
        else:
            idx = self._pick(self.min_dist.copy())
            self.min_dist = np.minimum(self.min_dist,
                                       self._dists_to(self.pool[idx][None, :]).ravel())
        self.selected.append(idx)
        return idx

    def select(self, batch_size: int) -> list[int]:
        if batch_size > self.pool.shape[0] - len(self.selected):
            raise ValidationFailure("batch_size exceeds remaining pool")
        return [self.select_next() for _ in range(batch_size)]

    def coverage_radius(self) -> float:
        """max over pool of min-distance to known ∪ selected (smaller = better)."""
        if self.min_dist is None:
            return float("inf")
        d = self.min_dist.copy()
        d[self.selected] = 0.0
        return float(d.max())


def kcenter_select(known: np.ndarray, pool: np.ndarray, batch_size: int,
                   pool_ids: Sequence[str] | None = None) -> list[int]:
    """Ordered greedy farthest-point batch; ties broken by lowest id.

    With an empty known set the first pick maximizes distance to the pool
    centroid (the greedy loop needs a seed point)."""
    state = CoverageState(known, pool, pool_ids)
    return state.select(batch_size)
