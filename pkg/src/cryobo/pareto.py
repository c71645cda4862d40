"""Pareto dominance, front extraction, hypervolume, and IGD.

All objectives are maximized.  Hypervolume is exact and 2-D only; the
FrontStaircase precomputes prefix areas so hypervolume improvement can be
evaluated for many candidate points at once.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationFailure


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff a >= b coordinatewise and a != b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationFailure("objective dimension mismatch")
    return bool(np.all(a >= b) and np.any(a > b))


@dataclass(frozen=True)
class ParetoFront:
    """Nondominated subset with back-references into the original point list."""

    points: np.ndarray          # (k, m)
    indices: tuple[int, ...]    # positions in the input
    ids: tuple[str, ...]        # formulation ids (or stringified indices)

    def __len__(self) -> int:
        return len(self.indices)


def pareto_front(points: np.ndarray | Sequence[Sequence[float]],
                 ids: Sequence[str] | None = None) -> ParetoFront:
    """Exactly the nondominated subset; duplicate objective vectors keep one
    representative, the one with the lowest id."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValidationFailure("pareto_front needs at least one point")
    if ids is None:
        ids = [str(i) for i in range(pts.shape[0])]
    if len(ids) != pts.shape[0]:
        raise ValidationFailure("ids length must match points")

    if pts.shape[1] == 2:
        keep = _front_indices_2d(pts, ids)
    else:
        keep = _front_indices_bruteforce(pts, ids)
    keep_sorted = tuple(sorted(keep))
    return ParetoFront(points=pts[list(keep_sorted)],
                       indices=keep_sorted,
                       ids=tuple(ids[i] for i in keep_sorted))


def _front_indices_2d(pts: np.ndarray, ids: Sequence[str]) -> list[int]:
    # Sort x desc, then y desc, then id asc; scan keeping strictly rising y.
    id_rank = np.argsort(np.argsort(ids, kind="stable"))
    order = np.lexsort((id_rank, -pts[:, 1], -pts[:, 0]))
    keep: list[int] = []
    best_y = -np.inf
    last_kept: np.ndarray | None = None
    for i in order:
        p = pts[i]
        if last_kept is not None and p[0] == last_kept[0] and p[1] == last_kept[1]:
            continue  # duplicate of a kept point; representative already chosen
        if p[1] > best_y:
            keep.append(int(i))
            best_y = p[1]
            last_kept = p
    return keep


def _front_indices_bruteforce(pts: np.ndarray, ids: Sequence[str]) -> list[int]:
    n = pts.shape[0]
    keep = []
    seen: dict[tuple, int] = {}
    for i in range(n):
        ge = np.all(pts >= pts[i], axis=1)
        gt = np.any(pts > pts[i], axis=1)
        if np.any(ge & gt):
            continue
        key = tuple(pts[i].tolist())
        if key in seen:
            if ids[i] < ids[seen[key]]:
                keep.remove(seen[key])
                keep.append(i)
                seen[key] = i
            continue
        seen[key] = i
        keep.append(i)
    return keep


def _validated_2d(points: np.ndarray, reference: Sequence[float],
                  warn_below_ref: bool = True) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if pts.size == 0:
        pts = np.empty((0, 2))
    else:
        pts = np.atleast_2d(pts)
    if ref.shape != (2,) or pts.shape[1] != 2:
        raise ValidationFailure("hypervolume is implemented for exactly 2 objectives")
    if pts.shape[0]:
        ok = np.all(pts >= ref, axis=1)
        if not np.all(ok):
            if warn_below_ref:
                warnings.warn(f"excluding {int((~ok).sum())} point(s) below the reference "
                              "from hypervolume", stacklevel=3)
            pts = pts[ok]
    return pts, ref


def hypervolume(points: np.ndarray | Sequence[Sequence[float]],
                reference: Sequence[float] = (0.0, 0.0)) -> float:
    """Exact dominated area for 2 objectives (dominated points contribute nothing)."""
    pts, ref = _validated_2d(points, reference)
    if pts.shape[0] == 0:
        return 0.0
    front = pareto_front(pts).points
    order = np.argsort(-front[:, 0])
    front = front[order]
    y_prev = ref[1]
    hv = 0.0
    for x, y in front:
        hv += (x - ref[0]) * (y - y_prev)
        y_prev = y
    return float(hv)


class FrontStaircase:
    """Precomputed 2-D staircase of a front for batch HVI queries.

    Points below the reference are dropped; dominated points contribute
    nothing.  For height y, the dominated region extends right to
    ``max(x_i : y_i >= y)``, which is piecewise constant between the sorted
    front heights; prefix areas make each query O(log front size).
    """

    def __init__(self, points: np.ndarray | Sequence[Sequence[float]],
                 reference: Sequence[float] = (0.0, 0.0),
                 warn_below_ref: bool = True):
        pts, ref = _validated_2d(points, reference, warn_below_ref)
        self.reference = ref
        if pts.shape[0]:
            front = pareto_front(pts).points
            order = np.argsort(front[:, 1])
            front = front[order]
            self.ys = front[:, 1]
            self.xs = front[:, 0]   # strictly decreasing
        else:
            self.ys = np.empty(0)
            self.xs = np.empty(0)
        self.hv = hypervolume(pts, ref) if pts.shape[0] else 0.0
        rx, ry = ref
        heights = np.diff(np.concatenate([[ry], self.ys]))
        self._ys_pad = np.concatenate([[ry], self.ys])
        self._xs_pad = np.concatenate([self.xs, [rx]])
        self._p1 = np.concatenate([[0.0], np.cumsum(self.xs * heights)])
        self._p2 = np.concatenate([[0.0], np.cumsum(heights)])
        self._xs_asc = self.xs[::-1]

    def hvi(self, points: np.ndarray) -> np.ndarray:
        """Hypervolume improvement of each point over the front; 0 if dominated
        or below the reference."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        px, py = pts[:, 0], pts[:, 1]
        rx, ry = self.reference
        n_front = self.ys.shape[0]

        m_idx = np.searchsorted(self.ys, py, side="left")
        num_ge = n_front - np.searchsorted(self._xs_asc, px, side="left")
        jlo = np.minimum(np.maximum(num_ge, 0), m_idx)
        full = px * (self._p2[m_idx] - self._p2[jlo]) - (self._p1[m_idx] - self._p1[jlo])
        x_seg = self._xs_pad[m_idx]
        y_lo = self._ys_pad[m_idx]
        partial = np.maximum(px - x_seg, 0.0) * np.maximum(py - y_lo, 0.0)
        out = full + partial
        out[(px < rx) | (py < ry)] = 0.0
        return out

    def extended(self, extra_points: np.ndarray) -> "FrontStaircase":
        """New staircase over front ∪ extra_points (cheap; used per MC sample)."""
        extra = np.atleast_2d(np.asarray(extra_points, dtype=float))
        ok = np.all(extra >= self.reference, axis=1)
        extra = extra[ok]
        if self.ys.shape[0]:
            base = np.column_stack([self.xs, self.ys])
            merged = np.vstack([base, extra]) if extra.shape[0] else base
        else:
            merged = extra
        return FrontStaircase(merged, self.reference, warn_below_ref=False)


def hypervolume_improvement(front_points: np.ndarray | Sequence[Sequence[float]],
                            candidate: Sequence[float],
                            reference: Sequence[float] = (0.0, 0.0)) -> float:
    """HV(front ∪ {candidate}) − HV(front); zero when the candidate is dominated."""
    stair = FrontStaircase(front_points, reference)
    return float(stair.hvi(np.asarray(candidate, dtype=float)[None, :])[0])


def igd(estimated: np.ndarray | Sequence[Sequence[float]],
        reference_points: np.ndarray | Sequence[Sequence[float]]) -> float:
    """Mean over reference points of the minimum Euclidean distance to the
    estimated front."""
    p = np.atleast_2d(np.asarray(estimated, dtype=float))
    p_star = np.atleast_2d(np.asarray(reference_points, dtype=float))
    if p.shape[0] == 0 or p_star.shape[0] == 0:
        raise ValidationFailure("igd needs nonempty point sets")
    if p.shape[1] != p_star.shape[1]:
        raise ValidationFailure("objective dimension mismatch")
    d = np.sqrt(((p_star[:, None, :] - p[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).mean())


def reference_front(point_sets: Sequence[np.ndarray],
                    id_sets: Sequence[Sequence[str]] | None = None) -> ParetoFront:
    """Pareto front of the union of several campaigns' objective sets."""
    arrays = [np.atleast_2d(np.asarray(p, dtype=float)) for p in point_sets if len(p)]
    if not arrays:
        raise ValidationFailure("reference_front needs at least one nonempty set")
    union = np.vstack(arrays)
    if id_sets is not None:
        ids: list[str] = []
        for ps, iset in zip(point_sets, id_sets):
            if len(ps):
                ids.extend(iset)
        return pareto_front(union, ids)
    return pareto_front(union)


def metric_row(iteration: int, method: str, hv: float, igd_value: float | None,
               bounds: dict, reference: Sequence[float]) -> dict:
    """One serialized metric record (the JSON-row external format)."""
    return {
        "iteration": iteration,
        "method": method,
        "hypervolume": hv,
        "igd": igd_value,
        "bounds": bounds,
        "reference": list(reference),
    }
