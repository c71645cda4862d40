"""Discrete mixture design space: enumeration, distances, objective normalization.

All grid arithmetic happens in integer grid units (concentration / increment)
so that "multiple of the increment" is exact; molar floats are derived views.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationFailure

DEFAULT_COMPONENTS = ("glycerol", "DMSO", "EG", "12PD", "13PD", "3M12PD", "urea")

#: Count reported in the source publication for the default cocktail space.
#: Cap-free enumeration of that space yields 48,672; no documented constraint
#: set reproduces 48,198, so the discrepancy is surfaced, never forced.
PUBLISHED_DEFAULT_POOL_COUNT = 48_198

DEFAULT_POOL_CAP = 10_000_000


def _as_units(value: float, increment: float, what: str) -> int:
    units = value / increment
    rounded = round(units)
    if abs(units - rounded) > 1e-9:
        raise ValidationFailure(f"{what} ({value}) is not a multiple of the increment ({increment})")
    return int(rounded)


@dataclass(frozen=True)
class ComponentSet:
    """Grid definition for a mixture space: components, step, and sum bounds.

    ``per_component_max=None`` means no cap beyond the total-sum constraint;
    this is the default so the standard cocktail space enumerates all 48,672
    grid points (see ``PUBLISHED_DEFAULT_POOL_COUNT``).
    """

    names: tuple[str, ...] = DEFAULT_COMPONENTS
    increment: float = 0.5
    per_component_max: float | None = None
    total_min: float = 3.5
    total_max: float = 6.0

    def __post_init__(self) -> None:
        if not self.names:
            raise ValidationFailure("component set needs at least one component")
        if len(set(self.names)) != len(self.names):
            raise ValidationFailure("component names must be unique")
        if not self.increment > 0:
            raise ValidationFailure("increment must be positive")
        if not 0 <= self.total_min <= self.total_max:
            raise ValidationFailure("need 0 <= total_min <= total_max")
        if self.per_component_max is not None:
            _as_units(self.per_component_max, self.increment, "per_component_max")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_components(self) -> int:
        return len(self.names)

    @property
    def total_min_units(self) -> int:
        return math.ceil(self.total_min / self.increment - 1e-9)

    @property
    def total_max_units(self) -> int:
        return math.floor(self.total_max / self.increment + 1e-9)

    @property
    def component_max_units(self) -> int:
        if self.per_component_max is None:
            return self.total_max_units
        return min(_as_units(self.per_component_max, self.increment, "per_component_max"),
                   self.total_max_units)

    def formulation(self, grid: Sequence[int]) -> "Formulation":
        """Build a Formulation after validating it against the grid (not the pool)."""
        grid = tuple(int(g) for g in grid)
        if len(grid) != self.n_components:
            raise ValidationFailure(f"expected {self.n_components} components, got {len(grid)}")
        if any(g < 0 for g in grid):
            raise ValidationFailure("concentrations must be non-negative")
        if self.per_component_max is not None and any(g > self.component_max_units for g in grid):
            raise ValidationFailure("a component exceeds per_component_max")
        return Formulation(grid=grid, increment=self.increment)

    def formulation_from_molar(self, concentrations: Sequence[float]) -> "Formulation":
        grid = [_as_units(c, self.increment, f"concentration {c}") for c in concentrations]
        if any(g < 0 for g in grid):
            raise ValidationFailure("concentrations must be non-negative")
        return self.formulation(grid)

    def in_pool(self, f: "Formulation") -> bool:
        total = sum(f.grid)
        if not self.total_min_units <= total <= self.total_max_units:
            return False
        return all(g <= self.component_max_units for g in f.grid)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "increment": self.increment,
            "per_component_max": self.per_component_max,
            "total_min": self.total_min,
            "total_max": self.total_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentSet":
        return cls(
            names=tuple(d.get("names", DEFAULT_COMPONENTS)),
            increment=float(d.get("increment", 0.5)),
            per_component_max=(None if d.get("per_component_max") is None
                               else float(d["per_component_max"])),
            total_min=float(d.get("total_min", 3.5)),
            total_max=float(d.get("total_max", 6.0)),
        )


@dataclass(frozen=True)
class Formulation:
    """A point on the mixture grid, identified by a stable hash of its grid units."""

    grid: tuple[int, ...]
    increment: float

    def __post_init__(self) -> None:
        key = f"{self.increment!r}:" + ",".join(str(g) for g in self.grid)
        object.__setattr__(self, "_id", hashlib.sha1(key.encode()).hexdigest()[:12])

    @property
    def id(self) -> str:
        return self._id  # type: ignore[attr-defined]

    @property
    def concentrations(self) -> tuple[float, ...]:
        return tuple(g * self.increment for g in self.grid)

    @property
    def total(self) -> float:
        return sum(self.grid) * self.increment

    def as_array(self) -> np.ndarray:
        return np.asarray(self.grid, dtype=float) * self.increment

    def __lt__(self, other: "Formulation") -> bool:
        return self.id < other.id


def count_pool(space: ComponentSet) -> int:
    """Exact pool size by dynamic programming over components (caps included)."""
    lo, hi = space.total_min_units, space.total_max_units
    cap = space.component_max_units
    ways = np.zeros(hi + 1, dtype=object)
    ways[0] = 1
    for _ in range(space.n_components):
        nxt = np.zeros(hi + 1, dtype=object)
        for t in range(hi + 1):
            if ways[t] == 0:
                continue
            for u in range(0, min(cap, hi - t) + 1):
                nxt[t + u] += ways[t]
        ways = nxt
    return int(sum(ways[lo:hi + 1]))


def capfree_count(n_components: int, total_min_units: int, total_max_units: int) -> int:
    """Closed-form stars-and-bars count, valid only without per-component caps."""
    return sum(math.comb(t + n_components - 1, n_components - 1)
               for t in range(total_min_units, total_max_units + 1))


def enumerate_pool(space: ComponentSet, max_pool_size: int = DEFAULT_POOL_CAP) -> list[Formulation]:
    """All grid points satisfying the constraints, in lexicographic grid order."""
    n_points = count_pool(space)
    if n_points > max_pool_size:
        raise ValidationFailure(
            f"pool would hold {n_points} formulations, above the cap of {max_pool_size}")

    n = space.n_components
    lo, hi = space.total_min_units, space.total_max_units
    cap = space.component_max_units
    out: list[Formulation] = []
    prefix = [0] * n

    def recurse(i: int, used: int) -> None:
        if i == n - 1:
            first = max(lo - used, 0)
            for u in range(first, min(cap, hi - used) + 1):
                prefix[i] = u
                out.append(Formulation(grid=tuple(prefix), increment=space.increment))
            return
        remaining_cap = cap * (n - i - 1)
        for u in range(0, min(cap, hi - used) + 1):
            if used + u + remaining_cap < lo:
                continue
            prefix[i] = u
            recurse(i + 1, used + u)

    recurse(0, 0)
    return out


def distance(a: Formulation, b: Formulation) -> float:
    """Euclidean distance between concentration vectors, in molar units."""
    if len(a.grid) != len(b.grid):
        raise ValidationFailure("formulations live in different component sets")
    return float(np.linalg.norm(a.as_array() - b.as_array()))


@dataclass(frozen=True)
class ObjectiveBounds:
    """Per-objective (min, max) used to map raw objectives onto [0, 1]."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper):
            raise ValidationFailure("bounds dimension mismatch")
        for lo, hi in zip(self.lower, self.upper):
            if not hi > lo:
                raise ValidationFailure(f"degenerate objective bounds ({lo}, {hi})")

    @classmethod
    def from_points(cls, points: np.ndarray) -> "ObjectiveBounds":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(lower=tuple(lo.tolist()), upper=tuple(hi.tolist()))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveBounds":
        return cls(lower=tuple(d["lower"]), upper=tuple(d["upper"]))


def normalize_objectives(points: np.ndarray | Sequence[Sequence[float]],
                         bounds: ObjectiveBounds,
                         clamp: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Affine per-objective map to [0, 1].

    Returns (normalized, clamped) where ``clamped`` flags points that fell
    outside the bounds.  With ``clamp=False`` values are left outside [0, 1],
    which acquisition scoring relies on.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != len(bounds.lower):
        raise ValidationFailure("points/bounds dimension mismatch")
    lo = np.asarray(bounds.lower)
    hi = np.asarray(bounds.upper)
    scaled = (pts - lo) / (hi - lo)
    clamped = np.any((scaled < 0.0) | (scaled > 1.0), axis=1)
    if clamp:
        scaled = np.clip(scaled, 0.0, 1.0)
    return scaled, clamped


# ---------------------------------------------------------------------------
# Pool export / import


def pool_to_csv(space: ComponentSet, pool: Iterable[Formulation], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *space.names])
        for f in pool:
            writer.writerow([f.id, *[f"{c:g}" for c in f.concentrations]])


def pool_from_csv(space: ComponentSet, path: str | Path) -> list[Formulation]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [n for n in space.names if n not in (reader.fieldnames or [])]
        if missing:
            raise ValidationFailure(f"pool CSV missing component columns: {missing}")
        for i, row in enumerate(reader, start=2):
            try:
                conc = [float(row[name]) for name in space.names]
            except (TypeError, ValueError) as exc:
                raise ValidationFailure(f"pool CSV row {i}: {exc}") from exc
            f = space.formulation_from_molar(conc)
            if "id" in row and row["id"] and row["id"] != f.id:
                raise ValidationFailure(f"pool CSV row {i}: id {row['id']} does not match grid")
            out.append(f)
    return out


def pool_to_json(space: ComponentSet, pool: Iterable[Formulation], path: str | Path) -> None:
    doc = {
        "space": space.to_dict(),
        "formulations": [{"id": f.id, "grid": list(f.grid)} for f in pool],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def pool_from_json(path: str | Path) -> tuple[ComponentSet, list[Formulation]]:
    doc = json.loads(Path(path).read_text())
    space = ComponentSet.from_dict(doc["space"])
    pool = [space.formulation(entry["grid"]) for entry in doc["formulations"]]
    return space, pool
