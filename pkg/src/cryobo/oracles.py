"""Analytic stand-ins for wet-lab assays.

Three ground truths: a 1-D sin/tanh benchmark, the 2-D Rastrigin benchmark,
and a logistic toxicity surface over mixture concentrations that plays the
role of the lab assay in synthetic campaigns.  ``observe`` adds replicate
Gaussian noise the way plate measurements would.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationFailure
from .space import Formulation

ONE_D_DOMAIN = (-2.0, 2.0)
RASTRIGIN_DOMAIN = (-2.5, 2.5)
RASTRIGIN_A = 10.0

ORACLE_KINDS = ("one_d_sin_tanh", "rastrigin", "toxicity")


def eval_1d(x):
    """sin(5x) * (1 - tanh(x^2)) on [-2, 2]; maximum near x=0.289."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < ONE_D_DOMAIN[0]) or np.any(arr > ONE_D_DOMAIN[1]):
        raise ValidationFailure(f"x outside {ONE_D_DOMAIN}")
    out = np.sin(5.0 * arr) * (1.0 - np.tanh(arr * arr))
    return float(out) if out.ndim == 0 else out


def eval_rastrigin(x):
    """Rastrigin with A=10 on [-2.5, 2.5]^n: A*n + sum(x_i^2 - A*cos(2*pi*x_i)).

    Minimum 0 at the origin.  (The minus sign in front of the cosine is what
    makes that minimum hold; published statements of the formula sometimes
    carry a sign typo.)"""
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(arr < RASTRIGIN_DOMAIN[0]) or np.any(arr > RASTRIGIN_DOMAIN[1]):
        raise ValidationFailure(f"x outside {RASTRIGIN_DOMAIN}")
    n = arr.shape[1]
    out = RASTRIGIN_A * n + (arr**2 - RASTRIGIN_A * np.cos(2.0 * np.pi * arr)).sum(axis=1)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class ToxicityParams:
    """Logistic toxicity surface: v = logistic(s*(a - sum b_i c_i - sum w_ij c_i c_j)).

    With all slopes positive and interactions nonnegative, viability strictly
    decreases in every component.  The shipped defaults give 0.98 viability at
    zero concentration and make the third component (EG) markedly gentler than
    the rest, so optima concentrate on EG-rich mixtures.
    """

    version: str = "1"
    baseline: float = float(np.log(49.0))  # logistic(s*a) = 0.98 at c = 0
    slopes: tuple[float, ...] = (0.55, 0.50, 0.22, 0.65, 0.60, 0.75, 0.85)
    steepness: float = 1.0
    interactions: tuple[tuple[int, int, float], ...] = (
        (0, 1, 0.03), (1, 6, 0.06), (3, 5, 0.04),
    )

    def __post_init__(self) -> None:
        if any(b <= 0 for b in self.slopes):
            raise ValidationFailure("toxicity slopes must be positive")
        for i, j, w in self.interactions:
            if not 0 <= i < j < len(self.slopes):
                raise ValidationFailure("interaction indices must satisfy 0 <= i < j < n")
            if w < 0:
                raise ValidationFailure("interaction weights must be >= 0 to keep "
                                        "viability monotone decreasing")

    def viability(self, concentrations) -> float | np.ndarray:
        c = np.atleast_2d(np.asarray(concentrations, dtype=float))
        if c.shape[1] != len(self.slopes):
            raise ValidationFailure("concentration dimension mismatch")
        if np.any(c < 0):
            raise ValidationFailure("concentrations must be >= 0")
        z = self.baseline - c @ np.asarray(self.slopes)
        for i, j, w in self.interactions:
            z = z - w * c[:, i] * c[:, j]
        out = _logistic(self.steepness * z)
        return float(out[0]) if np.asarray(concentrations).ndim == 1 else out

    def to_dict(self) -> dict:
        return {
            "version": self.version, "baseline": self.baseline,
            "slopes": list(self.slopes), "steepness": self.steepness,
            "interactions": [list(t) for t in self.interactions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToxicityParams":
        return cls(version=str(d.get("version", "1")), baseline=float(d["baseline"]),
                   slopes=tuple(float(b) for b in d["slopes"]),
                   steepness=float(d.get("steepness", 1.0)),
                   interactions=tuple((int(i), int(j), float(w))
                                      for i, j, w in d.get("interactions", [])))


@dataclass(frozen=True)
class OracleSpec:
    """Which ground truth to query and how noisy its observations are."""

    kind: str
    noise_sd: float = 0.0
    replicates: int = 1
    toxicity: ToxicityParams | None = None
    clamp: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ORACLE_KINDS:
            raise ValidationFailure(f"unknown oracle kind {self.kind!r}")
        if self.noise_sd < 0:
            raise ValidationFailure("noise_sd must be >= 0")
        if self.replicates < 1:
            raise ValidationFailure("replicates must be >= 1")
        if self.kind == "toxicity" and self.toxicity is None:
            object.__setattr__(self, "toxicity", ToxicityParams())
        if self.kind == "toxicity" and self.clamp is None:
            object.__setattr__(self, "clamp", (0.0, 1.2))

    @classmethod
    def toxicity_default(cls, noise_sd: float = 0.05, replicates: int = 3) -> "OracleSpec":
        return cls(kind="toxicity", noise_sd=noise_sd, replicates=replicates)

    def truth(self, x) -> float | np.ndarray:
        if self.kind == "one_d_sin_tanh":
            return eval_1d(x)
        if self.kind == "rastrigin":
            return eval_rastrigin(x)
        assert self.toxicity is not None
        if isinstance(x, Formulation):
            return self.toxicity.viability(x.as_array())
        return self.toxicity.viability(x)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "noise_sd": self.noise_sd, "replicates": self.replicates,
            "toxicity": None if self.toxicity is None else self.toxicity.to_dict(),
            "clamp": None if self.clamp is None else list(self.clamp),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OracleSpec":
        return cls(kind=d["kind"], noise_sd=float(d.get("noise_sd", 0.0)),
                   replicates=int(d.get("replicates", 1)),
                   toxicity=None if d.get("toxicity") is None
                   else ToxicityParams.from_dict(d["toxicity"]),
                   clamp=None if d.get("clamp") is None else tuple(d["clamp"]))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "OracleSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ObservedReplicates:
    """Replicate measurements of one query: raw values plus summary stats."""

    values: tuple[float, ...]
    mean: float
    variance: float
    count: int


def observe(spec: OracleSpec, x, seed) -> ObservedReplicates:
    """Replicate observations: truth + iid Gaussian noise, optionally clamped.

    ``seed`` may be an int or a sequence of ints (e.g. a derived campaign
    key); identical seeds reproduce identical replicates.
    """
    truth = spec.truth(x)
    if not np.isscalar(truth):
        truth = float(np.asarray(truth).ravel()[0])
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    values = truth + spec.noise_sd * rng.standard_normal(spec.replicates)
    if spec.clamp is not None:
        values = np.clip(values, spec.clamp[0], spec.clamp[1])
    mean = float(values.mean())
    variance = float(values.var(ddof=1)) if spec.replicates > 1 else 0.0
    return ObservedReplicates(values=tuple(float(v) for v in values),
                              mean=mean, variance=variance, count=spec.replicates)
