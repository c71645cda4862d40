"""Noise-aware Gaussian process regression on bounded boxes.

Matern-5/2 kernel with per-dimension lengthscales and a constant mean,
fitted by multi-start L-BFGS-B ascent of the log marginal likelihood with
analytic gradients.  Inputs are scaled to [0, 1] per dimension and targets
standardized internally; all public values are in raw units.

Two noise treatments:
  * ``inferred_homoscedastic`` - a single noise variance is a hyperparameter.
  * ``fixed_per_point`` - caller supplies per-point variances (replicate
    variance / replicate count), floored at ``noise_floor``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import NumericalFailure, ValidationFailure

SQRT5 = np.sqrt(5.0)

NOISE_MODES = ("inferred_homoscedastic", "fixed_per_point")

# Log-space optimizer bounds: lengthscales in scaled-input units, output scale
# and noise in standardized-target units.  Kept tight: unconstrained MLE on a
# handful of points degenerates (runaway means, spiked lengthscales), which
# wrecks the exploration behavior downstream acquisition relies on.
_LS_BOUNDS = (np.log(0.01), np.log(3.0))
_OUT_BOUNDS = (np.log(0.1), np.log(3.0))
_NOISE_BOUNDS = (np.log(1e-6), np.log(1.0))
_MEAN_BOUNDS = (-1.0, 1.0)


def _matern52(sq: np.ndarray) -> np.ndarray:
    """Matern-5/2 correlation from squared scaled distance."""
    r = np.sqrt(np.maximum(sq, 0.0))
    s = SQRT5 * r
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def _scaled_sqdists(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,k->ij", d * d, 1.0 / lengthscales**2)


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean and standard deviation at one query point."""

    mean: float
    std: float


@dataclass
class SurrogateModel:
    """Fitted GP.  Immutable after fit(); safe to share across threads."""

    x_raw: np.ndarray
    y_raw: np.ndarray
    noise_mode: str
    lengthscales: np.ndarray          # scaled-input units
    output_scale: float               # standardized-target units
    constant_mean: float              # standardized-target units
    noise_variance: float | None      # standardized units, inferred mode
    point_noise_raw: np.ndarray | None  # raw units, fixed mode (pre-floor)
    noise_floor: float
    input_lo: np.ndarray
    input_hi: np.ndarray
    y_mean: float
    y_std: float
    log_marginal_likelihood: float
    jitter: float
    start_lmls: tuple[float, ...] = ()
    _chol: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    _alpha: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    # -- internal helpers ---------------------------------------------------

    def _scale_x(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.x_raw.shape[1]:
            raise ValidationFailure(
                f"query dimension {x.shape[1]} != training dimension {self.x_raw.shape[1]}")
        return (x - self.input_lo) / (self.input_hi - self.input_lo)

    @property
    def _xs(self) -> np.ndarray:
        return (self.x_raw - self.input_lo) / (self.input_hi - self.input_lo)

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.output_scale**2 * _matern52(_scaled_sqdists(a, b, self.lengthscales))

    # -- public API ----------------------------------------------------------

    def predict(self, x: np.ndarray) -> list[PosteriorSummary]:
        mu, sd = self.predict_arrays(x)
        return [PosteriorSummary(mean=float(m), std=float(s)) for m, s in zip(mu, sd)]

    def predict_arrays(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation, raw units, vectorized."""
        xq = self._scale_x(x)
        k_star = self._kernel(xq, self._xs)
        mu_std = self.constant_mean + k_star @ self._alpha
        v = solve_triangular(self._chol, k_star.T, lower=True)
        var = self.output_scale**2 - np.einsum("ij,ij->j", v, v)
        var = np.maximum(var, 0.0)
        return self.y_mean + self.y_std * mu_std, self.y_std * np.sqrt(var)

    def posterior_cov(self, x: np.ndarray) -> np.ndarray:
        """Joint posterior covariance over query points, raw units."""
        xq = self._scale_x(x)
        k_star = self._kernel(xq, self._xs)
        v = solve_triangular(self._chol, k_star.T, lower=True)
        cov = self._kernel(xq, xq) - v.T @ v
        return self.y_std**2 * cov

    def cross_cov(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Posterior covariance between two query sets, raw units."""
        xa, xb = self._scale_x(a), self._scale_x(b)
        ka = self._kernel(xa, self._xs)
        kb = self._kernel(xb, self._xs)
        va = solve_triangular(self._chol, ka.T, lower=True)
        vb = solve_triangular(self._chol, kb.T, lower=True)
        return self.y_std**2 * (self._kernel(xa, xb) - va.T @ vb)

    def posterior_projection(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(scaled queries, L^{-1} k(train, x)); lets callers assemble posterior
        cross-covariances over a large pool without repeated solves."""
        xq = self._scale_x(x)
        v = solve_triangular(self._chol, self._kernel(self._xs, xq), lower=True)
        return xq, v

    def sample_joint(self, x: np.ndarray, n_samples: int, seed: int | Sequence[int]) -> np.ndarray:
        """(n_samples, n_query) draws from the joint posterior; seeded."""
        if n_samples < 1:
            raise ValidationFailure("n_samples must be >= 1")
        mu, _ = self.predict_arrays(x)
        cov = self.posterior_cov(x)
        chol = _chol_with_jitter(cov, base_scale=max(float(np.max(np.diag(cov))), 1e-300))
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        z = rng.standard_normal((n_samples, cov.shape[0]))
        return mu[None, :] + z @ chol.T

    def to_checkpoint(self) -> dict:
        """JSON-serializable checkpoint: hyperparameters + training-data digest."""
        return {
            "schema": 1,
            "kernel": "matern52-ard",
            "noise_mode": self.noise_mode,
            "lengthscales": self.lengthscales.tolist(),
            "output_scale": self.output_scale,
            "constant_mean": self.constant_mean,
            "noise_variance": self.noise_variance,
            "noise_floor": self.noise_floor,
            "input_lo": self.input_lo.tolist(),
            "input_hi": self.input_hi.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "log_marginal_likelihood": self.log_marginal_likelihood,
            "jitter": self.jitter,
            "training_data": training_digest(self.x_raw, self.y_raw),
        }

    def checkpoint_ref(self) -> str:
        blob = json.dumps(self.to_checkpoint(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def save_checkpoint(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_checkpoint(), indent=2, sort_keys=True) + "\n")


def training_digest(x: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(x, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=float).tobytes())
    return h.hexdigest()[:16]


def _chol_with_jitter(mat: np.ndarray, base_scale: float) -> np.ndarray:
    """Lower Cholesky with escalating diagonal jitter: 1e-10 -> 1e-6 of scale.

    Raises NumericalFailure (with the attempted levels) past 1e-4.
    """
    jitters = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4]
    n = mat.shape[0]
    for j in jitters:
        try:
            return cholesky(mat + j * base_scale * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericalFailure(
        f"covariance not positive definite after jitter escalation up to {jitters[-1]:g} "
        f"(scale {base_scale:g}, n={n})")


def _lml_and_grad(params: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                  sq_per_dim: np.ndarray, fixed_noise: np.ndarray | None,
                  jitter: float) -> tuple[float, np.ndarray]:
    """Negative LML and gradient.  params = [log ls..., log out, mean(, log noise)]."""
    d = sq_per_dim.shape[0]
    log_ls = params[:d]
    log_out = params[d]
    mean = params[d + 1]
    ls2 = np.exp(2.0 * log_ls)
    out2 = np.exp(2.0 * log_out)

    sq = np.tensordot(1.0 / ls2, sq_per_dim, axes=(0, 0))
    r = np.sqrt(np.maximum(sq, 0.0))
    s = SQRT5 * r
    expo = np.exp(-s)
    corr = (1.0 + s + s * s / 3.0) * expo
    k = out2 * corr

    n = xs.shape[0]
    if fixed_noise is None:
        noise = np.exp(2.0 * params[d + 2])
        gram = k + (noise + jitter) * np.eye(n)
    else:
        gram = k + np.diag(fixed_noise + jitter)

    try:
        c, low = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError:
        return np.inf, np.zeros_like(params)

    resid = ys - mean
    alpha = cho_solve((c, low), resid)
    lml = -0.5 * resid @ alpha - np.log(np.diag(c)).sum() - 0.5 * n * np.log(2.0 * np.pi)

    kinv = cho_solve((c, low), np.eye(n))
    w = np.outer(alpha, alpha) - kinv  # dLML/dK = 0.5 * w

    grad = np.empty_like(params)
    # d corr / d r = -(5/3) r (1 + s) expo; d sq / d log ls_i = -2 sq_i
    # => d k / d log ls_i = out2 * (5/3)(1+s) expo * sq_i   (the 1/r cancels)
    base = out2 * (5.0 / 3.0) * (1.0 + s) * expo
    for i in range(d):
        dk = base * (sq_per_dim[i] / ls2[i])
        grad[i] = -0.5 * np.sum(w * dk)
    grad[d] = -0.5 * np.sum(w * (2.0 * k))
    grad[d + 1] = -np.sum(alpha)
    if fixed_noise is None:
        grad[d + 2] = -0.5 * np.trace(w) * 2.0 * noise
    return -lml, grad


def fit(inputs: np.ndarray,
        targets: np.ndarray,
        noise_mode: str = "inferred_homoscedastic",
        point_variances: np.ndarray | None = None,
        noise_floor: float = 1e-6,
        input_bounds: tuple[np.ndarray, np.ndarray] | None = None,
        n_restarts: int = 8,
        seed: int = 0,
        y_scale_floor: float = 0.0,
        output_scale_bounds: tuple[float, float] | None = None) -> SurrogateModel:
    """Fit hyperparameters by multi-start local ascent of the log marginal likelihood.

    ``input_bounds`` fixes the per-dimension [0, 1] scaling box; defaults to the
    training data's min/max.  Restart starting points are drawn from a seeded
    stream, so the fit is deterministic.

    ``y_scale_floor`` keeps target standardization from collapsing when early
    observations happen to span a sliver of the response range: pass ~10% of
    the known output scale so posterior uncertainty (and with it, exploration)
    stays honest before the data reveal the true amplitude.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValidationFailure("inputs/targets length mismatch")
    if x.shape[0] < 2:
        raise ValidationFailure("need at least 2 training points")
    if len({tuple(row) for row in x.tolist()}) < 2:
        raise ValidationFailure("need at least 2 distinct training points")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValidationFailure("training data must be finite")
    if noise_mode not in NOISE_MODES:
        raise ValidationFailure(f"noise_mode must be one of {NOISE_MODES}")

    if input_bounds is not None:
        lo = np.asarray(input_bounds[0], dtype=float)
        hi = np.asarray(input_bounds[1], dtype=float)
    else:
        lo, hi = x.min(axis=0), x.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    xs = (x - lo) / (hi - lo)

    y_mean = float(np.mean(y))
    y_std = float(max(np.std(y), y_scale_floor))
    if y_std <= 1e-12:
        y_std = 1.0
    ys = (y - y_mean) / y_std

    if noise_mode == "fixed_per_point":
        if point_variances is None:
            point_variances = np.zeros_like(y)
        pv = np.asarray(point_variances, dtype=float).ravel()
        if pv.shape[0] != y.shape[0]:
            raise ValidationFailure("point_variances length must match targets")
        if np.any(pv < 0):
            raise ValidationFailure("point variances must be non-negative")
        fixed_noise = np.maximum(pv, noise_floor) / y_std**2
    else:
        fixed_noise = None

    d = xs.shape[1]
    diff = xs[:, None, :] - xs[None, :, :]
    sq_per_dim = np.moveaxis(diff * diff, 2, 0)  # (d, n, n)

    out_bounds = _OUT_BOUNDS if output_scale_bounds is None else \
        (np.log(output_scale_bounds[0]), np.log(output_scale_bounds[1]))
    bounds = [_LS_BOUNDS] * d + [out_bounds, _MEAN_BOUNDS]
    if fixed_noise is None:
        bounds.append(_NOISE_BOUNDS)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6F70]))
    out0 = float(np.clip(0.0, out_bounds[0], out_bounds[1]))
    starts = [np.concatenate([np.zeros(d), [out0, 0.0],
                              [] if fixed_noise is not None else [np.log(0.1)]])]
    for _ in range(max(n_restarts - 1, 0)):
        s = [rng.uniform(np.log(0.05), np.log(2.0), size=d),
             rng.uniform(out_bounds[0], out_bounds[1], size=1),
             rng.uniform(-0.5, 0.5, size=1)]
        if fixed_noise is None:
            s.append(rng.uniform(np.log(1e-4), np.log(0.5), size=1))
        starts.append(np.concatenate(s))

    jitter = 1e-10
    best = None
    start_lmls = []
    for s0 in starts:
        f0, _ = _lml_and_grad(s0, xs, ys, sq_per_dim, fixed_noise, jitter)
        start_lmls.append(float(-f0))
        res = minimize(_lml_and_grad, s0, jac=True, method="L-BFGS-B", bounds=bounds,
                       args=(xs, ys, sq_per_dim, fixed_noise, jitter),
                       options={"maxiter": 200})
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None
    params = best.x

    lengthscales = np.exp(params[:d])
    output_scale = float(np.exp(params[d]))
    constant_mean = float(params[d + 1])
    noise_variance = None if fixed_noise is not None else float(np.exp(2.0 * params[d + 2]))

    k = output_scale**2 * _matern52(np.tensordot(1.0 / lengthscales**2, sq_per_dim, axes=(0, 0)))
    if fixed_noise is None:
        gram = k + noise_variance * np.eye(len(ys))
    else:
        gram = k + np.diag(fixed_noise)
    chol = _chol_with_jitter(gram, base_scale=output_scale**2)
    alpha = cho_solve((chol, True), ys - constant_mean)

    model = SurrogateModel(
        x_raw=x, y_raw=y, noise_mode=noise_mode,
        lengthscales=lengthscales, output_scale=output_scale,
        constant_mean=constant_mean, noise_variance=noise_variance,
        point_noise_raw=None if fixed_noise is None else np.asarray(point_variances, dtype=float),
        noise_floor=noise_floor, input_lo=lo, input_hi=hi,
        y_mean=y_mean, y_std=y_std,
        log_marginal_likelihood=float(-best.fun), jitter=jitter,
        start_lmls=tuple(start_lmls),
        _chol=chol, _alpha=alpha,
    )
    return model


def log_marginal_likelihood(model: SurrogateModel) -> float:
    return model.log_marginal_likelihood


def lml_at(model: SurrogateModel, lengthscales: np.ndarray, output_scale: float,
           constant_mean: float, noise_variance: float | None) -> float:
    """LML for arbitrary hyperparameters under the model's data (optimizer sanity checks)."""
    xs = model._xs
    d = xs.shape[1]
    diff = xs[:, None, :] - xs[None, :, :]
    sq_per_dim = np.moveaxis(diff * diff, 2, 0)
    ys = (model.y_raw - model.y_mean) / model.y_std
    if model.noise_mode == "fixed_per_point":
        fixed = np.maximum(model.point_noise_raw, model.noise_floor) / model.y_std**2
        params = np.concatenate([np.log(lengthscales), [np.log(output_scale), constant_mean]])
        neg, _ = _lml_and_grad(params, xs, ys, sq_per_dim, fixed, model.jitter)
    else:
        params = np.concatenate([np.log(lengthscales),
                                 [np.log(output_scale), constant_mean,
                                  0.5 * np.log(noise_variance)]])
        neg, _ = _lml_and_grad(params, xs, ys, sq_per_dim, None, model.jitter)
    return float(-neg)
