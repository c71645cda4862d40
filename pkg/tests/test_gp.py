import numpy as np
import pytest

from cryobo.errors import ValidationFailure
from cryobo.gp import SurrogateModel, _lml_and_grad, fit, lml_at


def smooth_1d(n=5):
    x = np.linspace(0.0, 1.0, n)[:, None]
    y = np.sin(3.0 * x[:, 0]) + 0.5 * x[:, 0]
    return x, y


def test_noiseless_interpolation():
    x, y = smooth_1d()
    m = fit(x, y, noise_mode="fixed_per_point", point_variances=np.zeros(len(y)),
            noise_floor=1e-8)
    mu, _ = m.predict_arrays(x)
    assert np.abs(mu - y).max() <= 1e-4


def test_constant_targets_inferred_mode():
    x = np.linspace(0, 1, 6)[:, None]
    y = np.full(6, 0.7)
    m = fit(x, y)
    mu, sd = m.predict_arrays(np.array([[0.25], [0.9]]))
    assert np.allclose(mu, 0.7, atol=1e-3)
    _, sd_at_data = m.predict_arrays(x)
    assert sd_at_data.max() < 0.05


def test_fixed_noise_shrinkage_matches_direct_formula():
    # 3-point instance checked against the (K + Sigma)^{-1} posterior formula
    x = np.array([[0.0], [0.5], [1.0]])
    y = np.array([0.2, 0.9, 0.4])
    variances = np.array([0.02, 0.05, 0.01]) / 3.0
    m = fit(x, y, noise_mode="fixed_per_point", point_variances=variances)

    # direct computation with the fitted hyperparameters, standardized space
    xs = (x - m.input_lo) / (m.input_hi - m.input_lo)
    ys = (y - m.y_mean) / m.y_std
    d = xs[:, None, :] - xs[None, :, :]
    sq = np.einsum("ijk,k->ij", d * d, 1.0 / m.lengthscales**2)
    r = np.sqrt(sq)
    s = np.sqrt(5.0) * r
    k = m.output_scale**2 * (1 + s + s**2 / 3) * np.exp(-s)
    gram = k + np.diag(np.maximum(variances, m.noise_floor) / m.y_std**2)
    alpha = np.linalg.solve(gram, ys - m.constant_mean)
    mu_direct = m.y_mean + m.y_std * (m.constant_mean + k @ alpha)

    mu, _ = m.predict_arrays(x)
    assert np.allclose(mu, mu_direct, atol=1e-8)
    # shrinkage: posterior pulled off the raw value toward the fitted mean
    raw_mean = m.y_mean + m.y_std * m.constant_mean
    for i in range(3):
        assert abs(mu[i] - raw_mean) <= abs(y[i] - raw_mean) + 1e-12


def test_prior_reversion_far_from_data():
    x, y = smooth_1d(8)
    m = fit(x, y, input_bounds=(np.array([0.0]), np.array([1.0])))
    far = np.array([[0.5 + 100.0]])  # >> 10 lengthscales in scaled units
    mu, sd = m.predict_arrays(far)
    raw_mean = m.y_mean + m.y_std * m.constant_mean
    raw_scale = m.y_std * m.output_scale
    assert abs(mu[0] - raw_mean) <= 0.01 * max(abs(raw_mean), raw_scale)
    assert abs(sd[0] - raw_scale) <= 0.01 * raw_scale


def test_predict_at_training_point_noiseless():
    x, y = smooth_1d()
    m = fit(x, y, noise_mode="fixed_per_point", point_variances=np.zeros(len(y)),
            noise_floor=1e-8)
    mu, _ = m.predict_arrays(x[2:3])
    assert abs(mu[0] - y[2]) <= 1e-4


def test_uncertainty_grows_away_from_one_sided_data():
    # training points on the right half only: the unexplored left side must
    # carry strictly larger posterior sd than at the data
    rng = np.random.default_rng(0)
    x = rng.uniform(0.5, 2.0, size=(5, 1))
    y = np.sin(5 * x[:, 0]) * (1 - np.tanh(x[:, 0] ** 2))
    m = fit(x, y, input_bounds=(np.array([-2.0]), np.array([2.0])))
    _, sd_data = m.predict_arrays(x)
    _, sd_left = m.predict_arrays(np.array([[-1.5], [-1.0], [-0.5]]))
    assert sd_left.min() > sd_data.max()


def test_sample_joint_statistics():
    x, y = smooth_1d(6)
    m = fit(x, y)
    q = np.array([[0.3]])
    mu, sd = m.predict_arrays(q)
    n = 50_000
    draws = m.sample_joint(q, n, seed=11)
    assert draws.shape == (n, 1)
    assert abs(draws.mean() - mu[0]) <= 3.0 * sd[0] / np.sqrt(n)
    again = m.sample_joint(q, n, seed=11)
    assert np.array_equal(draws, again)


def test_sample_joint_distant_points_uncorrelated():
    x, y = smooth_1d(6)
    m = fit(x, y, input_bounds=(np.array([0.0]), np.array([1.0])))
    q = np.array([[200.0], [400.0]])
    cov = m.posterior_cov(q)
    corr_true = cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1])
    assert abs(corr_true) < 1e-6  # kernel value at that separation
    draws = m.sample_joint(q, 50_000, seed=3)
    r = np.corrcoef(draws.T)[0, 1]
    assert abs(r) < 0.05


def test_lml_best_of_starts():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, size=(12, 2))
    y = np.sin(4 * x[:, 0]) + x[:, 1] ** 2 + 0.05 * rng.standard_normal(12)
    m = fit(x, y)
    assert all(m.log_marginal_likelihood >= s - 1e-9 for s in m.start_lmls)
    # and beats a few random probes
    prng = np.random.default_rng(9)
    for _ in range(5):
        probe = lml_at(m, lengthscales=prng.uniform(0.05, 2.0, 2),
                       output_scale=prng.uniform(0.2, 2.0),
                       constant_mean=prng.uniform(-0.5, 0.5),
                       noise_variance=prng.uniform(1e-4, 0.25))
        assert m.log_marginal_likelihood >= probe - 1e-9


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    xs = rng.uniform(0, 1, size=(10, 2))
    ys = rng.standard_normal(10)
    diff = xs[:, None, :] - xs[None, :, :]
    sq = np.moveaxis(diff * diff, 2, 0)
    params = np.array([np.log(0.4), np.log(0.7), np.log(1.2), 0.1, np.log(0.3)])
    _, grad = _lml_and_grad(params, xs, ys, sq, None, 1e-10)
    h = 1e-6
    for i in range(len(params)):
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        fd = (_lml_and_grad(up, xs, ys, sq, None, 1e-10)[0]
              - _lml_and_grad(dn, xs, ys, sq, None, 1e-10)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_fixed_noise_to_zero_matches_noiseless():
    x, y = smooth_1d(7)
    ref = fit(x, y, noise_mode="fixed_per_point", point_variances=np.zeros(7),
              noise_floor=1e-10)
    near = fit(x, y, noise_mode="fixed_per_point", point_variances=np.full(7, 1e-9),
               noise_floor=1e-10)
    grid = np.linspace(0, 1, 50)[:, None]
    mu_a, sd_a = ref.predict_arrays(grid)
    mu_b, sd_b = near.predict_arrays(grid)
    assert np.abs(mu_a - mu_b).max() <= 1e-3
    assert np.abs(sd_a - sd_b).max() <= 1e-3


def test_fit_validation():
    with pytest.raises(ValidationFailure):
        fit(np.array([[0.0]]), np.array([1.0]))  # one point
    with pytest.raises(ValidationFailure):
        fit(np.array([[0.0], [0.0]]), np.array([1.0, 2.0]))  # duplicates only
    with pytest.raises(ValidationFailure):
        fit(np.array([[0.0], [1.0]]), np.array([1.0, np.inf]))
    with pytest.raises(ValidationFailure):
        fit(np.array([[0.0], [1.0]]), np.array([1.0, 2.0]),
            noise_mode="fixed_per_point", point_variances=np.array([0.1]))
    with pytest.raises(ValidationFailure):
        fit(np.array([[0.0], [1.0]]), np.array([1.0, 2.0]), noise_mode="nope")


def test_predict_dimension_mismatch():
    x, y = smooth_1d()
    m = fit(x, y)
    with pytest.raises(ValidationFailure):
        m.predict_arrays(np.array([[0.1, 0.2]]))


def test_checkpoint_roundtrip(tmp_path):
    x, y = smooth_1d(6)
    m = fit(x, y, seed=4)
    ckpt = m.to_checkpoint()
    assert ckpt["kernel"] == "matern52-ard"
    assert len(ckpt["lengthscales"]) == 1
    assert ckpt["training_data"]
    ref1 = m.checkpoint_ref()
    m2 = fit(x, y, seed=4)
    assert m2.checkpoint_ref() == ref1
    path = tmp_path / "model.json"
    m.save_checkpoint(path)
    assert path.read_text().startswith("{")


def test_predict_returns_posterior_summaries():
    x, y = smooth_1d()
    m = fit(x, y)
    summaries = m.predict(np.array([[0.1], [0.9]]))
    assert len(summaries) == 2
    assert all(s.std >= 0 for s in summaries)
