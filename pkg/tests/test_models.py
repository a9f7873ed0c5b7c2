import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgldcv.errors import CapabilityError, ModelEvaluationError
from sgldcv.models import (
    Dataset,
    GaussianModel,
    GradientModel,
    LogisticModel,
    build_model,
    full_gradient,
    posterior_moments,
    read_dataset,
    write_dataset,
)


def fd_gradient(f, theta, step=1e-5):
    out = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = step
        out[j] = (f(theta + e) - f(theta - e)) / (2 * step)
    return out


def logistic_model(N=50, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, d))
    y = np.where(rng.random(N) < 0.5, 1.0, -1.0)
    return LogisticModel(X, y)


def test_toy_posterior_moments(toy_gaussian):
    mean, var = posterior_moments(toy_gaussian)
    assert mean == pytest.approx([0.25])
    assert var == pytest.approx([0.25])


def test_posterior_moments_without_data():
    model = GaussianModel(np.zeros((0, 2)), sigma_x=1.0, sigma_0=1.5)
    mean, var = posterior_moments(model)
    np.testing.assert_allclose(mean, 0.0)
    np.testing.assert_allclose(var, 2.25)


def test_posterior_moments_are_coordinatewise():
    data = np.array([[1.0, -2.0], [3.0, 0.5], [0.0, 1.0]])
    mean, var = posterior_moments(GaussianModel(data, 0.7, 2.0))
    for j in range(2):
        m1, v1 = posterior_moments(GaussianModel(data[:, [j]], 0.7, 2.0))
        assert mean[j] == pytest.approx(m1[0])
        assert var[j] == pytest.approx(v1[0])


def test_posterior_moments_rejects_logistic():
    with pytest.raises(CapabilityError):
        posterior_moments(logistic_model())


def test_full_gradient_vanishes_at_posterior_mean(toy_gaussian):
    assert full_gradient(toy_gaussian, np.array([0.25])) == pytest.approx([0.0], abs=1e-15)
    assert full_gradient(toy_gaussian, np.array([0.0])) == pytest.approx([-1.0])


@pytest.mark.parametrize("seed", range(5))
def test_gaussian_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = GaussianModel(rng.normal(size=(20, 3)), sigma_x=0.8, sigma_0=1.7)
    theta = rng.normal(size=3)
    fd = fd_gradient(model.neg_log_posterior, theta)
    np.testing.assert_allclose(full_gradient(model, theta), fd, rtol=1e-4, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_logistic_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    model = logistic_model(seed=seed)
    theta = rng.uniform(0.1, 1.5, size=3) * rng.choice([-1, 1], size=3)
    fd = fd_gradient(model.neg_log_posterior, theta)
    np.testing.assert_allclose(full_gradient(model, theta), fd, rtol=1e-4, atol=1e-8)


def test_laplace_prior_subgradient_is_zero_at_zero():
    model = logistic_model()
    np.testing.assert_array_equal(model.grad_prior(np.array([0.0, 2.0, -1.0])), [0.0, 1.0, -1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_gaussian_strong_convexity_and_smoothness(vals):
    # sigma_x = sigma_0 = 1 makes every term 1-convex and 1-smooth, so
    # m = M = N + 1 for the posterior.
    model = GaussianModel(np.array([[0.3, -1.0], [1.0, 2.0], [0.0, 0.0]]))
    a, b = np.array(vals[:2]), np.array(vals[2:])
    diff = full_gradient(model, a) - full_gradient(model, b)
    N1 = model.n_data + 1
    assert np.linalg.norm(diff) <= N1 * np.linalg.norm(a - b) * (1 + 1e-12) + 1e-12
    assert diff @ (a - b) >= N1 * np.sum((a - b) ** 2) * (1 - 1e-12) - 1e-12


def test_grad_term_ignores_other_records():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(6, 2))
    theta = rng.normal(size=2)
    before = GaussianModel(data.copy()).grad_term(theta, 2)
    data[[0, 1, 3, 4, 5]] = rng.normal(size=(5, 2)) * 100
    np.testing.assert_array_equal(GaussianModel(data).grad_term(theta, 2), before)

    model = logistic_model()
    before = model.grad_term(theta[:1].repeat(3), 4)
    model.X[0] += 10
    model._yX[0] += 10
    np.testing.assert_array_equal(model.grad_term(theta[:1].repeat(3), 4), before)


def test_logistic_lipschitz_constants_bound_term_curvature():
    model = logistic_model(N=10)
    rng = np.random.default_rng(5)
    L = model.lipschitz_constants()
    for _ in range(20):
        a, b = rng.normal(size=3) * 2, rng.normal(size=3) * 2
        ga = model.grad_terms(a, np.arange(10))
        gb = model.grad_terms(b, np.arange(10))
        assert np.all(np.linalg.norm(ga - gb, axis=1) <= L * np.linalg.norm(a - b) * (1 + 1e-12))


def test_log_likelihood_shapes_and_values():
    model = GaussianModel(np.array([[1.0], [2.0]]))
    held = Dataset(np.array([[0.0], [1.0], [3.0]]), ["x1"])
    one = model.log_likelihood(np.array([1.0]), held)
    assert one.shape == (3,)
    assert one[1] == pytest.approx(-0.5 * np.log(2 * np.pi))
    many = model.log_likelihood(np.array([[1.0], [0.0]]), held)
    assert many.shape == (2, 3)
    np.testing.assert_allclose(many[0], one)

    lm = logistic_model(N=4, d=2)
    held = Dataset(np.array([[1.0, 0.0, 1.0], [0.0, 2.0, -1.0]]), ["x1", "x2", "y"])
    ll = lm.log_likelihood(np.array([0.5, 0.5]), held)
    np.testing.assert_allclose(ll, [-np.log1p(np.exp(-0.5)), -np.log1p(np.exp(1.0))])


def test_non_finite_term_reports_index():
    class Broken(GaussianModel):
        def grad_terms(self, theta, indices):
            out = super().grad_terms(theta, indices)
            out[np.asarray(indices) == 4] = np.nan
            return out

    with pytest.raises(ModelEvaluationError) as err:
        full_gradient(Broken(np.zeros((7, 1))), np.array([0.0]))
    assert err.value.index == 5


def test_base_model_capabilities():
    class Bare(GradientModel):
        dim = 1
        n_data = 1

    with pytest.raises(CapabilityError):
        Bare().log_likelihood(np.zeros(1), None)
    with pytest.raises(CapabilityError):
        Bare().lipschitz_constants()


def test_full_gradient_is_bit_reproducible():
    rng = np.random.default_rng(0)
    model = GaussianModel(rng.normal(size=(10000, 2)))
    theta = np.array([0.1, -0.3])
    assert full_gradient(model, theta).tobytes() == full_gradient(model, theta).tobytes()


def test_dataset_round_trip(tmp_path):
    ds = Dataset(np.array([[0.1, 1.0], [1 / 3, -1.0]]), ["x1", "y"])
    path = tmp_path / "d.csv"
    write_dataset(ds, path)
    back = read_dataset(str(path))
    assert back.columns == ["x1", "y"]
    np.testing.assert_array_equal(back.records, ds.records)
    model = build_model("logistic", back)
    assert model.dim == 1 and model.n_data == 2


def test_read_dataset_names_missing_path(tmp_path):
    missing = str(tmp_path / "absent.csv")
    with pytest.raises(FileNotFoundError, match="absent.csv"):
        read_dataset(missing)


def test_build_model_rejects_unknown_family():
    with pytest.raises(ValueError):
        build_model("poisson", Dataset(np.zeros((2, 1)), ["x1"]))


def test_logistic_rejects_bad_labels():
    with pytest.raises(ValueError):
        LogisticModel(np.zeros((2, 1)), np.array([0.0, 1.0]))
