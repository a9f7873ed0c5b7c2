import numpy as np
import pytest

from sgldcv.errors import ConfigurationError, DivergenceError
from sgldcv.estimators import CenteringState
from sgldcv.models import GaussianModel, full_gradient, posterior_moments
from sgldcv.samplers import SamplerConfig, chain_noise, read_chain, run_chain, run_chains, sgld_step, write_chain


def test_sgld_step_examples():
    assert sgld_step(np.array([1.0]), np.array([0.0]), 0.3, np.array([0.0])) == pytest.approx([1.0])
    assert sgld_step(np.array([1.0]), np.array([2.0]), 0.1, np.array([0.05])) == pytest.approx([0.95])


def test_sgld_step_rejects_non_finite():
    with pytest.raises(DivergenceError):
        sgld_step(np.array([1.0]), np.array([np.nan]), 0.1, np.array([0.0]))


def test_stationary_variance_formula():
    # AR(1) fixed point v = (1 - h/(2 s2))^2 v + h
    h, s2 = 0.1, 1.0
    v = h / (1 - (1 - h / (2 * s2)) ** 2)
    assert v == pytest.approx(s2 / (1 - h / (4 * s2)))
    assert v == pytest.approx(1.0256, abs=1e-4)


def test_single_step_by_hand(toy_gaussian):
    config = SamplerConfig(h=0.05, n=1, K=1, seed=9)
    record = run_chain(toy_gaussian, config, theta0=np.array([0.5]))
    g = record.gradient_estimates[0]
    noise = chain_noise(9, 1, 1, 0.05)[0]
    assert record.theta_final == pytest.approx(0.5 - 0.025 * g + noise)
    # the estimate is one of the three size-1 naive estimates at 0.5
    candidates = [0.5 + 3 * (0.5 - x) for x in (-1.0, 0.0, 2.0)]
    assert min(abs(g[0] - c) for c in candidates) < 1e-12


def test_cv_first_estimate_is_zero_at_posterior_mean(toy_gaussian):
    centering = CenteringState.at(toy_gaussian, np.array([0.25]))
    record = run_chain(toy_gaussian, SamplerConfig(h=0.01, n=1, K=5, estimator="cv", seed=1), centering=centering)
    assert record.samples[0] == pytest.approx([0.25])
    assert record.gradient_estimates[0] == pytest.approx([0.0], abs=1e-15)


def test_cv_chain_estimate_is_exact_at_centering(small_gaussian):
    centering = CenteringState.at(small_gaussian, np.array([0.3, -0.2]))
    config = SamplerConfig(h=0.01, n=2, K=1, estimator="cv", seed=2)
    record = run_chain(small_gaussian, config, centering=centering, theta0=centering.theta_hat)
    np.testing.assert_array_equal(record.gradient_estimates[0], centering.grad_full)


@pytest.mark.parametrize("estimator", ["naive", "cv", "saga"])
def test_same_seed_is_bit_identical(small_gaussian, estimator):
    centering = CenteringState.at(small_gaussian, np.zeros(2))
    config = SamplerConfig(h=0.02, n=2, K=300, estimator=estimator, seed=5)
    a = run_chain(small_gaussian, config, centering=centering)
    b = run_chain(small_gaussian, config, centering=centering)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert a.gradient_estimates.tobytes() == b.gradient_estimates.tobytes()


def test_replay_reproduces_samples(small_gaussian):
    config = SamplerConfig(h=0.02, n=2, K=2500, estimator="saga", seed=3)
    record = run_chain(small_gaussian, config)
    noise = chain_noise(3, 2500, 2, 0.02)
    replay = record.samples[:-1] - 0.01 * record.gradient_estimates[:-1] + noise[:-1]
    np.testing.assert_array_equal(replay, record.samples[1:])
    np.testing.assert_array_equal(record.samples[-1] - 0.01 * record.gradient_estimates[-1] + noise[-1], record.theta_final)


def test_cv_requires_centering(toy_gaussian):
    with pytest.raises(ConfigurationError):
        run_chain(toy_gaussian, SamplerConfig(h=0.01, n=1, K=5, estimator="cv"))


@pytest.mark.parametrize("kwargs", [dict(h=0.0), dict(n=0), dict(n=4), dict(K=0), dict(estimator="svrg")])
def test_config_validation(toy_gaussian, kwargs):
    base = dict(h=0.01, n=1, K=5)
    base.update(kwargs)
    with pytest.raises(ConfigurationError):
        run_chain(toy_gaussian, SamplerConfig(**base))


def test_divergence_carries_partial_record(toy_gaussian):
    with pytest.raises(DivergenceError) as err:
        run_chain(toy_gaussian, SamplerConfig(h=5.0, n=3, K=1000, seed=0), theta0=np.array([1.0]))
    rec = err.value.record
    assert err.value.iteration is not None
    assert rec.samples.shape[0] == err.value.iteration
    assert np.all(np.isfinite(rec.samples))


def test_evaluation_counts(small_gaussian):
    centering = CenteringState.at(small_gaussian, np.zeros(2))
    cached = CenteringState.at(small_gaussian, np.zeros(2), "cached")
    K = 10
    assert run_chain(small_gaussian, SamplerConfig(0.01, 2, K, "naive")).n_evaluations == 20
    assert run_chain(small_gaussian, SamplerConfig(0.01, 2, K, "cv"), centering=centering).n_evaluations == 40
    assert run_chain(small_gaussian, SamplerConfig(0.01, 2, K, "cv"), centering=cached).n_evaluations == 20
    assert run_chain(small_gaussian, SamplerConfig(0.01, 2, K, "saga")).n_evaluations == 25


def test_full_batch_gives_exact_gradients(toy_gaussian):
    record = run_chain(toy_gaussian, SamplerConfig(h=0.01, n=3, K=50, seed=2))
    exact = np.array([full_gradient(toy_gaussian, t) for t in record.samples])
    np.testing.assert_allclose(record.gradient_estimates, exact, rtol=1e-12, atol=1e-12)


def test_cv_chain_stays_within_posterior_scale():
    rng = np.random.default_rng(0)
    model = GaussianModel(rng.normal(1.0, 1.0, size=(200, 2)))
    mean, var = posterior_moments(model)
    centering = CenteringState.at(model, mean)
    record = run_chain(model, SamplerConfig(h=0.1 / 201, n=10, K=20000, estimator="cv", seed=4), centering=centering)
    second = record.samples[10000:]
    msd = np.mean(np.sum((second - mean) ** 2, axis=1))
    trace = var.sum()
    assert trace / 2 <= msd <= 2 * trace


def test_run_chains_are_independent(toy_gaussian):
    records = run_chains(toy_gaussian, SamplerConfig(h=0.01, n=1, K=20, seed=1), 3)
    assert not np.array_equal(records[0].samples, records[1].samples)
    assert np.array_equal(records[2].samples, run_chain(toy_gaussian, SamplerConfig(h=0.01, n=1, K=20, seed=1), chain=2).samples)


def test_chain_csv_round_trip(tmp_path, small_gaussian):
    record = run_chain(small_gaussian, SamplerConfig(h=0.01, n=2, K=30, seed=1))
    write_chain(record, tmp_path)
    header = (tmp_path / "samples.csv").read_text().splitlines()[0]
    assert header == "theta_1,theta_2"
    assert (tmp_path / "gradients.csv").read_text().splitlines()[0] == "g_1,g_2"
    samples, grads = read_chain(tmp_path)
    np.testing.assert_array_equal(samples, record.samples)
    np.testing.assert_array_equal(grads, record.gradient_estimates)


def test_record_gradients_off(toy_gaussian):
    record = run_chain(toy_gaussian, SamplerConfig(h=0.01, n=1, K=5, record_gradients=False))
    assert record.gradient_estimates is None
