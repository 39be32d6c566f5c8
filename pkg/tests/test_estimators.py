import numpy as np
import pytest

from discrete_env import DiscreteBandit
from mvbandit.bench import DigitBanditConfig, DigitBanditEnv, gen_digit_bandit
from mvbandit.data import Categorical, Continuous, FeatureSchema, LoggedDataset
from mvbandit.errors import ConfigError, EstimationError
from mvbandit.estimators import (
    SpvaeEstimator,
    SpvaeOptions,
    exact_match_density_factory,
    ips_weight_identity_check,
    pvae_density_factory,
)
from mvbandit.propensity import PropensityConfig, fit_propensity
from mvbandit.pvae import PvaeConfig, train_pvae


def one_row_dataset(action=1, reward=2.5, n_actions=3):
    schema = FeatureSchema((Continuous(0.0, 1.0),))
    return LoggedDataset(
        schema,
        np.array([[0.4]]),
        np.zeros((1, 1), dtype=bool),
        np.array([action]),
        np.array([reward]),
        n_actions,
    )


def test_single_row_theta_is_reward_over_propensity():
    data = one_row_dataset()
    pi = np.array([[0.2, 0.5, 0.3]])
    est = SpvaeEstimator(data, pi, density_factory=exact_match_density_factory())
    got = est.theta(np.array([0.4]), 1)
    assert got.value == pytest.approx(2.5 / 0.5)
    assert not got.no_support


def test_no_support_action_returns_zero_with_flag():
    data = one_row_dataset(action=1)
    pi = np.full((1, 3), 1 / 3)
    est = SpvaeEstimator(data, pi, density_factory=exact_match_density_factory())
    got = est.theta(np.array([0.4]), 2)
    assert got.value == 0.0
    assert got.no_support


def test_matched_single_neighbour_returns_its_reward():
    data = one_row_dataset(action=0, reward=-1.25)
    pi = np.full((1, 3), 1 / 3)
    est = SpvaeEstimator(data, pi, density_factory=exact_match_density_factory())
    assert est.theta_matched(np.array([0.4]), 0).value == -1.25


def test_matched_empty_action_raises():
    data = one_row_dataset(action=0)
    pi = np.full((1, 3), 1 / 3)
    est = SpvaeEstimator(data, pi, density_factory=exact_match_density_factory())
    with pytest.raises(EstimationError, match="no support"):
        est.theta_matched(np.array([0.4]), 2)


def test_matched_equal_similarity_is_mean_reward():
    schema = FeatureSchema((Continuous(0.0, 1.0),))
    # all rows fully missing -> every row matches any query equally
    data = LoggedDataset(
        schema,
        np.zeros((4, 1)),
        np.ones((4, 1), dtype=bool),
        np.array([0, 0, 0, 1]),
        np.array([1.0, 2.0, 3.0, 10.0]),
        2,
    )
    est = SpvaeEstimator(
        data, np.full((4, 2), 0.5), density_factory=exact_match_density_factory()
    )
    assert est.theta_matched(np.array([0.7]), 0).value == pytest.approx(2.0)


def test_all_underflow_raises_estimation_error():
    data = one_row_dataset()
    pi = np.full((1, 3), 1 / 3)
    est = SpvaeEstimator(data, pi, density_factory=exact_match_density_factory())
    with pytest.raises(EstimationError, match="underflow"):
        est.theta(np.array([99.0]), 1)


def test_weights_sum_to_one_and_nonnegative():
    band = DiscreteBandit(seed=1)
    data = band.generate(500, seed=2)
    est = SpvaeEstimator(
        data, data.truth.propensities, density_factory=exact_match_density_factory()
    )
    w, _ = est.weights(band.states[:8])
    assert np.all(w >= 0)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_scale_invariance_in_log_space():
    band = DiscreteBandit(seed=3)
    data = band.generate(300, seed=4)

    base = exact_match_density_factory()

    def shifted_factory(X, M):
        profile = base(X, M)
        return lambda Xq: profile(Xq) + 7.3  # densities scaled by e^{7.3}

    est_a = SpvaeEstimator(
        data, data.truth.propensities, density_factory=base
    )
    est_b = SpvaeEstimator(
        data, data.truth.propensities, density_factory=lambda X, M: shifted_factory(X, M)
    )
    x = band.states[5]
    va, _ = est_a.theta_all(x[None, :])
    vb, _ = est_b.theta_all(x[None, :])
    assert np.array_equal(va, vb)


def test_subsample_full_size_equals_no_subsample():
    band = DiscreteBandit(seed=5)
    data = band.generate(200, seed=6)
    full = SpvaeEstimator(
        data, data.truth.propensities, density_factory=exact_match_density_factory()
    )
    sub = SpvaeEstimator(
        data,
        data.truth.propensities,
        options=SpvaeOptions(subsample=200),
        density_factory=exact_match_density_factory(),
    )
    x = band.states[9]
    va, _ = full.theta_all(x[None, :])
    vb, _ = sub.theta_all(x[None, :])
    assert np.array_equal(va, vb)


def test_subsample_uses_chosen_rows_only():
    band = DiscreteBandit(seed=7)
    data = band.generate(400, seed=8)
    sub = SpvaeEstimator(
        data,
        data.truth.propensities,
        options=SpvaeOptions(subsample=50, seed=11),
        density_factory=exact_match_density_factory(),
    )
    assert sub.indices.size == 50
    assert np.all(np.diff(sub.indices) > 0)


@pytest.mark.slow
def test_discrete_env_estimates_match_brute_force_truth():
    band = DiscreteBandit(seed=9)
    data = band.generate(20_000, seed=10)
    est = SpvaeEstimator(
        data, data.truth.propensities, density_factory=exact_match_density_factory()
    )
    values, _ = est.theta_all(band.states)
    worst_ips = np.max(np.abs(values - band.theta))
    matched = est.theta_matched_all(band.states)
    worst_pair = np.max(np.abs(values - matched))
    assert worst_ips < 0.1, f"worst IPS error {worst_ips:.3f}"
    assert worst_pair < 0.1, f"IPS vs matched gap {worst_pair:.3f}"


def test_identity_check_uniform_logging():
    band = DiscreteBandit(seed=12)
    base = band.generate(500, seed=13)
    est = SpvaeEstimator(
        base, base.truth.propensities, density_factory=exact_match_density_factory()
    )
    result = ips_weight_identity_check(
        est, a=1, n_trials=200, regenerate=lambda k: band.generate(500, seed=1000 + k)
    )
    assert result == pytest.approx(1.0, abs=0.05)


def test_identity_check_deterministic_logging_is_exact():
    band = DiscreteBandit(n_actions=2, seed=14)
    data = band.generate(100, seed=15)
    data.actions[:] = 0
    data.truth.propensities[:] = np.array([1.0, 0.0])
    est = SpvaeEstimator(
        data, np.ones(len(data)), density_factory=exact_match_density_factory()
    )
    result = ips_weight_identity_check(est, a=0, n_trials=3, regenerate=lambda k: data)
    assert result == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
def test_identity_check_even_odd_policy():
    base = gen_digit_bandit(DigitBanditConfig(n=800, erase_rate=0.5, seed=30))
    pcfg = PvaeConfig(
        embed_dim=8, agg_dim=12, latent_dim=6, f_hidden=(24,), dec_hidden=(24,),
        epochs=8, batch_size=64, lr=3e-3, seed=31,
    )
    pvae = train_pvae(base, base.schema, pcfg)
    est = SpvaeEstimator(base, base.truth.propensities, pvae=pvae)
    result = ips_weight_identity_check(
        est,
        a=7,
        n_trials=200,
        regenerate=lambda k: gen_digit_bandit(
            DigitBanditConfig(n=800, erase_rate=0.5, seed=5000 + k)
        ),
    )
    assert result == pytest.approx(1.0, abs=0.05)


def test_pvae_density_concentrates_on_matching_cluster():
    data = gen_digit_bandit(DigitBanditConfig(n=1500, erase_rate=0.3, seed=40))
    pcfg = PvaeConfig(
        embed_dim=8, agg_dim=12, latent_dim=6, f_hidden=(24,), dec_hidden=(24,),
        epochs=25, batch_size=64, lr=3e-3, seed=41,
    )
    pvae = train_pvae(data, data.schema, pcfg)
    pi = fit_propensity(data, pvae, config=PropensityConfig(m=2, epochs=200, seed=42))
    est = SpvaeEstimator(data, pi, pvae=pvae)
    labels = data.truth.extras["label"].astype(int)
    # weight mass on the query's own cluster should clearly beat its 0.1 prior share
    env = DigitBanditEnv(DigitBanditConfig(n=10, seed=40))
    rng = np.random.default_rng(43)
    X, y = env.sample_features(20, rng)
    w, _ = est.weights(X)
    own = np.array([w[i, labels == y[i]].sum() for i in range(20)])
    assert own.mean() > 0.2


def test_weight_cap_applied():
    data = one_row_dataset(action=0, reward=1.0)
    pi = np.array([[1e-6, 0.5, 0.5]])
    est = SpvaeEstimator(
        data,
        pi,
        options=SpvaeOptions(weight_cap=50.0),
        density_factory=exact_match_density_factory(),
    )
    assert est.theta(np.array([0.4]), 0).value == pytest.approx(50.0)
