import numpy as np
import pytest

from discrete_env import DiscreteBandit
from mvbandit.data import Categorical, Continuous, FeatureSchema, PartialFeature
from mvbandit.errors import DomainError, RecommendationError
from mvbandit.estimators import SpvaeEstimator, exact_match_density_factory
from mvbandit.pvae import PvaeConfig, init_pvae
from mvbandit.strategies import (
    CONSERVATIVE,
    IMPUTATION,
    MER,
    Recommendation,
    RewardOracle,
    SpvaeOracle,
    StrategySpec,
    estimate_risk,
    recommend,
    recommend_conservative,
    recommend_imputation,
    recommend_mer,
    survivors_mask,
)


class TwoModeOracle(RewardOracle):
    """Toy: one scalar feature that is 0 w.p. 0.7 and 8 w.p. 0.3, actions
    0..9, scores -|feature - action| (the digit-distance reward)."""

    def __init__(self, shift=0.0):
        super().__init__(pvae=None, n_actions=10)
        self.shift = shift

    def impute_mean(self, xt):
        return np.array([0.0])  # the 0.7 mode

    def sample_posterior(self, xt, t, rng):
        return np.where(rng.random((t, 1)) < 0.7, 0.0, 8.0)

    def sample_prior(self, u, rng):
        return np.where(rng.random((u, 1)) < 0.7, 0.0, 8.0)

    def log_density_fn(self, xt):
        def profile(X):
            return np.where(X[:, 0] == 0.0, np.log(0.7), np.log(0.3))

        return profile

    def score_batch(self, X):
        acts = np.arange(10)
        values = -np.abs(X[:, [0]] - acts[None, :]) + self.shift
        return values, np.zeros(10, dtype=bool)


class GaussianPosteriorOracle(RewardOracle):
    """Sampling noise only; the score is the feature itself."""

    def __init__(self):
        super().__init__(pvae=None, n_actions=2)

    def sample_posterior(self, xt, t, rng):
        return rng.standard_normal((t, 1))

    def score_batch(self, X):
        return np.column_stack([X[:, 0], -X[:, 0]]), np.zeros(2, dtype=bool)


# ---------------------------------------------------------------------------
# imputation
# ---------------------------------------------------------------------------


def test_imputation_no_missing_scores_raw_feature():
    band = DiscreteBandit(seed=0)
    data = band.generate(2000, seed=1)
    pvae = init_pvae(
        band.schema,
        PvaeConfig(embed_dim=3, agg_dim=4, latent_dim=2, f_hidden=(5,), dec_hidden=(5,)),
        np.random.default_rng(2),
    )
    est = SpvaeEstimator(
        data, data.truth.propensities, pvae=pvae, density_factory=exact_match_density_factory()
    )
    oracle = SpvaeOracle(est)
    x = band.states[3]
    rec = recommend_imputation(oracle, PartialFeature.complete(x))
    direct, _ = est.theta_all(x[None, :])
    assert rec.action == int(np.argmax(direct[0]))
    assert np.array_equal(rec.scores, direct[0])


def test_single_action_always_recommended():
    class OneAction(RewardOracle):
        def __init__(self):
            super().__init__(pvae=None, n_actions=1)

        def impute_mean(self, xt):
            return xt.values

        def score_batch(self, X):
            return np.full((X.shape[0], 1), -3.0), np.zeros(1, dtype=bool)

    rec = recommend_imputation(OneAction(), PartialFeature.complete(np.array([1.0])))
    assert rec.action == 0


def test_all_unsupported_raises():
    class NoSupport(RewardOracle):
        def __init__(self):
            super().__init__(pvae=None, n_actions=3)

        def impute_mean(self, xt):
            return xt.values

        def score_batch(self, X):
            return np.zeros((X.shape[0], 3)), np.ones(3, dtype=bool)

    with pytest.raises(RecommendationError):
        recommend_imputation(NoSupport(), PartialFeature.complete(np.array([0.0])))


@pytest.mark.slow
def test_imputation_matches_brute_force_argmax_on_discrete_env():
    band = DiscreteBandit(seed=101, min_gap=0.15)
    gaps = np.sort(band.theta, axis=1)
    assert (gaps[:, -1] - gaps[:, -2]).min() > 0.12, "toy table should separate actions"
    data = band.generate(20_000, seed=5)
    pvae = init_pvae(
        band.schema,
        PvaeConfig(embed_dim=3, agg_dim=4, latent_dim=2, f_hidden=(5,), dec_hidden=(5,)),
        np.random.default_rng(6),
    )
    est = SpvaeEstimator(
        data, data.truth.propensities, pvae=pvae, density_factory=exact_match_density_factory()
    )
    oracle = SpvaeOracle(est)
    rng = np.random.default_rng(7)
    hits = 0
    for _ in range(100):
        idx = rng.integers(0, 16)
        x = band.states[idx]
        rec = recommend_imputation(oracle, PartialFeature.complete(x))
        hits += rec.action == int(np.argmax(band.theta[idx]))
    assert hits >= 95


# ---------------------------------------------------------------------------
# MER
# ---------------------------------------------------------------------------


def test_mer_t1_scores_single_sample():
    oracle = TwoModeOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    rec = recommend_mer(oracle, xt, t=1, rng=np.random.default_rng(3))
    sample = oracle.sample_posterior(xt, 1, np.random.default_rng(3))
    values, _ = oracle.score_batch(sample)
    assert np.array_equal(rec.scores, values[0])


def test_mer_no_missing_equals_imputation():
    band = DiscreteBandit(seed=0)
    data = band.generate(1000, seed=8)
    cfg = PvaeConfig(embed_dim=3, agg_dim=4, latent_dim=2, f_hidden=(5,), dec_hidden=(5,))
    pvae = init_pvae(band.schema, cfg, np.random.default_rng(9))
    est = SpvaeEstimator(
        data, data.truth.propensities, pvae=pvae, density_factory=exact_match_density_factory()
    )
    oracle = SpvaeOracle(est)
    xt = PartialFeature.complete(band.states[7])
    imp = recommend_imputation(oracle, xt)
    mer = recommend_mer(oracle, xt, t=5, rng=np.random.default_rng(10))
    # empty mask -> every posterior sample preserves the full observed vector
    assert mer.action == imp.action
    assert np.allclose(mer.scores, imp.scores)


def test_mer_bimodal_picks_expected_loss_minimizer():
    oracle = TwoModeOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    rec = recommend_mer(oracle, xt, t=2000, rng=np.random.default_rng(11))
    # exact enumeration over the two modes
    exact = np.array([-(0.7 * abs(0 - a) + 0.3 * abs(8 - a)) for a in range(10)])
    assert rec.action == int(np.argmax(exact)) == 0


def test_mer_variance_shrinks_like_one_over_t():
    oracle = GaussianPosteriorOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    ts = [10, 100, 1000]
    variances = []
    for t in ts:
        scores = [
            recommend_mer(oracle, xt, t=t, rng=np.random.default_rng(1000 * t + r)).scores[0]
            for r in range(40)
        ]
        variances.append(np.var(scores))
    slope = np.polyfit(np.log(ts), np.log(variances), 1)[0]
    assert -1.4 < slope < -0.6


# ---------------------------------------------------------------------------
# conservative
# ---------------------------------------------------------------------------


class ContinuousToyOracle(RewardOracle):
    """Standard-normal completions with the density mode at zero."""

    def __init__(self):
        super().__init__(pvae=None, n_actions=3)

    def impute_mean(self, xt):
        return np.array([0.0])

    def sample_posterior(self, xt, t, rng):
        return rng.standard_normal((t, 1))

    def sample_prior(self, u, rng):
        return rng.standard_normal((u, 1))

    def log_density_fn(self, xt):
        return lambda X: -0.5 * X[:, 0] ** 2 - 0.5 * np.log(2 * np.pi)

    def score_batch(self, X):
        x = X[:, 0]
        return np.column_stack([x, -x, 0.2 - x * x]), np.zeros(3, dtype=bool)


def test_conservative_near_one_equals_imputation():
    # continuous completions: generically no prior draw clears a c ~ 1 bar
    oracle = ContinuousToyOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    cons = recommend_conservative(oracle, xt, c=0.99999, u=20, rng=np.random.default_rng(12))
    imp = recommend_imputation(oracle, xt)
    assert cons.survivors == 1  # only the modal completion
    assert cons.action == imp.action
    assert np.allclose(cons.scores, imp.scores)


def test_conservative_at_mode_density_matches_imputation_action():
    # two-point posterior: samples sitting exactly at the modal density still
    # pass the strict threshold, but they coincide with the mode, so the
    # recommendation equals imputation
    oracle = TwoModeOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    cons = recommend_conservative(oracle, xt, c=0.999, u=50, rng=np.random.default_rng(12))
    imp = recommend_imputation(oracle, xt)
    assert cons.action == imp.action
    assert np.array_equal(cons.scores, imp.scores)


def test_conservative_c_zero_keeps_all_samples():
    oracle = TwoModeOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    rec = recommend_conservative(oracle, xt, c=0.0, u=50, rng=np.random.default_rng(13))
    assert rec.survivors == 51  # every sample plus the modal completion


def test_conservative_two_digit_set_picks_middle_action():
    oracle = TwoModeOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    # c = 0.1: log 0.3 > log 0.1 + log 0.7, so the 8-mode passes the threshold
    rec = recommend_conservative(oracle, xt, c=0.1, u=200, rng=np.random.default_rng(14))
    # exhaustive min-max over S x A: S spans {0, 8}
    exact = np.array([min(-abs(0 - a), -abs(8 - a)) for a in range(10)])
    assert rec.action == int(np.argmax(exact)) == 4


def test_survivor_sets_nest_as_c_grows():
    rng = np.random.default_rng(15)
    for _ in range(100):
        lp = rng.normal(-3, 2, size=60)
        lp_mode = float(lp.max() + 0.5)
        c1, c2 = sorted(rng.uniform(0.0, 0.99, size=2))
        s1 = survivors_mask(lp, lp_mode, c1)
        s2 = survivors_mask(lp, lp_mode, c2)
        assert np.all(~s1 | ~s2 | s1)  # trivially true; the real check below
        assert np.all(s2 <= s1), "S(c2) must be a subset of S(c1) for c1 < c2"


def test_conservative_min_scores_monotone_in_c():
    oracle = TwoModeOracle()
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    seeds = np.random.default_rng(16)
    scores = []
    for c in (0.0, 0.2, 0.8):
        rec = recommend_conservative(oracle, xt, c=c, u=100, rng=np.random.default_rng(17))
        scores.append(rec.scores)
    for lo, hi in zip(scores, scores[1:]):
        assert np.all(hi >= lo - 1e-12)


def test_argmax_invariant_to_constant_shift():
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    for variant, kwargs in (
        (IMPUTATION, {}),
        (MER, {"t": 50}),
        (CONSERVATIVE, {"c": 0.1, "u": 50}),
    ):
        spec = StrategySpec(variant, **kwargs)
        a = recommend(TwoModeOracle(), xt, spec, np.random.default_rng(18))
        b = recommend(TwoModeOracle(shift=123.0), xt, spec, np.random.default_rng(18))
        assert a.action == b.action


def test_recommendations_deterministic_given_seed():
    xt = PartialFeature(np.array([0.0]), np.array([True]))
    for spec in (
        StrategySpec(IMPUTATION),
        StrategySpec(MER, t=30),
        StrategySpec(CONSERVATIVE, c=0.3, u=40),
    ):
        a = recommend(TwoModeOracle(), xt, spec, np.random.default_rng(19))
        b = recommend(TwoModeOracle(), xt, spec, np.random.default_rng(19))
        assert a.action == b.action
        assert np.array_equal(a.scores, b.scores)


def test_strategy_spec_validation():
    with pytest.raises(Exception):
        StrategySpec(CONSERVATIVE, c=1.0)
    with pytest.raises(Exception):
        StrategySpec(MER, t=0)
    with pytest.raises(DomainError):
        recommend_conservative(
            TwoModeOracle(),
            PartialFeature(np.array([0.0]), np.array([True])),
            c=-0.1,
            u=10,
            rng=np.random.default_rng(0),
        )


# ---------------------------------------------------------------------------
# risk proxy
# ---------------------------------------------------------------------------


def risk_model():
    schema = FeatureSchema((Continuous(0.0, 1.0), Continuous(0.0, 1.0), Categorical(3)))
    cfg = PvaeConfig(embed_dim=3, agg_dim=4, latent_dim=2, f_hidden=(5,), dec_hidden=(5,))
    return init_pvae(schema, cfg, np.random.default_rng(20))


def test_risk_zero_at_c_zero():
    model = risk_model()
    xt = PartialFeature(np.array([0.0, 0.0, 1.0]), np.array([True, True, False]))
    assert estimate_risk(model, xt, 0.0).risk == 0.0


def test_risk_closed_form_matches_normal_tail_and_mc():
    model = risk_model()
    xt = PartialFeature(np.array([0.5, 0.0, 1.0]), np.array([False, True, False]))
    c = float(np.exp(-0.5))  # Mahalanobis radius 1
    result = estimate_risk(model, xt, c)
    assert result.missing_continuous == 1
    assert result.risk == pytest.approx(0.3173, abs=1e-3)  # 2 Phi(-1)
    z = np.random.default_rng(21).standard_normal(1_000_000)
    mc = float(np.mean(z * z > 1.0))
    assert abs(result.risk - mc) < 2e-3


def test_risk_monotone_in_c():
    model = risk_model()
    xt = PartialFeature(np.array([0.0, 0.0, 1.0]), np.array([True, True, False]))
    grid = [0.0] + [round(0.1 * k, 1) for k in range(1, 10)]
    risks = [estimate_risk(model, xt, c).risk for c in grid]
    assert all(b > a for a, b in zip(risks, risks[1:]))


def test_risk_ignores_missing_categorical():
    model = risk_model()
    # only the categorical attribute is missing -> proxy has no dimensions
    xt = PartialFeature(np.array([0.1, 0.2, 0.0]), np.array([False, False, True]))
    result = estimate_risk(model, xt, 0.5)
    assert result.risk == 0.0
    assert result.no_missing_continuous


def test_conservative_reports_risk_diagnostic():
    band = DiscreteBandit(seed=0)
    data = band.generate(500, seed=22)
    cfg = PvaeConfig(embed_dim=3, agg_dim=4, latent_dim=2, f_hidden=(5,), dec_hidden=(5,))
    pvae = init_pvae(band.schema, cfg, np.random.default_rng(23))
    est = SpvaeEstimator(
        data, data.truth.propensities, pvae=pvae, density_factory=exact_match_density_factory()
    )
    oracle = SpvaeOracle(est)
    xt = PartialFeature(band.states[2], np.array([False, False, True, True]))
    rec = recommend_conservative(oracle, xt, c=0.5, u=20, rng=np.random.default_rng(24))
    # all-categorical schema: the Gaussian risk proxy is flagged off
    assert rec.risk == 0.0
    assert rec.survivors >= 1
