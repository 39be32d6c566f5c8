"""Recommendation strategies over a reward oracle.

Three strategies handle the uncertainty left by missing attributes:

* imputation: score the single most likely completion;
* maximum expected reward (MER): average scores over t posterior completions;
* conservative: max-min over the set S of completions whose posterior
  density clears c times the density of the modal completion (the modal
  completion itself is always admitted, so S is never empty; c -> 1 recovers
  imputation, c = 0 keeps every generated sample).

A ``RewardOracle`` packages the score backend (similarity estimator or
conditional VAE) with the generative model used for imputation, posterior and
prior sampling, and density evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .cpvae import CpvaeModel, POINT, predict_reward_batch
from .data import Continuous, PartialFeature
from .errors import ConfigError, DomainError, EstimationError, RecommendationError
from .estimators import SpvaeEstimator
from .pvae import (
    MEAN,
    PvaeModel,
    impute,
    posterior_head_params,
    profile_log_density_batch,
    sample_posterior_features,
    sample_prior_features,
)

IMPUTATION = "imputation"
MER = "mer"
CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class StrategySpec:
    variant: str
    t: int = 5  # MER posterior draws
    c: float = 0.1  # conservative prudence, 0 <= c < 1
    u: int = 50  # conservative prior draws

    def __post_init__(self):
        if self.variant not in (IMPUTATION, MER, CONSERVATIVE):
            raise ConfigError(f"unknown strategy {self.variant!r}")
        if self.t < 1 or self.u < 1:
            raise ConfigError("t and u must be >= 1")
        if not 0.0 <= self.c < 1.0:
            raise ConfigError("c must be in [0, 1)")


@dataclass
class Recommendation:
    action: int
    scores: np.ndarray  # per-action strategy scores
    strategy: StrategySpec
    survivors: int | None = None  # |S| for the conservative strategy
    risk: float | None = None
    samples_drawn: int = 0
    no_support: np.ndarray = field(default=None)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class RewardOracle:
    """Score backend plus the paired generative model.

    Subclasses provide ``score_batch``; everything generative (imputation,
    posterior/prior sampling, densities) defaults to the paired partial VAE.
    """

    def __init__(self, pvae: PvaeModel, n_actions: int):
        self.pvae = pvae
        self.n_actions = n_actions

    # generative side -------------------------------------------------

    def impute_mean(self, xt: PartialFeature) -> np.ndarray:
        return impute(self.pvae, xt, MEAN)

    def sample_posterior(self, xt: PartialFeature, t: int, rng) -> np.ndarray:
        return sample_posterior_features(self.pvae, xt, t, rng)

    def sample_prior(self, u: int, rng) -> np.ndarray:
        return sample_prior_features(self.pvae, u, rng)

    def log_density_fn(self, xt: PartialFeature):
        """callable X (B, d) -> (B,) log p(x | x-tilde)."""
        params = posterior_head_params(self.pvae, xt.values[None, :], xt.mask[None, :])

        def profile(X: np.ndarray) -> np.ndarray:
            return profile_log_density_batch(params, X)[:, 0]

        return profile

    def risk(self, xt: PartialFeature, c: float) -> float | None:
        if self.pvae is None:
            return None
        return estimate_risk(self.pvae, xt, c).risk

    # scoring side ------------------------------------------------------

    def score_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(values (B, |A|), no_support (|A|,) bool)."""
        raise NotImplementedError

    def score_partial(self, xt: PartialFeature) -> tuple[np.ndarray, np.ndarray]:
        """Scores used by the imputation strategy; defaults to scoring the
        modal completion."""
        values, flags = self.score_batch(self.impute_mean(xt)[None, :])
        return values[0], flags


class SpvaeOracle(RewardOracle):
    """Similarity-weighted IPS scores (optionally the matched variant)."""

    def __init__(self, estimator: SpvaeEstimator, matched: bool = False):
        if estimator.pvae is None:
            raise ConfigError("strategies need the estimator's paired pvae")
        super().__init__(estimator.pvae, estimator.n_actions)
        self.estimator = estimator
        self.matched = matched

    def score_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        no_support = ~self.estimator.action_support
        if self.matched:
            values = self.estimator.theta_matched_all(X)
            values = np.where(np.isnan(values), 0.0, values)
        else:
            values, _ = self.estimator.theta_all(X)
        return values, no_support


class CpvaeOracle(RewardOracle):
    """End-to-end reward head of the conditional VAE; scoring a feature is
    one forward pass per action."""

    def __init__(self, model: CpvaeModel, pvae: PvaeModel):
        super().__init__(pvae, model.n_actions)
        self.model = model

    def _score(self, X: np.ndarray, M: np.ndarray) -> np.ndarray:
        B = X.shape[0]
        values = np.empty((B, self.n_actions))
        for a in range(self.n_actions):
            values[:, a], _ = predict_reward_batch(
                self.model, X, M, np.full(B, a), mode=POINT
            )
        return values

    def score_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        M = np.zeros(X.shape, dtype=bool)
        return self._score(X, M), np.zeros(self.n_actions, dtype=bool)

    def score_partial(self, xt: PartialFeature) -> tuple[np.ndarray, np.ndarray]:
        # feed the incomplete feature directly; the encoder handles the gaps
        values = self._score(xt.values[None, :], xt.mask[None, :])
        return values[0], np.zeros(self.n_actions, dtype=bool)


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


def _pick(scores: np.ndarray, no_support: np.ndarray) -> int:
    """Lowest-index argmax over supported actions."""
    if no_support.all():
        raise RecommendationError("every action is flagged as unsupported")
    masked = np.where(no_support, -np.inf, scores)
    return int(np.argmax(masked))


def recommend_imputation(oracle: RewardOracle, xt: PartialFeature) -> Recommendation:
    scores, flags = oracle.score_partial(xt)
    spec = StrategySpec(IMPUTATION)
    return Recommendation(_pick(scores, flags), scores, spec, no_support=flags)


def recommend_mer(
    oracle: RewardOracle, xt: PartialFeature, t: int, rng: np.random.Generator
) -> Recommendation:
    if t < 1:
        raise DomainError("t must be >= 1")
    samples = oracle.sample_posterior(xt, t, rng)
    values, flags = oracle.score_batch(samples)
    scores = values.mean(axis=0)
    spec = StrategySpec(MER, t=t)
    return Recommendation(
        _pick(scores, flags), scores, spec, samples_drawn=t, no_support=flags
    )


def survivors_mask(log_density: np.ndarray, log_density_mode: float, c: float) -> np.ndarray:
    """Which samples satisfy p(x | x-tilde) > c * p(x-hat | x-tilde).

    c = 0 admits everything with positive density (log 0 = -inf threshold).
    """
    if c == 0.0:
        return log_density > -np.inf
    return log_density > np.log(c) + log_density_mode


def recommend_conservative(
    oracle: RewardOracle,
    xt: PartialFeature,
    c: float,
    u: int,
    rng: np.random.Generator,
) -> Recommendation:
    if not 0.0 <= c < 1.0:
        raise DomainError("c must be in [0, 1)")
    if u < 1:
        raise DomainError("u must be >= 1")
    x_hat = oracle.impute_mean(xt)
    samples = oracle.sample_prior(u, rng)
    profile = oracle.log_density_fn(xt)
    lp_samples = profile(samples)
    lp_mode = float(profile(x_hat[None, :])[0])
    keep = survivors_mask(lp_samples, lp_mode, c)
    # the modal completion is always admitted, so S is never empty
    S = np.concatenate([x_hat[None, :], samples[keep]], axis=0)
    values, flags = oracle.score_batch(S)
    scores = values.min(axis=0)
    risk = oracle.risk(xt, c)
    spec = StrategySpec(CONSERVATIVE, c=c, u=u)
    return Recommendation(
        _pick(scores, flags),
        scores,
        spec,
        survivors=int(S.shape[0]),
        risk=risk,
        samples_drawn=u,
        no_support=flags,
    )


def recommend(
    oracle: RewardOracle, xt: PartialFeature, spec: StrategySpec, rng: np.random.Generator
) -> Recommendation:
    if spec.variant == IMPUTATION:
        return recommend_imputation(oracle, xt)
    if spec.variant == MER:
        return recommend_mer(oracle, xt, spec.t, rng)
    return recommend_conservative(oracle, xt, spec.c, spec.u, rng)


# ---------------------------------------------------------------------------
# Risk proxy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskResult:
    risk: float
    missing_continuous: int

    @property
    def no_missing_continuous(self) -> bool:
        return self.missing_continuous == 0


def estimate_risk(model: PvaeModel, xt: PartialFeature, c: float) -> RiskResult:
    """Posterior mass excluded by the conservative threshold, under a
    Gaussian proxy centered at the modal completion.

    {x : p(x|x-tilde) >= c p(x-hat|x-tilde)} is the Mahalanobis ball of
    squared radius -2 ln c, so the excluded mass is the upper tail of a
    chi-square with one degree of freedom per missing continuous attribute:
    R = Q(d/2, -ln c) (regularized upper incomplete gamma). R(0) = 0.
    """
    if not 0.0 <= c < 1.0:
        raise DomainError("c must be in [0, 1)")
    d_miss = sum(
        1
        for j, attr in enumerate(model.schema.attributes)
        if xt.mask[j] and isinstance(attr, Continuous)
    )
    if d_miss == 0 or c == 0.0:
        return RiskResult(0.0, d_miss)
    return RiskResult(float(gammaincc(d_miss / 2.0, -np.log(c))), d_miss)
