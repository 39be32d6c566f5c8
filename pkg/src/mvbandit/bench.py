"""Synthetic logged-bandit environments, missingness injectors, and
policy-evaluation metrics.

Three families mirror the experiments this package targets:

* digit bandit: 10 well-separated Gaussian clusters stand in for digit
  images; reward is N(-|label - action|, 0.1^2); the logging policy prefers
  high actions for even labels and low actions for odd ones.
* ihdp-b: 25 mixed covariates, two actions, potential outcomes
  (exp((X+0.5) beta), X beta - omega) with omega calibrated on the realized
  sample so the empirical treatment effect is exactly the target.
* glucose bandit: nine correlated continuous attributes, ten doses in [0,1],
  a smooth bowl-shaped CGM response, and the piecewise hypo/hyper reward.

Every generator keeps a ground-truth block (complete features, per-action
expected rewards, true logging probabilities) for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import (
    Categorical,
    Continuous,
    FeatureSchema,
    GroundTruth,
    LoggedDataset,
    PartialFeature,
)
from .errors import ConfigError, DataError


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# Missingness injectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mcar:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"MCAR rate must be in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class Mar:
    """Missingness of every non-anchor attribute is a logistic function of
    the (standardized) anchor value; the anchor itself is never masked."""

    rate: float
    anchor: int
    slope: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"MAR rate must be in [0, 1), got {self.rate}")
        if self.anchor < 0:
            raise ConfigError("MAR needs a designated anchor attribute")


def missingness_mask(X: np.ndarray, mechanism, rng: np.random.Generator) -> np.ndarray:
    n, d = X.shape
    if isinstance(mechanism, Mcar):
        if mechanism.rate == 0.0:
            return np.zeros((n, d), dtype=bool)
        return rng.random((n, d)) < mechanism.rate
    if isinstance(mechanism, Mar):
        if mechanism.anchor >= d:
            raise ConfigError(f"MAR anchor {mechanism.anchor} outside 0..{d - 1}")
        a = X[:, mechanism.anchor]
        std = a.std()
        a_std = (a - a.mean()) / (std if std > 0 else 1.0)
        base = np.log(mechanism.rate / (1.0 - mechanism.rate)) if mechanism.rate > 0 else -np.inf
        p = 1.0 / (1.0 + np.exp(-(base + mechanism.slope * a_std)))
        mask = rng.random((n, d)) < p[:, None]
        mask[:, mechanism.anchor] = False
        return mask
    raise ConfigError(f"unknown missingness mechanism {mechanism!r}")


def inject_missingness(data: LoggedDataset, mechanism, rng: np.random.Generator) -> LoggedDataset:
    """Fresh dataset with the mechanism applied to the complete features.

    Requires the ground-truth block (the complete features are the basis)."""
    if data.truth is None:
        raise DataError("inject_missingness needs the ground-truth feature block")
    X = data.truth.features
    mask = missingness_mask(X, mechanism, rng)
    return LoggedDataset(
        data.schema, X.copy(), mask, data.actions.copy(), data.rewards.copy(),
        data.n_actions, truth=data.truth,
    )


# ---------------------------------------------------------------------------
# Digit bandit
# ---------------------------------------------------------------------------


@dataclass
class DigitBanditConfig:
    n: int = 5000
    d: int = 16
    classes: int = 10
    erase_rate: float = 0.5
    reward_noise: float = 0.1  # std of the reward draw
    cluster_sep: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.classes != 10:
            raise ConfigError("digit bandit uses 10 classes")
        if self.d < self.classes:
            raise ConfigError(f"need d >= {self.classes} for separated clusters")
        if not 0.0 <= self.erase_rate < 1.0:
            raise ConfigError("erase_rate must be in [0, 1)")


def digit_logging_probs(labels: np.ndarray, n_actions: int = 10) -> np.ndarray:
    """Even labels: 1/20 on actions 0-4 and 3/20 on 5-9; odd labels swapped."""
    n = labels.shape[0]
    p = np.empty((n, n_actions))
    even = labels % 2 == 0
    p[even, :5] = 1.0 / 20.0
    p[even, 5:] = 3.0 / 20.0
    p[~even, :5] = 3.0 / 20.0
    p[~even, 5:] = 1.0 / 20.0
    return p


class DigitBanditEnv:
    def __init__(self, cfg: DigitBanditConfig):
        self.cfg = cfg
        self.centers = np.zeros((cfg.classes, cfg.d))
        for k in range(cfg.classes):
            self.centers[k, k] = cfg.cluster_sep
        # population stats of the cluster mixture, used as schema constants
        mean = self.centers.mean(axis=0)
        second = (self.centers**2).mean(axis=0) + 1.0
        std = np.sqrt(second - mean**2)
        self.schema = FeatureSchema(
            tuple(Continuous(float(m), float(s)) for m, s in zip(mean, std))
        )
        self.n_actions = 10

    def sample_features(self, n: int, rng: np.random.Generator):
        labels = rng.integers(0, self.cfg.classes, size=n)
        X = self.centers[labels] + rng.standard_normal((n, self.cfg.d))
        return X, labels

    def expected_reward(self, labels: np.ndarray) -> np.ndarray:
        acts = np.arange(self.n_actions)
        return -np.abs(labels[:, None] - acts[None, :]).astype(float)

    def draw_reward(self, labels: np.ndarray, actions: np.ndarray, rng) -> np.ndarray:
        return rng.normal(-np.abs(labels - actions), self.cfg.reward_noise)

    def logged(self) -> LoggedDataset:
        rng = _rng(self.cfg.seed)
        X, labels = self.sample_features(self.cfg.n, rng)
        pi0 = digit_logging_probs(labels)
        actions = np.array([rng.choice(10, p=row) for row in pi0])
        rewards = self.draw_reward(labels, actions, rng)
        mask = missingness_mask(X, Mcar(self.cfg.erase_rate), rng)
        truth = GroundTruth(
            X.copy(), self.expected_reward(labels), pi0, {"label": labels.astype(float)}
        )
        return LoggedDataset(self.schema, X, mask, actions, rewards, 10, truth=truth)


def gen_digit_bandit(cfg: DigitBanditConfig) -> LoggedDataset:
    return DigitBanditEnv(cfg).logged()


# ---------------------------------------------------------------------------
# IHDP scenario-B style generator
# ---------------------------------------------------------------------------


@dataclass
class IhdpBConfig:
    n: int = 747
    d: int = 25
    n_binary: int = 6
    missing_rate: float = 0.3
    tau_target: float = 4.0
    beta_support: tuple = (0.0, 0.1, 0.2, 0.3, 0.4)
    beta_probs: tuple = (0.6, 0.1, 0.1, 0.1, 0.1)
    offset: float = 0.5  # the constant added inside exp((X + offset) beta)
    propensity_scale: float = 0.4
    propensity_bias: float = -1.4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must be in [0, 1)")
        if not 0 <= self.n_binary <= self.d:
            raise ConfigError("n_binary outside 0..d")


class IhdpBEnv:
    def __init__(self, cfg: IhdpBConfig):
        self.cfg = cfg
        rng = _rng((cfg.seed, 0xB))
        n_cont = cfg.d - cfg.n_binary
        # random correlated covariance for the continuous block
        A = rng.standard_normal((n_cont, n_cont)) / np.sqrt(n_cont)
        self.cov = A @ A.T + np.eye(n_cont)
        self.chol = np.linalg.cholesky(self.cov)
        self.bern_p = rng.uniform(0.2, 0.8, size=cfg.n_binary)
        self.beta = rng.choice(cfg.beta_support, size=cfg.d, p=cfg.beta_probs)
        gamma = rng.standard_normal(cfg.d)
        self.gamma = cfg.propensity_scale * gamma / np.linalg.norm(gamma)
        cont_std = np.sqrt(np.diag(self.cov))
        stds = np.concatenate([cont_std, np.sqrt(self.bern_p * (1 - self.bern_p))])
        means = np.concatenate([np.zeros(n_cont), self.bern_p])
        self._std_mean = means
        self._std_scale = np.where(stds > 0, stds, 1.0)
        self.schema = FeatureSchema(
            tuple(Continuous(float(m), float(s)) for m, s in zip(means, self._std_scale))
        )
        self.n_actions = 2

    def sample_features(self, n: int, rng: np.random.Generator) -> np.ndarray:
        n_cont = self.cfg.d - self.cfg.n_binary
        Xc = rng.standard_normal((n, n_cont)) @ self.chol.T
        Xb = (rng.random((n, self.cfg.n_binary)) < self.bern_p).astype(float)
        return np.concatenate([Xc, Xb], axis=1)

    def standardized(self, X: np.ndarray) -> np.ndarray:
        return (X - self._std_mean) / self._std_scale

    def true_propensity(self, X: np.ndarray) -> np.ndarray:
        z = self.standardized(X) @ self.gamma + self.cfg.propensity_bias
        p1 = np.clip(1.0 / (1.0 + np.exp(-z)), 0.05, 0.95)
        return np.column_stack([1.0 - p1, p1])

    def logged(self) -> LoggedDataset:
        cfg = self.cfg
        rng = _rng(cfg.seed)
        X = self.sample_features(cfg.n, rng)
        Xs = self.standardized(X)
        mu0 = np.exp((Xs + cfg.offset) @ self.beta)
        r0 = mu0 + rng.standard_normal(cfg.n)
        r1_pre = Xs @ self.beta + rng.standard_normal(cfg.n)
        omega = float(np.mean(r1_pre - r0) - cfg.tau_target)
        r1 = r1_pre - omega
        mu1 = Xs @ self.beta - omega
        pi0 = self.true_propensity(X)
        actions = (rng.random(cfg.n) < pi0[:, 1]).astype(int)
        rewards = np.where(actions == 1, r1, r0)
        mask = missingness_mask(X, Mcar(cfg.missing_rate), rng)
        truth = GroundTruth(
            X.copy(),
            np.column_stack([mu0, mu1]),
            pi0,
            {"r_cf_0": r0, "r_cf_1": r1},
        )
        return LoggedDataset(self.schema, X, mask, actions, rewards, 2, truth=truth)


def gen_ihdp_b(cfg: IhdpBConfig) -> LoggedDataset:
    return IhdpBEnv(cfg).logged()


# ---------------------------------------------------------------------------
# Glucose bandit
# ---------------------------------------------------------------------------


def glucose_reward(cgm) -> np.ndarray | float:
    """Piecewise reward of a CGM reading: (x-80)/10 below 90, flat 1 in the
    90..130 band, (180-x)/50 above 130. Continuous at both boundaries."""
    x = np.asarray(cgm, dtype=np.float64)
    out = np.where(x <= 90.0, (x - 80.0) / 10.0, np.where(x < 130.0, 1.0, (180.0 - x) / 50.0))
    return float(out) if out.ndim == 0 else out


def expected_glucose_reward(mean_cgm, sigma: float) -> np.ndarray | float:
    """Exact E[glucose_reward(N(mean, sigma^2))] via truncated-Gaussian moments."""
    m = np.asarray(mean_cgm, dtype=np.float64)

    def seg(a, b, alpha, beta):
        # E[(alpha x + beta) 1[a < x <= b]]
        za = (a - m) / sigma
        zb = (b - m) / sigma
        mass = norm.cdf(zb) - norm.cdf(za)
        ex = m * mass - sigma * (norm.pdf(zb) - norm.pdf(za))
        return alpha * ex + beta * mass

    total = seg(-np.inf, 90.0, 0.1, -8.0)
    total += seg(90.0, 130.0, 0.0, 1.0)
    total += seg(130.0, np.inf, -0.02, 3.6)
    return float(total) if total.ndim == 0 else total


@dataclass
class GlucoseConfig:
    n: int = 5000
    d: int = 9
    n_actions: int = 10
    erase_rate: float = 0.3
    base_cgm: float = 140.0
    dose_linear: float = -120.0
    dose_quad: float = 60.0
    feature_scale: float = 15.0  # std of the linear feature effect on CGM
    cgm_noise: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.d != 9 or self.n_actions != 10:
            raise ConfigError("glucose bandit uses 9 attributes and 10 actions")
        if not 0.0 <= self.erase_rate < 1.0:
            raise ConfigError("erase_rate must be in [0, 1)")


class GlucoseEnv:
    def __init__(self, cfg: GlucoseConfig):
        self.cfg = cfg
        rng = _rng((cfg.seed, 0x6))
        A = rng.standard_normal((cfg.d, cfg.d)) / np.sqrt(cfg.d)
        self.cov = A @ A.T + np.eye(cfg.d)
        self.chol = np.linalg.cholesky(self.cov)
        w = rng.standard_normal(cfg.d)
        var = float(w @ self.cov @ w)
        self.w = cfg.feature_scale * w / np.sqrt(var)
        # multinomial-logistic action generator for the logging mixture
        self.theta = rng.standard_normal((cfg.d, cfg.n_actions)) * 0.8
        self.doses = np.arange(cfg.n_actions) / (cfg.n_actions - 1)
        std = np.sqrt(np.diag(self.cov))
        self.schema = FeatureSchema(tuple(Continuous(0.0, float(s)) for s in std))
        self.n_actions = cfg.n_actions

    def sample_features(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.cfg.d)) @ self.chol.T

    def mean_cgm(self, X: np.ndarray, actions: np.ndarray) -> np.ndarray:
        dose = self.doses[actions]
        return (
            self.cfg.base_cgm
            + X @ self.w
            + self.cfg.dose_linear * dose
            + self.cfg.dose_quad * dose**2
        )

    def expected_reward(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], self.n_actions))
        for a in range(self.n_actions):
            m = self.mean_cgm(X, np.full(X.shape[0], a))
            out[:, a] = expected_glucose_reward(m, self.cfg.cgm_noise)
        return out

    def draw_reward(self, X: np.ndarray, actions: np.ndarray, rng) -> np.ndarray:
        cgm = self.mean_cgm(X, actions) + self.cfg.cgm_noise * rng.standard_normal(X.shape[0])
        return glucose_reward(cgm)

    def true_propensity(self, X: np.ndarray) -> np.ndarray:
        logits = X @ self.theta
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        return 0.5 * p + 0.5 / self.n_actions

    def logged(self) -> LoggedDataset:
        cfg = self.cfg
        rng = _rng(cfg.seed)
        X = self.sample_features(cfg.n, rng)
        pi0 = self.true_propensity(X)
        actions = np.array([rng.choice(cfg.n_actions, p=row) for row in pi0])
        rewards = self.draw_reward(X, actions, rng)
        mask = missingness_mask(X, Mcar(cfg.erase_rate), rng)
        truth = GroundTruth(X.copy(), self.expected_reward(X), pi0, {})
        return LoggedDataset(self.schema, X, mask, actions, rewards, cfg.n_actions, truth=truth)


def gen_glucose_bandit(cfg: GlucoseConfig) -> LoggedDataset:
    return GlucoseEnv(cfg).logged()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class PolicyMetrics:
    avg_reward: float
    se: float  # standard error over test instances
    tail_fraction: float
    tail_count: int
    n_test: int
    rewards: np.ndarray = field(repr=False, default=None)
    actions: np.ndarray = field(repr=False, default=None)


def evaluate_policy(
    env,
    recommender,
    n_test: int,
    seed: int,
    tail_threshold: float | None = None,
    mechanism=None,
) -> PolicyMetrics:
    """Draw fresh test features, mask them, apply the recommender, and score
    realized rewards under the environment's true law.

    ``recommender`` maps a PartialFeature to an action index; the string
    ``"oracle"`` short-circuits to the environment's true best action (it
    sees the generator context, not the masked feature). The default masking
    mechanism is the environment's own MCAR rate.
    """
    rng = _rng((seed, 0xE))
    if isinstance(env, DigitBanditEnv):
        X, labels = env.sample_features(n_test, rng)
    else:
        X = env.sample_features(n_test, rng)
        labels = None
    if mechanism is None:
        mechanism = Mcar(env.cfg.erase_rate if hasattr(env.cfg, "erase_rate") else 0.3)
    mask = missingness_mask(X, mechanism, rng)
    actions = np.empty(n_test, dtype=int)
    if recommender == "oracle":
        table = env.expected_reward(labels) if labels is not None else env.expected_reward(X)
        actions[:] = np.argmax(table, axis=1)
    else:
        for i in range(n_test):
            actions[i] = int(recommender(PartialFeature(X[i], mask[i])))
    if labels is not None:
        rewards = env.draw_reward(labels, actions, rng)
    else:
        rewards = env.draw_reward(X, actions, rng)
    tail_count = 0
    tail_fraction = 0.0
    if tail_threshold is not None:
        tail_count = int(np.sum(rewards < tail_threshold))
        tail_fraction = tail_count / n_test
    return PolicyMetrics(
        avg_reward=float(rewards.mean()),
        se=float(rewards.std(ddof=1) / np.sqrt(n_test)) if n_test > 1 else 0.0,
        tail_fraction=tail_fraction,
        tail_count=tail_count,
        n_test=n_test,
        rewards=rewards,
        actions=actions,
    )


def estimate_ate(data: LoggedDataset, theta_fn) -> tuple[float, float]:
    """In-sample average treatment effect of a two-action dataset.

    ``theta_fn(row: PartialFeature, action) -> float`` is the configured
    estimator+strategy. Returns (tau_hat, delta) where delta compares against
    the realized counterfactual mean retained by the generator.
    """
    if data.n_actions != 2:
        raise ConfigError(f"ATE needs exactly 2 actions, dataset has {data.n_actions}")
    n = len(data)
    diffs = np.empty(n)
    for i in range(n):
        row = data.row(i)
        diffs[i] = theta_fn(row, 1) - theta_fn(row, 0)
    tau_hat = float(diffs.mean())
    if data.truth is None or "r_cf_0" not in data.truth.extras:
        raise DataError("estimate_ate needs retained counterfactuals")
    truth_tau = float(np.mean(data.truth.extras["r_cf_1"] - data.truth.extras["r_cf_0"]))
    return tau_hat, abs(tau_hat - truth_tau)
