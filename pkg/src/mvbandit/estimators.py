"""Similarity-weighted counterfactual reward estimation from logged data.

For a query feature x, every logged instance i contributes with weight
w_i = p(x | x-tilde_i) / sum_j p(x | x-tilde_j); the reward estimate is the
weighted sum of 1[A_i = a] R_i / pi0_hat(a | x-tilde_i), with the inverse
propensity factor capped. A matched variant renormalizes the weights inside
{i : A_i = a} and drops the propensity correction.

All weight arithmetic happens in log space with max subtraction; raw density
products underflow already at a few dozen attributes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import LoggedDataset
from .errors import ConfigError, EstimationError
from .propensity import PropensityModel, estimate_propensity_matrix
from .pvae import PvaeModel, posterior_head_params, profile_log_density_batch


@dataclass
class SpvaeOptions:
    subsample: int | None = None  # use M < n randomly chosen samples
    density_draws: int = 1  # latent draws per instance for the similarity
    weight_cap: float = 100.0  # cap on each 1/propensity factor
    seed: int = 0

    def validate(self, n: int):
        if self.subsample is not None and not 1 <= self.subsample <= n:
            raise ConfigError(f"subsample must be in 1..{n}")
        if self.weight_cap <= 1.0:
            raise ConfigError("weight_cap must exceed 1")
        if self.density_draws < 1:
            raise ConfigError("density_draws must be >= 1")


@dataclass
class ThetaEstimate:
    value: float
    ess: float  # effective sample size 1 / sum w_i^2
    no_support: bool = False


def pvae_density_factory(pvae: PvaeModel, L: int = 1, seed: int = 0):
    """Default similarity backend: posterior head parameters of each row."""

    def factory(X, M):
        rng = np.random.Generator(np.random.PCG64((seed, 0xD))) if L > 1 else None
        params = posterior_head_params(pvae, X, M, L=L, rng=rng)

        def profile(Xq: np.ndarray) -> np.ndarray:
            return profile_log_density_batch(params, Xq)

        return profile

    return factory


def exact_match_density_factory():
    """Idealized similarity for discrete sanity checks: log p = 0 when the
    query agrees with every observed attribute of the row, else -inf."""

    def factory(X, M):
        def profile(Xq: np.ndarray) -> np.ndarray:
            agree = (X[None, :, :] == Xq[:, None, :]) | M[None, :, :]
            return np.where(agree.all(axis=2), 0.0, -np.inf)

        return profile

    return factory


class SpvaeEstimator:
    """Precomputes per-row similarity state and IPS contributions once; each
    query is then a cheap weighted sum. Read-only after construction."""

    def __init__(
        self,
        data: LoggedDataset,
        propensity,
        pvae: PvaeModel | None = None,
        options: SpvaeOptions | None = None,
        density_factory=None,
    ):
        self.options = options or SpvaeOptions()
        self.options.validate(len(data))
        self.data = data
        self.pvae = pvae
        n = len(data)
        if self.options.subsample is not None and self.options.subsample < n:
            rng = np.random.Generator(np.random.PCG64((self.options.seed, 0x5B)))
            self.indices = np.sort(
                rng.choice(n, size=self.options.subsample, replace=False)
            )
        else:
            self.indices = np.arange(n)
        self.actions = data.actions[self.indices]
        self.rewards = data.rewards[self.indices]
        self.n_actions = data.n_actions

        pi_logged = self._propensity_at_logged(data, propensity, pvae)[self.indices]
        self.ips = np.minimum(1.0 / pi_logged, self.options.weight_cap)

        if density_factory is None:
            if pvae is None:
                raise ConfigError("need a pvae (or an explicit density_factory)")
            density_factory = pvae_density_factory(
                pvae, L=self.options.density_draws, seed=self.options.seed
            )
        self.density_factory = density_factory
        self._profile = density_factory(
            data.features[self.indices], data.mask[self.indices]
        )
        self.action_support = np.bincount(self.actions, minlength=self.n_actions) > 0

    @staticmethod
    def _propensity_at_logged(data: LoggedDataset, propensity, pvae) -> np.ndarray:
        if isinstance(propensity, PropensityModel):
            if pvae is None:
                raise ConfigError("a PropensityModel backend needs the pvae for imputation")
            matrix = estimate_propensity_matrix(propensity, pvae, data.features, data.mask)
        else:
            matrix = np.asarray(propensity, dtype=np.float64)
        if matrix.ndim == 1:
            if matrix.shape[0] != len(data):
                raise ConfigError("per-row propensity vector has wrong length")
            return matrix
        if matrix.shape != (len(data), data.n_actions):
            raise ConfigError(f"propensity matrix shape {matrix.shape} mismatched")
        return matrix[np.arange(len(data)), data.actions]

    # -- weights ----------------------------------------------------------

    def log_similarity(self, Xq: np.ndarray) -> np.ndarray:
        """(B, n_sub) log densities of each query against the sampled rows."""
        Xq = np.asarray(Xq, dtype=np.float64)
        if Xq.ndim == 1:
            Xq = Xq[None, :]
        return self._profile(Xq)

    def weights(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalized similarity weights (B, n_sub) and their log normalizer.

        Max-subtraction before exponentiation: adding a constant to every log
        density (scaling all densities) leaves the weights unchanged.
        """
        lw = self.log_similarity(Xq)
        m = lw.max(axis=1)
        if np.any(np.isneginf(m)):
            raise EstimationError(
                "similarity normalizer underflowed to zero for a query; "
                "no stored instance carries any density mass"
            )
        e = np.exp(lw - m[:, None])
        total = e.sum(axis=1)
        return e / total[:, None], m + np.log(total)

    # -- estimators -------------------------------------------------------

    def theta_all(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """IPS estimates for every action at once: (values (B, |A|), ess (B,))."""
        w, _ = self.weights(Xq)
        contrib = self.rewards * self.ips
        values = np.zeros((w.shape[0], self.n_actions))
        for a in range(self.n_actions):
            sel = self.actions == a
            if sel.any():
                values[:, a] = w[:, sel] @ contrib[sel]
        ess = 1.0 / np.maximum((w**2).sum(axis=1), 1e-300)
        return values, ess

    def theta(self, x: np.ndarray, a: int) -> ThetaEstimate:
        """Reward estimate for one (feature, action) pair."""
        if not 0 <= a < self.n_actions:
            raise ConfigError(f"action {a} outside 0..{self.n_actions - 1}")
        values, ess = self.theta_all(np.asarray(x)[None, :])
        if not self.action_support[a]:
            return ThetaEstimate(0.0, float(ess[0]), no_support=True)
        return ThetaEstimate(float(values[0, a]), float(ess[0]))

    def theta_matched_all(self, Xq: np.ndarray) -> np.ndarray:
        """Matched estimates (weights renormalized within each action's set)."""
        lw = self.log_similarity(Xq)
        values = np.full((lw.shape[0], self.n_actions), np.nan)
        for a in range(self.n_actions):
            sel = self.actions == a
            if not sel.any():
                continue
            lw_a = lw[:, sel]
            m = lw_a.max(axis=1)
            if np.any(np.isneginf(m)):
                raise EstimationError(
                    f"matched weights for action {a} underflowed to zero"
                )
            e = np.exp(lw_a - m[:, None])
            values[:, a] = (e / e.sum(axis=1, keepdims=True)) @ self.rewards[sel]
        return values

    def theta_matched(self, x: np.ndarray, a: int) -> ThetaEstimate:
        if not 0 <= a < self.n_actions:
            raise ConfigError(f"action {a} outside 0..{self.n_actions - 1}")
        if not self.action_support[a]:
            raise EstimationError(f"no support: action {a} absent from the sample")
        values = self.theta_matched_all(np.asarray(x)[None, :])
        lw = self.log_similarity(np.asarray(x)[None, :])
        sel = self.actions == a
        w = np.exp(lw[0, sel] - logsumexp(lw[0, sel]))
        return ThetaEstimate(float(values[0, a]), float(1.0 / np.sum(w**2)))


def ips_weight_identity_check(
    est: SpvaeEstimator, a: int, n_trials: int, regenerate
) -> float:
    """Empirical mean of sum_i w_i 1[A_i = a] / pi0(a | x-tilde_i) over fresh
    datasets; should be 1 when pi0 is the true logging policy.

    ``regenerate(k)`` returns the k-th independently drawn LoggedDataset with
    its ground-truth block (true propensities). The estimator supplies the
    similarity backend; weights are rebuilt per trial.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    total = 0.0
    for k in range(n_trials):
        d = regenerate(k)
        if d.truth is None:
            raise ConfigError("identity check needs true propensities")
        profile = est.density_factory(d.features, d.mask)
        x = d.truth.features[0]  # any measurable query works; use a real one
        lw = profile(x[None, :])[0]
        norm = logsumexp(lw)
        if np.isneginf(norm):
            raise EstimationError("similarity normalizer underflowed in a trial")
        w = np.exp(lw - norm)
        sel = d.actions == a
        total += float(np.sum(w[sel] / d.truth.propensities[sel, a]))
    return total / n_trials
