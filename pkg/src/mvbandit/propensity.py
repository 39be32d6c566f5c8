"""Logging-policy estimation: multiple imputation + multinomial logistic
regression, averaged over the imputations at query time.

Each of the m imputation rounds completes the dataset with one generative
draw from the partial VAE and fits its own softmax regression on the
normalized completed features (plus bias). Query-time scoring completes the
feature in deterministic Mean mode, averages the m probability vectors,
clips every entry to the floor and renormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureSchema, LoggedDataset, PartialFeature
from .errors import ConfigError, DataError, TrainingError
from .nets import AdamState, adam_step, log_softmax
from .pvae import PvaeModel, impute, impute_mean_batch, normalize_values, sample_posterior_batch, MEAN


@dataclass
class PropensityConfig:
    m: int = 5
    lr: float = 0.05
    epochs: int = 300  # full-batch gradient steps per imputation
    l2: float = 1e-4  # weight decay (bias excluded)
    clip: float = 0.01
    seed: int = 0

    def validate(self, n_actions: int):
        if self.m < 1:
            raise ConfigError("imputation count m must be >= 1")
        if not 0.0 < self.clip < 1.0 / n_actions:
            raise ConfigError(f"clip must be in (0, 1/{n_actions})")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass
class PropensityModel:
    schema: FeatureSchema
    n_actions: int
    weights: list[np.ndarray]  # one (|A|, d+1) matrix per imputation
    clip: float

    @property
    def m(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "kind": "propensity",
            "schema": self.schema.to_dict(),
            "n_actions": self.n_actions,
            "weights": [w.tolist() for w in self.weights],
            "clip": self.clip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PropensityModel":
        if d.get("kind") != "propensity":
            raise ConfigError(f"model file kind {d.get('kind')!r} is not 'propensity'")
        return cls(
            FeatureSchema.from_dict(d["schema"]),
            int(d["n_actions"]),
            [np.asarray(w, dtype=np.float64) for w in d["weights"]],
            float(d["clip"]),
        )


def _design(schema: FeatureSchema, X: np.ndarray) -> np.ndarray:
    phi = normalize_values(schema, X)
    return np.concatenate([phi, np.ones((X.shape[0], 1))], axis=1)


def _fit_softmax_regression(
    phi: np.ndarray, actions: np.ndarray, n_actions: int, config: PropensityConfig, seed
) -> np.ndarray:
    n, p = phi.shape
    rng = np.random.Generator(np.random.PCG64(seed))
    W = 0.01 * rng.standard_normal((n_actions, p))
    onehot = np.zeros((n, n_actions))
    onehot[np.arange(n), actions] = 1.0
    state = AdamState.for_params([W], lr=config.lr)
    for step in range(config.epochs):
        probs = np.exp(log_softmax(phi @ W.T))
        grad = (probs - onehot).T @ phi / n
        grad[:, :-1] += config.l2 * W[:, :-1]
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite propensity gradient at step {step}")
        adam_step([W], [grad], state)
    return W


def fit_propensity(
    data: LoggedDataset,
    pvae: PvaeModel,
    m: int | None = None,
    config: PropensityConfig | None = None,
) -> PropensityModel:
    """m completed datasets (one generative draw each) -> m softmax fits.

    Raises if any action never appears: the common-support assumption cannot
    be checked, and the regression would degenerate.
    """
    config = config or PropensityConfig()
    if m is not None:
        config = PropensityConfig(
            m=m, lr=config.lr, epochs=config.epochs, l2=config.l2, clip=config.clip,
            seed=config.seed,
        )
    config.validate(data.n_actions)
    counts = np.bincount(data.actions, minlength=data.n_actions)
    for a in range(data.n_actions):
        if counts[a] == 0:
            raise DataError(f"action {a} never appears in the log; cannot fit propensity")
    rng = np.random.Generator(np.random.PCG64((config.seed, 0xF17)))
    weights = []
    for k in range(config.m):
        if data.mask.any():
            completed = sample_posterior_batch(pvae, data.features, data.mask, rng)
        else:
            completed = data.features
        phi = _design(data.schema, completed)
        weights.append(
            _fit_softmax_regression(phi, data.actions, data.n_actions, config, (config.seed, k))
        )
    return PropensityModel(data.schema, data.n_actions, weights, config.clip)


def _average_and_clip(prob_stack: np.ndarray, clip: float) -> np.ndarray:
    avg = prob_stack.mean(axis=0)
    avg = np.maximum(avg, clip)
    return avg / avg.sum(axis=-1, keepdims=True)


def estimate_propensity(
    model: PropensityModel,
    pvae: PvaeModel,
    xt: PartialFeature,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Averaged, clipped, renormalized probability vector over actions.

    Query-time completion uses deterministic Mean mode, so the result does
    not depend on ``rng``; the argument is kept for interface symmetry.
    """
    completed = impute(pvae, xt, MEAN) if xt.mask.any() else xt.values
    phi = _design(model.schema, completed[None, :])
    probs = np.stack([np.exp(log_softmax(phi @ W.T))[0] for W in model.weights])
    return _average_and_clip(probs, model.clip)


def estimate_propensity_matrix(
    model: PropensityModel, pvae: PvaeModel, X: np.ndarray, M: np.ndarray
) -> np.ndarray:
    """Vectorized estimate_propensity over dataset rows; returns (n, |A|)."""
    completed = impute_mean_batch(pvae, X, M) if M.any() else X
    phi = _design(model.schema, completed)
    probs = np.stack([np.exp(log_softmax(phi @ W.T)) for W in model.weights])
    return _average_and_clip(probs, model.clip)
