"""Conditional partial VAE: the reward rides along as one more (possibly
missing) attribute, and both encoder and decoder condition on the action.

Structure relative to the plain partial VAE:
* the embedding table gains a reward pseudo-attribute row;
* a one-hot action vector is appended to the aggregated encoder state before
  the posterior net, and to the latent code before the decoder;
* the decoder grows a Gaussian reward head.

Training maximizes an inverse-propensity-weighted ELBO so rare
action-feature pairs are learned more carefully; each per-sample weight
1 / pi0_hat(a_i | x-tilde_i) is capped. At prediction time the reward slot is
always missing: the input is (x-tilde, a, *) and the de-standardized reward
head mean is the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Continuous, FeatureSchema, LoggedDataset, PartialFeature
from .errors import ConfigError, DomainError, ShapeError, TrainingError
from .nets import (
    AdamState,
    adam_step,
    glorot_init,
    log_softmax,
    net_from_dict,
    net_to_dict,
    sigma_from_raw,
)
from .propensity import PropensityModel, estimate_propensity_matrix
from .pvae import (
    VaeCore,
    build_heads,
    core_decode,
    core_encode,
    core_loss_and_grads,
    head_targets,
    head_width,
    normalize_values,
    PvaeModel,
    _categorical_rows,
)

POINT = "point"
MC = "mc"


@dataclass
class CpvaeConfig:
    embed_dim: int = 10
    agg_dim: int = 20
    latent_dim: int = 10
    h_hidden: tuple = ()
    f_hidden: tuple = (20, 20, 20)
    dec_hidden: tuple = (20, 20)
    epochs: int = 25
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    reward_dropout: float = 0.25  # P(reward hidden from the encoder input)
    weight_cap: float = 100.0

    def validate(self):
        if min(self.embed_dim, self.agg_dim, self.latent_dim) < 1:
            raise ConfigError("embed_dim, agg_dim and latent_dim must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs >= 0 and batch_size >= 1 required")
        if not 0.0 <= self.reward_dropout < 1.0:
            raise ConfigError("reward_dropout must be in [0, 1)")
        if self.weight_cap <= 1.0:
            raise ConfigError("weight_cap must exceed 1")


@dataclass
class CpvaeModel:
    schema: FeatureSchema  # feature attributes only; reward rides separately
    n_actions: int
    reward_mean: float
    reward_std: float
    core: VaeCore  # embeddings (d+1, d_e); reward head appended last
    loss_trace: list[float] = field(default_factory=list)

    @property
    def latent_dim(self) -> int:
        return self.core.latent_dim

    def to_dict(self) -> dict:
        return {
            "kind": "cpvae",
            "schema": self.schema.to_dict(),
            "n_actions": self.n_actions,
            "reward_mean": self.reward_mean,
            "reward_std": self.reward_std,
            "embeddings": self.core.embeddings.tolist(),
            "h_net": net_to_dict(self.core.h_net),
            "f_net": net_to_dict(self.core.f_net),
            "decoder": net_to_dict(self.core.decoder),
            "latent_dim": self.core.latent_dim,
            "loss_trace": self.loss_trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CpvaeModel":
        if d.get("kind") != "cpvae":
            raise ConfigError(f"model file kind {d.get('kind')!r} is not 'cpvae'")
        schema = FeatureSchema.from_dict(d["schema"])
        reward_std = float(d["reward_std"])
        core = VaeCore(
            embeddings=np.asarray(d["embeddings"], dtype=np.float64),
            h_net=net_from_dict(d["h_net"]),
            f_net=net_from_dict(d["f_net"]),
            decoder=net_from_dict(d["decoder"]),
            heads=build_heads(schema, reward_std=reward_std),
            latent_dim=int(d["latent_dim"]),
        )
        return cls(
            schema, int(d["n_actions"]), float(d["reward_mean"]), reward_std, core,
            list(d.get("loss_trace", [])),
        )


def init_cpvae(
    schema: FeatureSchema,
    n_actions: int,
    reward_mean: float,
    reward_std: float,
    config: CpvaeConfig,
    rng: np.random.Generator,
) -> CpvaeModel:
    d = len(schema)
    heads = build_heads(schema, reward_std=reward_std)
    bound = np.sqrt(6.0 / (1 + config.embed_dim))
    emb = rng.uniform(-bound, bound, size=(d + 1, config.embed_dim))
    h_net = glorot_init([config.embed_dim, *config.h_hidden, config.agg_dim], rng)
    f_net = glorot_init(
        [config.agg_dim + n_actions, *config.f_hidden, 2 * config.latent_dim], rng
    )
    decoder = glorot_init(
        [config.latent_dim + n_actions, *config.dec_hidden, head_width(heads)], rng
    )
    core = VaeCore(emb, h_net, f_net, decoder, heads, config.latent_dim)
    return CpvaeModel(schema, n_actions, reward_mean, reward_std, core)


def _onehot(actions: np.ndarray, n_actions: int) -> np.ndarray:
    return np.eye(n_actions)[np.asarray(actions, dtype=int)]


def training_weights(
    data: LoggedDataset, propensity, pvae: PvaeModel | None, weight_cap: float
) -> np.ndarray:
    """Per-sample capped inverse propensity at the logged action; None
    disables reweighting (unit weights)."""
    if propensity is None:
        return np.ones(len(data))
    if isinstance(propensity, PropensityModel):
        if pvae is None:
            raise ConfigError("PropensityModel weighting needs the pvae for imputation")
        matrix = estimate_propensity_matrix(propensity, pvae, data.features, data.mask)
        pi = matrix[np.arange(len(data)), data.actions]
    else:
        arr = np.asarray(propensity, dtype=np.float64)
        pi = arr[np.arange(len(data)), data.actions] if arr.ndim == 2 else arr
        if pi.shape != (len(data),):
            raise ConfigError("propensity weights have wrong shape")
    return np.minimum(1.0 / pi, weight_cap)


def cpvae_loss_and_grads(model: CpvaeModel, V, OBS, T, REC, onehot, eps, weights):
    """Weighted negative ELBO and exact gradients, conditioning on actions."""
    return core_loss_and_grads(
        model.core, V, OBS, T, REC, eps, weights=weights,
        enc_extra=onehot, dec_extra=onehot,
    )


def train_cpvae(
    data: LoggedDataset,
    propensity,
    config: CpvaeConfig | None = None,
    pvae: PvaeModel | None = None,
) -> CpvaeModel:
    """Fit by Adam on the capped-IPS weighted ELBO; deterministic per seed.

    ``propensity`` may be a fitted PropensityModel (with ``pvae`` for its
    imputations), a per-sample probability array, or None to disable the
    reweighting.
    """
    config = config or CpvaeConfig()
    config.validate()
    if len(data) < 1:
        raise ConfigError("need at least one training row")
    r_mean = float(data.rewards.mean())
    r_std = float(data.rewards.std())
    if r_std <= 0.0:
        r_std = 1.0
    w = training_weights(data, propensity, pvae, config.weight_cap)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    model = init_cpvae(data.schema, data.n_actions, r_mean, r_std, config, rng)

    n, d = data.features.shape
    r_standardized = (data.rewards - r_mean) / r_std
    V = np.concatenate(
        [normalize_values(data.schema, data.features), r_standardized[:, None]], axis=1
    )
    V[:, :d][data.mask] = 0.0
    T = np.concatenate(
        [head_targets(data.schema, data.features), r_standardized[:, None]], axis=1
    )
    feat_obs = ~data.mask
    REC = np.concatenate([feat_obs, np.ones((n, 1), dtype=bool)], axis=1)
    onehot = _onehot(data.actions, data.n_actions)

    params = model.core.parameters()
    adam = AdamState.for_params(params, lr=config.lr)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            b = idx.size
            keep_reward = rng.random(b) >= config.reward_dropout
            OBS = np.concatenate([feat_obs[idx], keep_reward[:, None]], axis=1)
            eps = rng.standard_normal((b, config.latent_dim))
            loss, grads = cpvae_loss_and_grads(
                model, V[idx], OBS, T[idx], REC[idx], onehot[idx], eps, w[idx]
            )
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch offset {lo} "
                    f"(rows {idx[:4].tolist()}...)"
                )
            adam_step(params, grads, adam)
            epoch_loss += loss * b
        model.loss_trace.append(epoch_loss / n)
    return model


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def _encode_with_action(model: CpvaeModel, X, M, actions):
    """Posterior with the reward slot missing; X (B, d), actions (B,)."""
    B, d = X.shape
    V = np.concatenate(
        [normalize_values(model.schema, X), np.zeros((B, 1))], axis=1
    )
    V[:, :d][M] = 0.0
    OBS = np.concatenate([~M, np.zeros((B, 1), dtype=bool)], axis=1)
    onehot = _onehot(actions, model.n_actions)
    mu, logvar, _ = core_encode(model.core, V, OBS, enc_extra=onehot)
    return mu, logvar, onehot


@dataclass
class RewardPrediction:
    value: float
    sigma: float  # reward-head std, a variance diagnostic


def predict_reward_batch(
    model: CpvaeModel,
    X: np.ndarray,
    M: np.ndarray,
    actions: np.ndarray,
    mode: str = POINT,
    n_z: int = 1,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized reward prediction; returns (values, sigmas), both (B,)."""
    if mode not in (POINT, MC):
        raise ConfigError(f"unknown predict mode {mode!r}")
    if mode == MC and (n_z < 1 or rng is None):
        raise ConfigError("mc mode needs n_z >= 1 and an rng")
    mu, logvar, onehot = _encode_with_action(model, X, M, actions)
    head = model.core.heads[-1]
    if mode == POINT:
        Z = mu[:, None, :]
        draws = 1
    else:
        std = np.exp(0.5 * logvar)
        Z = mu[:, None, :] + std[:, None, :] * rng.standard_normal(
            (mu.shape[0], n_z, model.latent_dim)
        )
        draws = n_z
    B = X.shape[0]
    flat = Z.reshape(B * draws, -1)
    oh = np.repeat(onehot, draws, axis=0)
    raw, _ = core_decode(model.core, flat, dec_extra=oh)
    raw = raw.reshape(B, draws, -1)
    mu_r = raw[:, :, head.start].mean(axis=1)
    sig_r = sigma_from_raw(raw[:, :, head.start + 1]).mean(axis=1)
    return mu_r * model.reward_std + model.reward_mean, sig_r * model.reward_std


def predict_reward(
    model: CpvaeModel,
    xt: PartialFeature,
    a: int,
    mode: str = POINT,
    n_z: int = 1,
    rng: np.random.Generator | None = None,
) -> RewardPrediction:
    """Expected reward of action ``a`` for a partially observed feature."""
    if not 0 <= a < model.n_actions:
        raise DomainError(f"action {a} outside 0..{model.n_actions - 1}")
    xt.validate(model.schema)
    values, sigmas = predict_reward_batch(
        model, xt.values[None, :], xt.mask[None, :], np.array([a]), mode, n_z, rng
    )
    return RewardPrediction(float(values[0]), float(sigmas[0]))


def cpvae_sample_posterior_features(
    model: CpvaeModel, xt: PartialFeature, a: int, t: int, rng: np.random.Generator
) -> np.ndarray:
    """t generative completions conditioned on (x-tilde, a, reward missing);
    observed attributes preserved. Returns (t, d)."""
    if t < 1:
        raise DomainError("t must be >= 1")
    xt.validate(model.schema)
    mu, logvar, onehot = _encode_with_action(
        model, xt.values[None, :], xt.mask[None, :], np.array([a])
    )
    std = np.exp(0.5 * logvar)
    Z = mu + std * rng.standard_normal((t, model.latent_dim))
    raw, _ = core_decode(model.core, Z, dec_extra=np.repeat(onehot, t, axis=0))
    out = np.tile(xt.values, (t, 1))
    for j, attr in enumerate(model.schema.attributes):
        if not xt.mask[j]:
            continue
        head = model.core.heads[j]
        if isinstance(attr, Continuous):
            m = raw[:, head.start]
            s = sigma_from_raw(raw[:, head.start + 1])
            out[:, j] = (m + s * rng.standard_normal(t)) * attr.std + attr.mean
        else:
            probs = np.exp(log_softmax(-raw[:, head.start : head.stop]))
            out[:, j] = _categorical_rows(probs, rng).astype(float)
    return out
