"""Partial VAE for features with missing attributes.

Encoder: each observed attribute value (normalized to a scalar) is multiplied
elementwise with a learned per-attribute embedding, pushed through a shared
net ``h``, summed over the observed set (a permutation-invariant aggregate),
and mapped by ``f`` to a diagonal Gaussian over the latent code.

Decoder: a dense net maps the latent code to per-attribute heads. Continuous
attributes get a Gaussian (mean, softplus std + floor); categorical
attributes get a probability vector through a negated-logit softmax,
p(x=j) = exp(-s_j) / sum_t exp(-s_t).

Continuous attributes are standardized with the schema statistics before they
enter the encoder and de-standardized on the way out; densities are reported
in raw feature units (the 1/std Jacobian is included).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .data import Categorical, Continuous, FeatureSchema, LoggedDataset, PartialFeature
from .errors import ConfigError, DomainError, ShapeError, TrainingError
from .nets import (
    DenseNet,
    RELU,
    SIGMA_FLOOR,
    backward,
    forward,
    gaussian_log_pdf,
    glorot_init,
    kl_to_standard_normal,
    log_softmax,
    net_from_dict,
    net_to_dict,
    sigma_from_raw,
    softplus,
    AdamState,
    adam_step,
)

MEAN = "mean"
SAMPLE = "sample"


# ---------------------------------------------------------------------------
# Head layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Head:
    kind: str  # "cont" | "cat"
    start: int
    stop: int
    log_jacobian: float  # -log(std) for continuous raw-space densities, else 0


def build_heads(schema: FeatureSchema, reward_std: float | None = None) -> list[Head]:
    """Per-attribute decoder head layout; optional trailing Gaussian reward head."""
    heads = []
    offset = 0
    for attr in schema.attributes:
        if isinstance(attr, Continuous):
            heads.append(Head("cont", offset, offset + 2, -float(np.log(attr.std))))
            offset += 2
        else:
            heads.append(Head("cat", offset, offset + attr.cardinality, 0.0))
            offset += attr.cardinality
    if reward_std is not None:
        heads.append(Head("cont", offset, offset + 2, -float(np.log(reward_std))))
    return heads


def head_width(heads: list[Head]) -> int:
    return heads[-1].stop


# ---------------------------------------------------------------------------
# Shared encoder/decoder core (also used by the conditional variant)
# ---------------------------------------------------------------------------


@dataclass
class VaeCore:
    embeddings: np.ndarray  # (p, d_e), one row per pseudo-attribute
    h_net: DenseNet  # d_e -> K, ReLU output
    f_net: DenseNet  # K (+ extras) -> 2 * latent_dim
    decoder: DenseNet  # latent_dim (+ extras) -> head width
    heads: list[Head]
    latent_dim: int

    def parameters(self) -> list[np.ndarray]:
        return (
            [self.embeddings]
            + self.h_net.parameters()
            + self.f_net.parameters()
            + self.decoder.parameters()
        )


def core_encode(core: VaeCore, V: np.ndarray, OBS: np.ndarray, enc_extra=None):
    """Aggregate observed attributes and produce the posterior Gaussian.

    V is (B, p) normalized values, OBS the observed mask; enc_extra (B, e) is
    appended to the aggregate before ``f``. Returns (mu, logvar, cache).
    """
    B = V.shape[0]
    K = core.h_net.out_dim
    rows_b, rows_j = np.nonzero(OBS)
    v = V[rows_b, rows_j]
    S = v[:, None] * core.embeddings[rows_j]
    H_pre, h_cache = forward(core.h_net, S)
    H = np.maximum(H_pre, 0.0)  # h output is ReLU
    G = np.zeros((B, K))
    np.add.at(G, rows_b, H)
    f_in = G if enc_extra is None else np.concatenate([G, enc_extra], axis=1)
    f_out, f_cache = forward(core.f_net, f_in)
    dz = core.latent_dim
    mu, logvar = f_out[:, :dz], f_out[:, dz:]
    cache = (rows_b, rows_j, v, h_cache, H_pre, f_cache, B, K)
    return mu, logvar, cache


def core_decode(core: VaeCore, Z: np.ndarray, dec_extra=None):
    d_in = Z if dec_extra is None else np.concatenate([Z, dec_extra], axis=1)
    raw, dec_cache = forward(core.decoder, d_in)
    return raw, dec_cache


def heads_log_prob(heads: list[Head], raw: np.ndarray, T: np.ndarray, REC: np.ndarray):
    """Per-sample sum of head log densities over REC-flagged targets.

    Also returns the gradient of that sum w.r.t. the raw decoder output.
    """
    B = raw.shape[0]
    logp = np.zeros(B)
    draw = np.zeros_like(raw)
    for j, head in enumerate(heads):
        rec = REC[:, j]
        if not rec.any():
            continue
        if head.kind == "cont":
            mu = raw[:, head.start]
            s_raw = raw[:, head.start + 1]
            sigma = sigma_from_raw(s_raw)
            t = T[:, j]
            term = gaussian_log_pdf(t, mu, sigma) + head.log_jacobian
            logp += np.where(rec, term, 0.0)
            diff = t - mu
            dmu = diff / (sigma * sigma)
            dsig = (diff * diff - sigma * sigma) / sigma**3
            ds_raw = dsig * expit(s_raw)
            draw[:, head.start] += np.where(rec, dmu, 0.0)
            draw[:, head.start + 1] += np.where(rec, ds_raw, 0.0)
        else:
            logits = -raw[:, head.start : head.stop]
            lsm = log_softmax(logits)
            probs = np.exp(lsm)
            idx = T[:, j].astype(int)
            term = lsm[np.arange(B), idx]
            logp += np.where(rec, term, 0.0)
            onehot = np.zeros_like(probs)
            onehot[np.arange(B), idx] = 1.0
            draw[:, head.start : head.stop] += (probs - onehot) * rec[:, None]
    return logp, draw


def core_loss_and_grads(
    core: VaeCore,
    V: np.ndarray,
    OBS: np.ndarray,
    T: np.ndarray,
    REC: np.ndarray,
    eps: np.ndarray,
    weights: np.ndarray | None = None,
    enc_extra=None,
    dec_extra=None,
):
    """Mean weighted negative ELBO over the batch, plus exact gradients.

    The per-sample ELBO is sum of reconstructed head log densities minus
    KL(q(Z|input) || N(0, I)); ``eps`` is the reparameterization noise.
    Returns (loss, grads aligned with core.parameters()).
    """
    B = V.shape[0]
    w = np.ones(B) if weights is None else np.asarray(weights, dtype=np.float64)
    mu, logvar, enc_cache = core_encode(core, V, OBS, enc_extra)
    rows_b, rows_j, v, h_cache, H_pre, f_cache, _, K = enc_cache
    std = np.exp(0.5 * logvar)
    Z = mu + std * eps
    raw, dec_cache = core_decode(core, Z, dec_extra)
    recon, draw_grad = heads_log_prob(core.heads, raw, T, REC)
    kl = kl_to_standard_normal(mu, logvar)
    elbo = recon - kl
    loss = float(-(w * elbo).mean())

    # Backward. scale_i = d loss / d elbo_i.
    scale = -w / B
    dec_grads, d_dec_in = backward(core.decoder, dec_cache, draw_grad * scale[:, None])
    dZ = d_dec_in[:, : core.latent_dim]
    dmu = dZ + scale[:, None] * (-mu)  # KL term: d(-kl)/dmu = -mu
    dlogvar = dZ * (0.5 * std * eps) + scale[:, None] * (-0.5 * (np.exp(logvar) - 1.0))
    f_grads, d_f_in = backward(core.f_net, f_cache, np.concatenate([dmu, dlogvar], axis=1))
    dG = d_f_in[:, :K]
    dH = dG[rows_b] * (H_pre > 0.0)
    h_grads, dS = backward(core.h_net, h_cache, dH)
    dE = np.zeros_like(core.embeddings)
    np.add.at(dE, rows_j, v[:, None] * dS)
    return loss, [dE] + h_grads + f_grads + dec_grads


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class PosteriorGaussian:
    mu: np.ndarray
    logvar: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.exp(0.5 * self.logvar)


@dataclass
class PvaeModel:
    schema: FeatureSchema
    core: VaeCore
    loss_trace: list[float] = field(default_factory=list)

    @property
    def latent_dim(self) -> int:
        return self.core.latent_dim

    def to_dict(self) -> dict:
        return {
            "kind": "pvae",
            "schema": self.schema.to_dict(),
            "embeddings": self.core.embeddings.tolist(),
            "h_net": net_to_dict(self.core.h_net),
            "f_net": net_to_dict(self.core.f_net),
            "decoder": net_to_dict(self.core.decoder),
            "latent_dim": self.core.latent_dim,
            "loss_trace": self.loss_trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PvaeModel":
        if d.get("kind") != "pvae":
            raise ConfigError(f"model file kind {d.get('kind')!r} is not 'pvae'")
        schema = FeatureSchema.from_dict(d["schema"])
        core = VaeCore(
            embeddings=np.asarray(d["embeddings"], dtype=np.float64),
            h_net=net_from_dict(d["h_net"]),
            f_net=net_from_dict(d["f_net"]),
            decoder=net_from_dict(d["decoder"]),
            heads=build_heads(schema),
            latent_dim=int(d["latent_dim"]),
        )
        return cls(schema, core, list(d.get("loss_trace", [])))


@dataclass
class PvaeConfig:
    embed_dim: int = 10
    agg_dim: int = 20  # output width of the shared net h
    latent_dim: int = 10
    h_hidden: tuple = ()
    f_hidden: tuple = (20, 20, 20)
    dec_hidden: tuple = (20, 20)
    epochs: int = 25
    batch_size: int = 8
    lr: float = 1e-3
    n_mc: int = 1
    seed: int = 0

    def validate(self):
        if min(self.embed_dim, self.agg_dim, self.latent_dim) < 1:
            raise ConfigError("embed_dim, agg_dim and latent_dim must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.n_mc < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1, n_mc >= 1 required")


def init_pvae(schema: FeatureSchema, config: PvaeConfig, rng: np.random.Generator) -> PvaeModel:
    d = len(schema)
    heads = build_heads(schema)
    bound = np.sqrt(6.0 / (1 + config.embed_dim))
    emb = rng.uniform(-bound, bound, size=(d, config.embed_dim))
    h_net = glorot_init([config.embed_dim, *config.h_hidden, config.agg_dim], rng)
    f_net = glorot_init([config.agg_dim, *config.f_hidden, 2 * config.latent_dim], rng)
    decoder = glorot_init([config.latent_dim, *config.dec_hidden, head_width(heads)], rng)
    core = VaeCore(emb, h_net, f_net, decoder, heads, config.latent_dim)
    return PvaeModel(schema, core)


# ---------------------------------------------------------------------------
# Normalization helpers
# ---------------------------------------------------------------------------


def normalize_values(schema: FeatureSchema, X: np.ndarray) -> np.ndarray:
    """Encoder-side scalar per attribute: standardized continuous values,
    (index+1)/cardinality for categoricals."""
    V = np.array(X, dtype=np.float64)
    for j, attr in enumerate(schema.attributes):
        if isinstance(attr, Continuous):
            V[:, j] = (V[:, j] - attr.mean) / attr.std
        else:
            V[:, j] = (V[:, j] + 1.0) / attr.cardinality
    return V


def head_targets(schema: FeatureSchema, X: np.ndarray) -> np.ndarray:
    """Decoder-side target per attribute: standardized values or class index."""
    T = np.array(X, dtype=np.float64)
    for j, attr in enumerate(schema.attributes):
        if isinstance(attr, Continuous):
            T[:, j] = (T[:, j] - attr.mean) / attr.std
    return T


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def encode(model: PvaeModel, xt: PartialFeature) -> PosteriorGaussian:
    """q(Z | x-tilde); identical for every all-missing input (empty sum)."""
    xt.validate(model.schema)
    mu, logvar = encode_batch(model, xt.values[None, :], xt.mask[None, :])
    return PosteriorGaussian(mu[0], logvar[0])


def encode_batch(model: PvaeModel, X: np.ndarray, M: np.ndarray):
    V = normalize_values(model.schema, X)
    V[M] = 0.0
    mu, logvar, _ = core_encode(model.core, V, ~M)
    return mu, logvar


@dataclass
class DecodedAttr:
    """Raw-feature-space distribution parameters for one attribute."""

    kind: str
    mean: float = 0.0
    sigma: float = 0.0
    probs: np.ndarray | None = None


def decode(model: PvaeModel, z: np.ndarray) -> list[DecodedAttr]:
    """Per-attribute distribution parameters at latent point z.

    Continuous sigmas carry the softplus+1e-3 floor (in standardized units,
    scaled back by the attribute std).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.latent_dim,):
        raise ShapeError(f"z must have shape ({model.latent_dim},), got {z.shape}")
    raw, _ = core_decode(model.core, z[None, :])
    out = []
    for j, attr in enumerate(model.schema.attributes):
        head = model.core.heads[j]
        if isinstance(attr, Continuous):
            mu_std = raw[0, head.start]
            sig_std = sigma_from_raw(raw[0, head.start + 1])
            out.append(
                DecodedAttr("cont", mean=mu_std * attr.std + attr.mean, sigma=sig_std * attr.std)
            )
        else:
            probs = np.exp(log_softmax(-raw[0, head.start : head.stop]))
            out.append(DecodedAttr("cat", probs=probs))
    return out


def elbo(model: PvaeModel, xt: PartialFeature, rng: np.random.Generator, n_mc: int = 1) -> float:
    """Monte-Carlo ELBO of one instance: observed reconstruction minus KL."""
    if n_mc < 1:
        raise DomainError("n_mc must be >= 1")
    xt.validate(model.schema)
    mu, logvar = encode_batch(model, xt.values[None, :], xt.mask[None, :])
    std = np.exp(0.5 * logvar)
    T = head_targets(model.schema, xt.values[None, :])
    REC = ~xt.mask[None, :]
    recon = 0.0
    for _ in range(n_mc):
        z = mu + std * rng.standard_normal(mu.shape)
        raw, _ = core_decode(model.core, z)
        logp, _ = heads_log_prob(model.core.heads, raw, T, REC)
        recon += logp[0]
    kl = float(kl_to_standard_normal(mu, logvar)[0])
    return recon / n_mc - kl


def _as_feature_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, LoggedDataset):
        return data.features, data.mask
    if isinstance(data, tuple) and len(data) == 2:
        return np.asarray(data[0], dtype=np.float64), np.asarray(data[1], dtype=bool)
    if isinstance(data, list):  # list of PartialFeature
        X = np.stack([f.values for f in data])
        M = np.stack([f.mask for f in data])
        return X, M
    raise ConfigError(f"cannot interpret {type(data).__name__} as training features")


def train_pvae(data, schema: FeatureSchema, config: PvaeConfig | None = None) -> PvaeModel:
    """Fit the partial VAE by Adam on the mean ELBO; deterministic per seed."""
    config = config or PvaeConfig()
    config.validate()
    X, M = _as_feature_arrays(data)
    if X.shape[0] < 1:
        raise ConfigError("need at least one training feature")
    rng = np.random.Generator(np.random.PCG64(config.seed))
    model = init_pvae(schema, config, rng)
    V = normalize_values(schema, X)
    V[M] = 0.0
    T = head_targets(schema, X)
    OBS = ~M
    params = model.core.parameters()
    adam = AdamState.for_params(params, lr=config.lr)
    n = X.shape[0]
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            idx_mc = np.repeat(idx, config.n_mc)
            eps = rng.standard_normal((idx_mc.size, config.latent_dim))
            loss, grads = core_loss_and_grads(
                model.core, V[idx_mc], OBS[idx_mc], T[idx_mc], OBS[idx_mc], eps
            )
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch offset {lo}")
            adam_step(params, grads, adam)
            epoch_loss += loss * idx.size
        model.loss_trace.append(epoch_loss / n)
    return model


def _decode_fill(
    model: PvaeModel,
    z: np.ndarray,
    base_values: np.ndarray,
    missing: np.ndarray,
    mode: str,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Fill missing attributes from decode(z); observed entries are verbatim."""
    raw, _ = core_decode(model.core, z[None, :])
    out = base_values.copy()
    for j, attr in enumerate(model.schema.attributes):
        if not missing[j]:
            continue
        head = model.core.heads[j]
        if isinstance(attr, Continuous):
            mu_std = raw[0, head.start]
            if mode == SAMPLE and rng is not None:
                sig_std = sigma_from_raw(raw[0, head.start + 1])
                mu_std = mu_std + sig_std * rng.standard_normal()
            out[j] = mu_std * attr.std + attr.mean
        else:
            probs = np.exp(log_softmax(-raw[0, head.start : head.stop]))
            if mode == MEAN:
                out[j] = float(np.argmax(probs))
            else:
                out[j] = float(rng.choice(probs.size, p=probs))
    return out


def impute(
    model: PvaeModel,
    xt: PartialFeature,
    mode: str = MEAN,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Complete ``xt``: posterior-mean latent and head means/argmax in Mean
    mode, a reparameterized latent and categorical draws in Sample mode.
    Missing continuous attributes always receive the head mean."""
    if mode not in (MEAN, SAMPLE):
        raise ConfigError(f"unknown impute mode {mode!r}")
    if mode == SAMPLE and rng is None:
        raise ConfigError("Sample mode needs an rng")
    post = encode(model, xt)
    z = post.mu if mode == MEAN else post.mu + post.std * rng.standard_normal(post.mu.shape)
    # In impute, continuous fills use the head mean in both modes; only the
    # latent draw and categorical fills are stochastic in Sample mode.
    raw, _ = core_decode(model.core, z[None, :])
    out = xt.values.copy()
    for j, attr in enumerate(model.schema.attributes):
        if not xt.mask[j]:
            continue
        head = model.core.heads[j]
        if isinstance(attr, Continuous):
            out[j] = raw[0, head.start] * attr.std + attr.mean
        else:
            probs = np.exp(log_softmax(-raw[0, head.start : head.stop]))
            out[j] = float(np.argmax(probs)) if mode == MEAN else float(rng.choice(probs.size, p=probs))
    return out


def sample_posterior_features(
    model: PvaeModel, xt: PartialFeature, t: int, rng: np.random.Generator
) -> np.ndarray:
    """t full generative draws x ~ p(x | z), z ~ q(Z | x-tilde); observed
    attributes are preserved verbatim. Returns (t, d)."""
    if t < 1:
        raise DomainError("t must be >= 1")
    post = encode(model, xt)
    out = np.empty((t, len(model.schema)))
    for i in range(t):
        z = post.mu + post.std * rng.standard_normal(post.mu.shape)
        out[i] = _decode_fill(model, z, xt.values, xt.mask, SAMPLE, rng)
    return out


def sample_prior_features(model: PvaeModel, u: int, rng: np.random.Generator) -> np.ndarray:
    """u unconditional draws: z ~ N(0, I) decoded in Sample mode. Returns (u, d)."""
    if u < 1:
        raise DomainError("u must be >= 1")
    d = len(model.schema)
    out = np.empty((u, d))
    everything_missing = np.ones(d, dtype=bool)
    base = np.zeros(d)
    for i in range(u):
        z = rng.standard_normal(model.latent_dim)
        out[i] = _decode_fill(model, z, base, everything_missing, SAMPLE, rng)
    return out


# ---------------------------------------------------------------------------
# Posterior density p(x | x-tilde)
# ---------------------------------------------------------------------------


@dataclass
class PosteriorHeadParams:
    """Decoder head parameters at L latent draws per conditioning instance.

    Precomputed once so that many candidate completions can be scored against
    the same conditioning rows (the expensive part of similarity weights).
    """

    schema: FeatureSchema
    cont_idx: np.ndarray  # indices of continuous attributes
    cat_idx: np.ndarray
    cont_mu: np.ndarray  # (n, L, n_cont) raw-space means
    cont_sigma: np.ndarray  # (n, L, n_cont) raw-space stds
    cat_logp: list[np.ndarray]  # per categorical attr: (n, L, cardinality)
    n_draws: int


def posterior_head_params(
    model: PvaeModel,
    X: np.ndarray,
    M: np.ndarray,
    L: int = 1,
    rng: np.random.Generator | None = None,
) -> PosteriorHeadParams:
    """Head parameters of decode(z_l) for every row; L=1 uses the posterior
    mean, otherwise L reparameterized draws (requires rng)."""
    if L < 1:
        raise DomainError("L must be >= 1")
    if L > 1 and rng is None:
        raise ConfigError("L > 1 needs an rng")
    mu, logvar = encode_batch(model, X, M)
    n = X.shape[0]
    if L == 1:
        Z = mu[:, None, :]
    else:
        std = np.exp(0.5 * logvar)
        Z = mu[:, None, :] + std[:, None, :] * rng.standard_normal((n, L, model.latent_dim))
    raw, _ = core_decode(model.core, Z.reshape(n * L, -1))
    raw = raw.reshape(n, L, -1)
    schema = model.schema
    cont_idx = np.array(schema.continuous_indices, dtype=int)
    cat_idx = np.array(schema.categorical_indices, dtype=int)
    cont_mu = np.empty((n, L, cont_idx.size))
    cont_sigma = np.empty((n, L, cont_idx.size))
    for k, j in enumerate(cont_idx):
        head = model.core.heads[j]
        attr = schema.attributes[j]
        cont_mu[:, :, k] = raw[:, :, head.start] * attr.std + attr.mean
        cont_sigma[:, :, k] = sigma_from_raw(raw[:, :, head.start + 1]) * attr.std
    cat_logp = []
    for j in cat_idx:
        head = model.core.heads[j]
        cat_logp.append(log_softmax(-raw[:, :, head.start : head.stop]))
    return PosteriorHeadParams(schema, cont_idx, cat_idx, cont_mu, cont_sigma, cat_logp, L)


def profile_log_density(params: PosteriorHeadParams, x: np.ndarray) -> np.ndarray:
    """log p(x | row_i) for one complete feature against every stored row.

    Mixes over the L draws: logsumexp_l(sum_j log p(x_j | z_{i,l})) - log L.
    """
    x = np.asarray(x, dtype=np.float64)
    n, L = params.cont_mu.shape[0], params.n_draws
    lp = np.zeros((n, L))
    if params.cont_idx.size:
        xc = x[params.cont_idx]
        lp += gaussian_log_pdf(xc[None, None, :], params.cont_mu, params.cont_sigma).sum(axis=2)
    for k, j in enumerate(params.cat_idx):
        lp += params.cat_logp[k][:, :, int(x[j])]
    if L == 1:
        return lp[:, 0]
    return logsumexp(lp, axis=1) - np.log(L)


def posterior_log_density(
    model: PvaeModel,
    x: np.ndarray,
    xt: PartialFeature,
    rng: np.random.Generator | None = None,
    L: int = 1,
) -> float:
    """log p(x | x-tilde) under the product-of-heads posterior; L=1 scores at
    the posterior-mean latent (deterministic default)."""
    params = posterior_head_params(model, xt.values[None, :], xt.mask[None, :], L=L, rng=rng)
    return float(profile_log_density(params, np.asarray(x, dtype=np.float64))[0])


def posterior_density(
    model: PvaeModel,
    x: np.ndarray,
    xt: PartialFeature,
    rng: np.random.Generator | None = None,
    L: int = 1,
) -> float:
    return float(np.exp(posterior_log_density(model, x, xt, rng=rng, L=L)))


def profile_log_density_batch(params: PosteriorHeadParams, Xq: np.ndarray) -> np.ndarray:
    """log p(x_b | row_i) for a batch of complete features; returns (B, n)."""
    Xq = np.asarray(Xq, dtype=np.float64)
    B = Xq.shape[0]
    n, L = params.cont_mu.shape[0], params.n_draws
    lp = np.zeros((B, n, L))
    if params.cont_idx.size:
        xc = Xq[:, params.cont_idx]  # (B, n_cont)
        lp += gaussian_log_pdf(
            xc[:, None, None, :], params.cont_mu[None], params.cont_sigma[None]
        ).sum(axis=3)
    for k, j in enumerate(params.cat_idx):
        idx = Xq[:, j].astype(int)  # (B,)
        lp += np.moveaxis(params.cat_logp[k][:, :, idx], 2, 0)
    if L == 1:
        return lp[:, :, 0]
    return logsumexp(lp, axis=2) - np.log(L)


# ---------------------------------------------------------------------------
# Batched completion helpers (vectorized variants of impute / sampling)
# ---------------------------------------------------------------------------


def _categorical_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row from row-wise probability vectors."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    return (u[:, None] > cdf).sum(axis=1).clip(0, probs.shape[1] - 1)


def impute_mean_batch(model: PvaeModel, X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Vectorized Mean-mode impute over rows; observed entries verbatim."""
    mu, _ = encode_batch(model, X, M)
    raw, _ = core_decode(model.core, mu)
    out = np.array(X, dtype=np.float64)
    for j, attr in enumerate(model.schema.attributes):
        miss = M[:, j]
        if not miss.any():
            continue
        head = model.core.heads[j]
        if isinstance(attr, Continuous):
            fill = raw[:, head.start] * attr.std + attr.mean
        else:
            fill = np.argmax(-raw[:, head.start : head.stop], axis=1).astype(float)
        out[:, j] = np.where(miss, fill, out[:, j])
    return out


def sample_posterior_batch(
    model: PvaeModel, X: np.ndarray, M: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One full generative completion per row (z draw + head sampling)."""
    mu, logvar = encode_batch(model, X, M)
    z = mu + np.exp(0.5 * logvar) * rng.standard_normal(mu.shape)
    raw, _ = core_decode(model.core, z)
    out = np.array(X, dtype=np.float64)
    for j, attr in enumerate(model.schema.attributes):
        miss = M[:, j]
        if not miss.any():
            continue
        head = model.core.heads[j]
        if isinstance(attr, Continuous):
            mu_std = raw[:, head.start]
            sig_std = sigma_from_raw(raw[:, head.start + 1])
            fill = (mu_std + sig_std * rng.standard_normal(mu_std.shape)) * attr.std + attr.mean
        else:
            probs = np.exp(log_softmax(-raw[:, head.start : head.stop]))
            fill = _categorical_rows(probs, rng).astype(float)
        out[:, j] = np.where(miss, fill, out[:, j])
    return out
