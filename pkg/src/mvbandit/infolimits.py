"""Exact information-theoretic limits on recovering the best action from a
degraded feature, computed by full enumeration on small discrete environments.

All entropies are in bits; 0 log 0 = 0 throughout. The per-attribute erasure
channel is enumerated as feature-state x erasure-mask (2^d masks), which is
exact because the channel factorizes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError

MAX_JOINT_STATES = 1 << 20


@dataclass
class DiscreteEnv:
    """Enumerable feature space with a prior, an erasure channel, and a
    per-(state, action) expected-reward table."""

    attribute_values: list[list]  # finite domain per attribute
    prior: np.ndarray  # (n_states,) over itertools.product order
    reward_means: np.ndarray  # (n_states, n_actions)
    erase_prob: float | None = None
    channel_table: np.ndarray | None = None  # (n_states, n_obs_states) alternative
    _states: list[tuple] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.prior = np.asarray(self.prior, dtype=np.float64)
        self.reward_means = np.asarray(self.reward_means, dtype=np.float64)
        self._states = list(itertools.product(*self.attribute_values))
        n = len(self._states)
        if self.prior.shape != (n,):
            raise ConfigError(f"prior length {self.prior.shape} != state count {n}")
        if abs(self.prior.sum() - 1.0) > 1e-9 or np.any(self.prior < 0):
            raise ConfigError("prior must be a distribution")
        if self.reward_means.shape[0] != n or not np.all(np.isfinite(self.reward_means)):
            raise ConfigError("reward table must be finite with one row per state")
        if (self.erase_prob is None) == (self.channel_table is None):
            raise ConfigError("exactly one of erase_prob / channel_table must be given")
        if self.erase_prob is not None and not 0.0 <= self.erase_prob <= 1.0:
            raise ConfigError("erase_prob must be in [0, 1]")
        if self.channel_table is not None:
            self.channel_table = np.asarray(self.channel_table, dtype=np.float64)
            if self.channel_table.shape[0] != n:
                raise ConfigError("channel table must have one row per state")
            if np.any(np.abs(self.channel_table.sum(axis=1) - 1.0) > 1e-9):
                raise ConfigError("channel rows must sum to 1")

    @property
    def n_states(self) -> int:
        return len(self._states)

    @property
    def n_actions(self) -> int:
        return self.reward_means.shape[1]

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_values)

    def states(self) -> list[tuple]:
        return self._states


def best_action_map(env: DiscreteEnv) -> np.ndarray:
    """argmax_a of the reward table per state, lowest index on ties."""
    return np.argmax(env.reward_means, axis=1)


def _joint_distribution(env: DiscreteEnv):
    """Exact joint p(x, x-tilde) as (x_index array, xt_key array, prob array).

    Observation keys are tuples with None marking erased attributes.
    """
    n, d = env.n_states, env.n_attributes
    if env.erase_prob is not None:
        n_joint = n * (1 << d)
    else:
        n_joint = n * env.channel_table.shape[1]
    if n_joint > MAX_JOINT_STATES:
        raise CapacityError(f"joint enumeration would need {n_joint} states (cap {MAX_JOINT_STATES})")

    xs, keys, probs = [], [], []
    if env.erase_prob is not None:
        rho = env.erase_prob
        masks = list(itertools.product((False, True), repeat=d))
        mask_probs = [
            float(np.prod([rho if m else 1.0 - rho for m in mask])) for mask in masks
        ]
        for xi, x in enumerate(env.states()):
            base = env.prior[xi]
            if base == 0.0:
                continue
            for mask, mp in zip(masks, mask_probs):
                if mp == 0.0:
                    continue
                key = tuple(None if m else v for v, m in zip(x, mask))
                xs.append(xi)
                keys.append(key)
                probs.append(base * mp)
    else:
        obs_states = list(itertools.product(*[vals + [None] for vals in env.attribute_values]))
        for xi in range(n):
            base = env.prior[xi]
            if base == 0.0:
                continue
            for oi, p in enumerate(env.channel_table[xi]):
                if p == 0.0:
                    continue
                xs.append(xi)
                keys.append(obs_states[oi])
                probs.append(base * p)
    return np.asarray(xs), keys, np.asarray(probs)


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


@dataclass
class Decomposition:
    h_action: float  # H(a(X))
    mi_feature_obs: float  # I(X; X~)
    mi_feature_obs_given_action: float  # I(X; X~ | a(X))
    h_action_given_obs_direct: float  # H(a(X) | X~) from the joint
    h_action_given_obs_identity: float  # via the decomposition identity


def decomposition(env: DiscreteEnv) -> Decomposition:
    """All decomposition terms by exact summation over p(x, x-tilde, a(x))."""
    a_of_x = best_action_map(env)
    xs, keys, probs = _joint_distribution(env)

    key_index: dict = {}
    for k in keys:
        if k not in key_index:
            key_index[k] = len(key_index)
    kidx = np.array([key_index[k] for k in keys])
    n_keys = len(key_index)
    n_act = env.n_actions

    p_x = env.prior
    p_xt = np.zeros(n_keys)
    np.add.at(p_xt, kidx, probs)
    p_a = np.zeros(n_act)
    np.add.at(p_a, a_of_x, p_x)
    # J(x~, a) = sum over x with a(x)=a of p(x, x~)
    joint_obs_action = np.zeros((n_keys, n_act))
    np.add.at(joint_obs_action, (kidx, a_of_x[xs]), probs)

    h_a = _entropy_bits(p_a)

    terms_i = probs * np.log2(probs / (p_x[xs] * p_xt[kidx]))
    mi_x_xt = float(np.sum(terms_i))

    a_rows = a_of_x[xs]
    terms_c = probs * np.log2(
        probs * p_a[a_rows] / (p_x[xs] * joint_obs_action[kidx, a_rows])
    )
    mi_cond = float(np.sum(terms_c))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = joint_obs_action / p_xt[:, None]
        logr = np.where(joint_obs_action > 0, np.log2(np.where(ratio > 0, ratio, 1.0)), 0.0)
    h_direct = float(-np.sum(joint_obs_action * logr))

    h_identity = h_a - (mi_x_xt - mi_cond)
    return Decomposition(h_a, mi_x_xt, mi_cond, h_direct, h_identity)


def heuristic_accuracy(env: DiscreteEnv) -> float:
    """2^{-H(a(X)|X~)}: the paper-style guessing-probability heuristic."""
    return float(2.0 ** (-decomposition(env).h_action_given_obs_direct))


def bayes_accuracy(env: DiscreteEnv) -> float:
    """Exact success probability of the MAP decoder x~ -> argmax_a P(a(X)=a | x~)."""
    a_of_x = best_action_map(env)
    xs, keys, probs = _joint_distribution(env)
    key_index: dict = {}
    for k in keys:
        if k not in key_index:
            key_index[k] = len(key_index)
    kidx = np.array([key_index[k] for k in keys])
    joint = np.zeros((len(key_index), env.n_actions))
    np.add.at(joint, (kidx, a_of_x[xs]), probs)
    return float(joint.max(axis=1).sum())


def example_environment() -> DiscreteEnv:
    """Four fair bits, per-bit erasure 1/2, two actions with Bernoulli reward
    means (x1+x2)/3 and (x3+x4)/3 + 0.1."""
    values = [[0, 1]] * 4
    states = list(itertools.product(*values))
    n = len(states)
    rewards = np.zeros((n, 2))
    for i, (x1, x2, x3, x4) in enumerate(states):
        rewards[i, 0] = (x1 + x2) / 3.0
        rewards[i, 1] = (x3 + x4) / 3.0 + 0.1
    return DiscreteEnv(values, np.full(n, 1.0 / n), rewards, erase_prob=0.5)
