import itertools

import numpy as np
import pytest

from mvbandit.errors import CapacityError
from mvbandit.infolimits import (
    DiscreteEnv,
    bayes_accuracy,
    best_action_map,
    decomposition,
    example_environment,
    heuristic_accuracy,
)


def random_env(rng, n_attrs=3, n_actions=3, erase=None):
    values = [[0, 1]] * n_attrs
    n = 2**n_attrs
    prior = rng.random(n)
    prior /= prior.sum()
    rewards = rng.standard_normal((n, n_actions))
    rho = rng.uniform(0.1, 0.9) if erase is None else erase
    return DiscreteEnv(values, prior, rewards, erase_prob=rho)


def test_best_action_constant_rewards_tie_break():
    env = DiscreteEnv([[0, 1]], np.array([0.5, 0.5]), np.ones((2, 3)), erase_prob=0.5)
    assert np.array_equal(best_action_map(env), [0, 0])


def test_best_action_swapped_maxima():
    env = DiscreteEnv(
        [[0, 1]], np.array([0.5, 0.5]), np.array([[1.0, 0.0], [0.0, 1.0]]), erase_prob=0.5
    )
    assert np.array_equal(best_action_map(env), [0, 1])


def test_best_action_example_rule():
    env = example_environment()
    amap = best_action_map(env)
    for i, x in enumerate(env.states()):
        expected = 0 if x[0] + x[1] > x[2] + x[3] else 1
        assert amap[i] == expected


def test_example_environment_quantities():
    env = example_environment()
    dec = decomposition(env)
    assert dec.h_action == pytest.approx(0.8960, abs=5e-4)  # h2(5/16)
    assert dec.mi_feature_obs == pytest.approx(2.0, abs=1e-9)  # 4 * (1.5 - 1)
    assert dec.h_action_given_obs_direct == pytest.approx(0.570, abs=1e-3)
    assert abs(dec.h_action_given_obs_direct - dec.h_action_given_obs_identity) < 1e-9
    assert heuristic_accuracy(env) == pytest.approx(0.673, abs=1e-3)


def test_identity_channel_removes_uncertainty():
    rng = np.random.default_rng(0)
    env = random_env(rng, erase=0.0)
    dec = decomposition(env)
    assert dec.h_action_given_obs_direct == pytest.approx(0.0, abs=1e-12)
    assert heuristic_accuracy(env) == pytest.approx(1.0, abs=1e-9)
    assert bayes_accuracy(env) == pytest.approx(1.0, abs=1e-12)


def test_full_erasure_gives_prior_uncertainty():
    rng = np.random.default_rng(1)
    env = random_env(rng, erase=1.0)
    dec = decomposition(env)
    assert dec.mi_feature_obs == pytest.approx(0.0, abs=1e-12)
    assert dec.h_action_given_obs_direct == pytest.approx(dec.h_action, abs=1e-12)
    # MAP decoder can only pick the prior mode
    a_of_x = best_action_map(env)
    p_a = np.zeros(env.n_actions)
    np.add.at(p_a, a_of_x, env.prior)
    assert bayes_accuracy(env) == pytest.approx(float(p_a.max()), abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_identity_holds_on_random_environments(seed):
    rng = np.random.default_rng(seed)
    env = random_env(rng, n_attrs=int(rng.integers(2, 5)), n_actions=int(rng.integers(2, 5)))
    dec = decomposition(env)
    assert abs(dec.h_action_given_obs_direct - dec.h_action_given_obs_identity) < 1e-9
    assert -1e-12 <= dec.h_action_given_obs_direct <= dec.h_action + 1e-12
    assert dec.h_action <= np.log2(env.n_actions) + 1e-12
    assert dec.mi_feature_obs >= -1e-12
    assert bayes_accuracy(env) >= float(
        np.add.reduce(
            [env.prior[i] for i in range(env.n_states)]
            * (best_action_map(env) == np.argmax(np.bincount(best_action_map(env), weights=env.prior)))
        )
        - 1e-12
    )


def test_heuristic_values():
    # direct checks of the exponentiation
    env = example_environment()
    dec = decomposition(env)
    assert heuristic_accuracy(env) == pytest.approx(2.0 ** -dec.h_action_given_obs_direct)


def test_data_processing_inequality_by_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(10):
        env = random_env(rng)
        dec = decomposition(env)
        # I(X; X~) >= I(a(X); X~) = H(a) - H(a|X~) >= 0
        mi_action_obs = dec.h_action - dec.h_action_given_obs_direct
        assert dec.mi_feature_obs >= mi_action_obs - 1e-9
        assert mi_action_obs >= -1e-9


def test_explicit_channel_table_matches_erasure():
    values = [[0, 1], [0, 1]]
    states = list(itertools.product(*values))
    rho = 0.3
    obs_states = list(itertools.product([0, 1, None], [0, 1, None]))
    table = np.zeros((4, len(obs_states)))
    for xi, x in enumerate(states):
        for oi, o in enumerate(obs_states):
            p = 1.0
            for v, ov in zip(x, o):
                if ov is None:
                    p *= rho
                elif ov == v:
                    p *= 1 - rho
                else:
                    p = 0.0
            table[xi, oi] = p
    prior = np.array([0.1, 0.2, 0.3, 0.4])
    rewards = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    env_a = DiscreteEnv(values, prior, rewards, erase_prob=rho)
    env_b = DiscreteEnv(values, prior, rewards, channel_table=table)
    da, db = decomposition(env_a), decomposition(env_b)
    assert da.h_action_given_obs_direct == pytest.approx(db.h_action_given_obs_direct, abs=1e-12)
    assert da.mi_feature_obs == pytest.approx(db.mi_feature_obs, abs=1e-12)


def test_capacity_error():
    values = [[0, 1]] * 16
    n = 2**16
    with pytest.raises(CapacityError):
        decomposition(
            DiscreteEnv(values, np.full(n, 1.0 / n), np.zeros((n, 2)), erase_prob=0.5)
        )


def test_bayes_accuracy_example_exceeds_heuristic_floor():
    env = example_environment()
    b = bayes_accuracy(env)
    a_of_x = best_action_map(env)
    p_a = np.zeros(2)
    np.add.at(p_a, a_of_x, env.prior)
    assert b >= p_a.max() - 1e-12
    assert 0.0 <= b <= 1.0
