import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aif_arm.core import AgentConfig, GeneralizedLatent, Goal, Observation, PrecisionSet, shift_orders
from aif_arm.errors import DimensionError


@pytest.mark.parametrize(
    "orders, expected",
    [
        ([[0.3], [0.1]], [[0.1], [0.0]]),
        ([[0.0, 0.0]], [[0.0, 0.0]]),
        ([[1, 2], [3, 4], [5, 6]], [[3, 4], [5, 6], [0, 0]]),
    ],
)
def test_shift_orders_examples(orders, expected):
    assert shift_orders(GeneralizedLatent(orders)) == GeneralizedLatent(expected)


finite = st.floats(-1e3, 1e3, allow_nan=False)


def latents(K, n):
    return arrays(float, (K, n), elements=finite)


@given(st.integers(1, 4).flatmap(lambda K: st.tuples(st.just(K), latents(K, 3))))
def test_shift_nilpotent(args):
    K, orders = args
    z = GeneralizedLatent(orders)
    for _ in range(K):
        z = shift_orders(z)
    assert np.array_equal(z.orders, np.zeros_like(orders))


@settings(max_examples=50)
@given(latents(3, 2), latents(3, 2), finite, finite)
def test_shift_linear(o1, o2, a, b):
    lhs = shift_orders(GeneralizedLatent(a * o1 + b * o2)).orders
    rhs = a * shift_orders(GeneralizedLatent(o1)).orders + b * shift_orders(GeneralizedLatent(o2)).orders
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_latent_rejects_nonfinite_and_empty():
    with pytest.raises(ValueError):
        GeneralizedLatent([[np.nan, 0.0]])
    with pytest.raises(DimensionError):
        GeneralizedLatent(np.zeros((1, 0)))
    with pytest.raises(DimensionError):
        GeneralizedLatent([0.0, 1.0])


def test_latent_is_immutable():
    z = GeneralizedLatent.zeros(2, 1)
    with pytest.raises(ValueError):
        z.orders[0, 0] = 1.0
    assert z.max_order == 1 and z.n_joints == 2


def test_observation_channels_and_dropout():
    s = Observation([0.1, 0.2], proprio_vel=[0.0, 0.0], visual=[1.0, 1.0])
    assert list(s.channels()) == ["proprio_pos", "proprio_vel", "visual"]
    t = s.without("visual")
    assert t.visual is None and list(t.channels()) == ["proprio_pos", "proprio_vel"]
    with pytest.raises(DimensionError):
        Observation([0.1, 0.2], proprio_vel=[0.0])
    with pytest.raises(DimensionError):
        Observation([0.1], visual=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        Observation([np.inf])


def test_precision_set_caches_inverse_and_logdet(rng):
    A = rng.standard_normal((2, 2))
    cov = A @ A.T + np.eye(2)
    P = PrecisionSet({"proprio_pos": cov, "visual": 2 * np.eye(2)}, [np.eye(2), 3 * np.eye(2)])
    np.testing.assert_allclose(P.precision_x("proprio_pos") @ cov, np.eye(2), atol=1e-12)
    assert P.logdet_x("visual") == pytest.approx(2 * np.log(2))
    assert P.logdet_z == pytest.approx(2 * np.log(3))
    assert P.max_order == 1 and P.n_joints == 2


def test_precision_set_rejects_bad_blocks():
    with pytest.raises(ValueError):
        PrecisionSet({"proprio_pos": [[1.0, 2.0], [2.0, 1.0]]}, [np.eye(2)])
    with pytest.raises(ValueError):
        PrecisionSet({"proprio_pos": [[1.0, 0.1], [0.0, 1.0]]}, [np.eye(2)])
    with pytest.raises(DimensionError):
        PrecisionSet({"visual": np.eye(3)}, [np.eye(2)])
    with pytest.raises(KeyError):
        PrecisionSet({"tactile": np.eye(1)}, [np.eye(1)])


def test_precision_diagonal_builder():
    P = PrecisionSet.diagonal(3, 2, proprio_pos=0.5, proprio_vel=None, visual=[1.0, 2.0], dynamics=[1, 2, 4])
    assert set(P.sigma_x) == {"proprio_pos", "visual"}
    assert P.sigma_z[2][0, 0] == 4.0
    np.testing.assert_allclose(P.precision_x("proprio_pos"), 2 * np.eye(3))


def test_agent_config_invariants():
    AgentConfig(k_z=1, k_a=1, dt=0.1)
    for bad in ({"k_z": 0}, {"k_a": -1}, {"dt": 0.0}, {"dt": 0.2}, {"max_order": 4}):
        with pytest.raises(ValueError):
            AgentConfig(**bad)
    assert AgentConfig().limit == 2.0
    assert AgentConfig(action_mode="torque").limit == 10.0


def test_goal_needs_a_component():
    with pytest.raises(ValueError):
        Goal()
    g = Goal(desired_joints=[0.1, 0.2])
    assert g.desired_visual is None
    with pytest.raises(DimensionError):
        Goal(desired_visual=[1.0])
