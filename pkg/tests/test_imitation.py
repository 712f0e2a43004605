import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spagent.agent import QNetwork, encode_state
from spagent.env import ACTIONS, Action, EnvConfig, PlaneEnv, StartSampler
from spagent.errors import EmptyDemoSet, FormatError
from spagent.geom import TangentPoint
from spagent.imitation import (
    Demonstration,
    agreement,
    cross_entropy,
    generate_demos,
    load_demos,
    oracle_action,
    pretrain,
    run_oracle_episode,
    save_demos,
)
from spagent.volume import PhantomConfig, generate_phantom

CFG = EnvConfig(extent=16, pixel_pitch=2.0)
FACTOR = 2
N_IN = 3 * 8 * 8 + 4


@pytest.fixture(scope="module")
def vol():
    return generate_phantom(PhantomConfig(seed=1, dims=(32, 32, 32), organ_center=0.4, organ_radius=7.0))


def test_oracle_examples():
    assert oracle_action(TangentPoint(5, 0, 0), TangentPoint(2, 0, 0), 1.0) == Action(0, -1)
    assert oracle_action(TangentPoint(0, 3, 0), TangentPoint(0, 3, 4), 1.0) == Action(2, 1)
    # at the target every move worsens equally; the tie goes to X+
    assert oracle_action(TangentPoint(1, 1, 1), TangentPoint(1, 1, 1), 1.0) == Action(0, 1)
    # equal gaps on two axes: the lower axis wins
    assert oracle_action(TangentPoint(1, 1, 1), TangentPoint(1, 4, 4), 1.0) == Action(1, 1)


coords = st.floats(-30, 30).filter(lambda v: abs(v) > 1e-3)


@settings(max_examples=300)
@given(st.tuples(coords, coords, coords), st.tuples(coords, coords, coords),
       st.sampled_from([1.0, 0.1, 0.01]))
def test_oracle_is_optimal(cur, tgt, size):
    c, g = np.array(cur), np.array(tgt)
    a = oracle_action(TangentPoint(*cur), TangentPoint(*tgt), size)
    dists = []
    for b in ACTIONS:
        n = c.copy()
        n[b.axis] += b.sign * size
        dists.append(np.linalg.norm(n - g))
    assert dists[a.index] == min(dists)
    assert a.index == int(np.argmin(dists))


def distances(demo, goal):
    g = goal.as_array()
    pts = [t.as_array() for t in demo.tangents] + [demo.final_tangent.as_array()]
    return np.array([np.linalg.norm(p - g) for p in pts])


def test_three_step_example(vol):
    env = PlaneEnv(vol, CFG)
    g = vol.gt_tangent.as_array()
    demo = run_oracle_episode(env, TangentPoint.from_array(g - [3.0, 0, 0]), FACTOR, 32.0)
    assert len(demo) == 3 and demo.actions == [0, 0, 0]
    np.testing.assert_allclose(demo.final_tangent.as_array(), g, atol=1e-12)


def test_demos_deterministic_and_monotone(vol):
    sampler = StartSampler(tuple(vol.gt_tangent.as_array()), (3.0, 3.0, 3.0))
    a = generate_demos(vol, 4, 11, sampler, CFG, FACTOR)
    b = generate_demos(vol, 4, 11, sampler, CFG, FACTOR)
    assert [d.actions for d in a] == [d.actions for d in b]
    for da, db in zip(a, b):
        for oa, ob in zip(da.observations, db.observations):
            np.testing.assert_array_equal(oa, ob)
    for d in a:
        assert len(d) <= 60
        assert np.all(np.diff(distances(d, vol.gt_tangent)) < 0)


def test_demo_states_are_environment_reslices(vol):
    env = PlaneEnv(vol, CFG)
    sampler = StartSampler(tuple(vol.gt_tangent.as_array()), (2.0, 2.0, 2.0))
    demo = generate_demos(vol, 1, 3, sampler, CFG, FACTOR)[0]
    state = env.reset(demo.tangents[0])
    for t, size, obs, a in zip(demo.tangents, demo.step_sizes, demo.observations, demo.actions):
        assert state.tangent == t
        state = env.with_step_size(state, size)
        np.testing.assert_array_equal(encode_state(state, FACTOR, 32.0), obs)
        state = env.step(state, a).state


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0, 20))
def test_greedy_convergence_from_starts_within_reach(vol, direction, l1):
    d = np.array(direction)
    if np.abs(d).sum() < 1e-6:
        return
    g = vol.gt_tangent.as_array()
    start = g + d / np.abs(d).sum() * l1  # L1 distance l1 <= 20 steps of 1 mm
    env = PlaneEnv(vol, CFG)
    demo = run_oracle_episode(env, TangentPoint.from_array(start), FACTOR, 32.0)
    assert len(demo) <= 60
    assert np.linalg.norm(demo.final_tangent.as_array() - g) <= np.sqrt(3) * 0.01


def test_cross_entropy_limits():
    logits = np.array([[10.0, 0, 0, 0, 0, 0]])
    loss, grad = cross_entropy(logits, np.array([0]))
    assert loss == pytest.approx(-np.log(np.exp(10) / (np.exp(10) + 5)))
    assert cross_entropy(logits * 10, np.array([0]))[0] < 1e-40
    assert grad.sum() == pytest.approx(0.0, abs=1e-15)


def test_pretrain_overfits_single_pair():
    rng = np.random.default_rng(0)
    obs = rng.random(N_IN).astype(np.float32)
    demo = Demonstration(tangents=[TangentPoint(1, 1, 1)] * 8, step_sizes=[1.0] * 8,
                         observations=[obs] * 8, actions=[4] * 8)
    net = QNetwork((N_IN, 16, 16, 6), rng=rng)
    before = {k: v.copy() for k, v in net.params.items()}
    snapshot = obs.copy()
    trained = pretrain(net, [demo], epochs=30, lr=1e-2, batch=4)
    assert int(np.argmax(trained.forward(obs)[0])) == 4
    assert agreement(trained, [demo]) == 1.0
    for k in before:  # the input network is left untouched
        np.testing.assert_array_equal(net.params[k], before[k])
    np.testing.assert_array_equal(obs, snapshot)


def test_pretrain_requires_demos():
    net = QNetwork((N_IN, 8, 8, 6))
    with pytest.raises(EmptyDemoSet):
        pretrain(net, [])
    with pytest.raises(EmptyDemoSet):
        pretrain(net, [Demonstration()])


def test_demo_file_round_trip(tmp_path, vol):
    sampler = StartSampler(tuple(vol.gt_tangent.as_array()), (3.0, 3.0, 3.0))
    demos = generate_demos(vol, 3, 5, sampler, CFG, FACTOR)
    path = tmp_path / "d.spdem"
    save_demos(demos, path)
    back = load_demos(path)
    assert len(back) == 3
    for a, b in zip(demos, back):
        assert a.actions == b.actions and a.step_sizes == b.step_sizes
        assert a.tangents == b.tangents
        for oa, ob in zip(a.observations, b.observations):
            np.testing.assert_array_equal(oa, ob)
    raw = path.read_bytes()
    path.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        load_demos(path)
    path.write_bytes(b"XXDEM1" + raw[6:])
    with pytest.raises(FormatError):
        load_demos(path)
