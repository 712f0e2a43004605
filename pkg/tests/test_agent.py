import numpy as np
import pytest

from spagent.agent import (
    AgentConfig,
    DQNAgent,
    EpsilonSchedule,
    QNetwork,
    ReplayBuffer,
    Transition,
    buffer_sample,
    dqn_loss,
    load_checkpoint,
    save_checkpoint,
    select_action,
    sync_target,
    td_target,
    td_targets,
)
from spagent.errors import FormatError, InsufficientData, ShapeMismatch


def tiny_net(n_in=5, h=8, seed=0):
    return QNetwork((n_in, h, h, 6), rng=np.random.default_rng(seed))


def net_with_heads(v, a, n_in=3, h=4):
    """All weights zero, so each head outputs exactly its bias."""
    net = tiny_net(n_in, h)
    p = net.params
    for k in p:
        p[k][...] = 0.0
    p["bv"][0] = v
    p["ba"][:] = a
    return net


def test_dueling_identity_example():
    net = net_with_heads(1.0, [2, 0, -2, 0, 0, 0])
    q, s = net.forward(np.zeros(3))
    np.testing.assert_allclose(q, [3, 1, -1, 1, 1, 1])
    assert s == 0.0
    const = net_with_heads(0.7, [4.0] * 6)
    np.testing.assert_allclose(const.forward(np.ones(3))[0], np.full(6, 0.7))


def test_dueling_identity_random_batch():
    net = tiny_net(10, 16, seed=3)
    x = np.random.default_rng(1).normal(size=(64, 10))
    v, _, q, score, _ = net.heads(x)
    assert np.max(np.abs((q - v[:, None]).mean(axis=1))) < 1e-9
    assert np.all(np.abs(score) <= 1.0)


def test_zero_final_layers():
    net = tiny_net()
    for k in ("Wv", "bv", "Wa", "ba", "Ws", "bs"):
        net.params[k][...] = 0.0
    q, s = net.forward(np.random.default_rng(0).normal(size=5))
    np.testing.assert_array_equal(q, np.zeros(6))
    assert s == 0.0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        tiny_net().forward(np.zeros(4))


def test_select_action_examples():
    rng = np.random.default_rng(0)
    net = net_with_heads(0.0, [0, 5, 0, 0, 0, 0])
    assert select_action(net, np.zeros(3), 0.0, rng).index == 1
    flat = net_with_heads(0.0, [1.0] * 6)
    assert select_action(flat, np.zeros(3), 0.0, rng).index == 0


def test_select_action_uniform_at_eps_one():
    rng = np.random.default_rng(7)
    net = net_with_heads(0.0, [0, 5, 0, 0, 0, 0])
    counts = np.bincount([select_action(net, np.zeros(3), 1.0, rng).index for _ in range(60_000)],
                         minlength=6)
    assert np.max(np.abs(counts / 60_000 - 1 / 6)) < 0.02


def test_epsilon_schedule_monotone():
    sched = EpsilonSchedule(0.6, 0.05, 10_000)
    vals = [sched(t) for t in range(0, 15_000, 50)]
    assert vals[0] == 0.6 and vals[-1] == 0.05
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert sched(5_000) == pytest.approx(0.325)


def test_td_target_examples():
    online = net_with_heads(0.0, [0, 0, 9, 0, 0, 0])  # argmax a' = 2
    target = net_with_heads(2.0, [0, 0, 0, 0, 0, 0])  # Q_target(s', .) = 2
    s = np.zeros(3)
    t = Transition(s, 0, 1.0, s, False, 0.0)
    assert td_target(t, online, target, 0.85) == pytest.approx(2.7)
    assert td_target(Transition(s, 0, -2.0, s, True, 0.0), online, target, 0.85) == -2.0
    assert td_target(t, online, target, 0.0) == 1.0


def test_double_dqn_uses_online_argmax():
    online = net_with_heads(0.0, [0, 0, 0, 0, 3, 0])  # picks 4
    target = net_with_heads(0.0, [6, 0, 0, 0, -6, 0])  # would pick 0, values a'=4 at -7
    y = td_targets(online, target, [0.0], np.zeros((1, 3)), [False], 1.0)
    assert y[0] == pytest.approx(target.forward(np.zeros(3))[0][4])
    assert y[0] != pytest.approx(target.forward(np.zeros(3))[0].max())


def test_loss_combination_example():
    net = net_with_heads(0.0, [0.0] * 6)
    # Q = 0 everywhere, score = 0: choose targets giving L_Q = 2 and L_A = 1
    obs = np.zeros((2, 3))
    l_q, l_a, total, td, _ = dqn_loss(net, obs, [0, 1], [np.sqrt(2), -np.sqrt(2)], [1.0, -1.0],
                                      [1.0, 1.0], 0.5)
    assert l_q == pytest.approx(2.0) and l_a == pytest.approx(1.0)
    assert total == pytest.approx(2.5)


def test_zero_residual_loss():
    net = tiny_net(seed=4)
    obs = np.random.default_rng(0).normal(size=(6, 5))
    q, s = net.forward(obs)
    actions = np.arange(6)
    l_q, l_a, total, td, grads = dqn_loss(net, obs, actions, q[actions, actions], s, np.ones(6), 0.5)
    assert total == 0.0
    assert all(np.all(g == 0) for g in grads.values())


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    net = QNetwork((7, 16, 12, 6), rng=rng)
    obs = rng.normal(size=(9, 7))
    actions = rng.integers(0, 6, 9)
    y = rng.normal(size=9)
    g_aux = rng.uniform(-1, 1, 9)
    w = rng.uniform(0.2, 1.0, 9)
    *_, grads = dqn_loss(net, obs, actions, y, g_aux, w, 0.5)
    h = 1e-6
    worst = 0.0
    for name, p in net.params.items():
        for i in range(p.size):
            old = p.flat[i]
            p.flat[i] = old + h
            up = dqn_loss(net, obs, actions, y, g_aux, w, 0.5)[2]
            p.flat[i] = old - h
            down = dqn_loss(net, obs, actions, y, g_aux, w, 0.5)[2]
            p.flat[i] = old
            num = (up - down) / (2 * h)
            ana = grads[name].flat[i]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    assert worst < 1e-5


def test_repeated_updates_on_fixed_batch_descend():
    rng = np.random.default_rng(2)
    cfg = AgentConfig(hidden=(16, 16), lr=1e-3, batch=8, capacity=8)
    agent = DQNAgent(cfg, 10, seed=1)
    obs = rng.normal(size=(8, 10))
    actions = rng.integers(0, 6, 8)
    y = rng.normal(size=8)
    aux = rng.uniform(-1, 1, 8)
    losses = []
    for _ in range(25):
        *_, total, _, grads = dqn_loss(agent.net, obs, actions, y, aux, np.ones(8), cfg.delta)
        agent.opt.step(agent.net.params, grads)
        losses.append(total)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_sync_target():
    cfg = AgentConfig(hidden=(8, 8), batch=4, capacity=16, lr=1e-2, warmup=0)
    agent = DQNAgent(cfg, 5, seed=0)
    init = agent.target.copy()
    rng = np.random.default_rng(0)
    for _ in range(8):
        o = rng.normal(size=5)
        agent.observe(o, int(rng.integers(6)), 1.0, rng.normal(size=5), False, 0.3)
    agent.train_step(rng)
    x = rng.normal(size=5)
    # before the first sync the target still holds its initialization
    for k in init.params:
        np.testing.assert_array_equal(agent.target.params[k], init.params[k])
    assert not np.array_equal(agent.net.forward(x)[0], agent.target.forward(x)[0])
    agent.sync_target()
    np.testing.assert_array_equal(agent.net.forward(x)[0], agent.target.forward(x)[0])
    snapshot = {k: v.copy() for k, v in agent.target.params.items()}
    sync_target(agent.net, agent.target)
    for k in snapshot:
        np.testing.assert_array_equal(agent.target.params[k], snapshot[k])
    # the copy is deep: further updates leave the target alone
    agent.train_step(rng)
    for k in snapshot:
        np.testing.assert_array_equal(agent.target.params[k], snapshot[k])


def fill(buf, priorities):
    for p in priorities:
        buf.push(np.zeros(buf.obs_dim), 0, 0.0, np.zeros(buf.obs_dim), False, 0.0, priority=p)


def draws(buf, n, rng, beta=0.4):
    """Many draws through repeated full-size batches (a batch may not exceed the buffer)."""
    k = len(buf)
    parts = [buf.sample(k, rng, beta) for _ in range(n // k)]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def test_replay_frequencies():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(10, 2, alpha=1.0)
    fill(buf, [3.0, 1.0])
    idx, _ = draws(buf, 100_000, rng)
    assert abs(np.mean(idx == 0) - 0.75) < 0.02

    buf = ReplayBuffer(10, 2, alpha=0.0)
    fill(buf, np.arange(1, 11, dtype=float))
    idx, w = draws(buf, 100_000, rng)
    assert np.max(np.abs(np.bincount(idx, minlength=10) / 100_000 - 0.1)) < 0.02
    np.testing.assert_allclose(w, 1.0)


def test_replay_single_item_and_errors():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(4, 2)
    with pytest.raises(InsufficientData):
        buf.sample(1, rng)
    fill(buf, [0.5])
    idx, w = draws(buf, 10, rng, 0.7)
    assert np.all(idx == 0) and np.all(w == 1.0)
    with pytest.raises(ValueError):
        fill(buf, [0.0])


def test_importance_weights():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(8, 2, alpha=1.0)
    fill(buf, [1.0, 2.0, 4.0, 1.0])
    idx, w = draws(buf, 2000, rng, beta=0.5)
    probs = np.array([1, 2, 4, 1]) / 8
    expected = (4 * probs[idx]) ** -0.5 / (4 * probs.min()) ** -0.5
    np.testing.assert_allclose(w, expected)
    assert w.max() <= 1.0


def test_new_items_get_max_priority_and_updates_stay_positive():
    buf = ReplayBuffer(8, 2, p_min=1e-3)
    fill(buf, [1.0, 5.0])
    buf.push(np.zeros(2), 1, 0.0, np.zeros(2), False, 0.0)
    assert buf.priorities[2] == 5.0
    buf.update_priorities([0, 1], [0.0, -2.0])
    np.testing.assert_allclose(buf.priorities[:2], [1e-3, 2.001])
    assert np.all(buf.priorities[: len(buf)] > 0)


def test_ring_capacity_and_transitions():
    buf = ReplayBuffer(3, 2)
    for i in range(5):
        buf.add(Transition(np.full(2, i), i % 6, float(i % 3) - 1, np.full(2, i + 1), i == 4, 0.1 * i))
    assert len(buf) == 3
    got = sorted(buf.get(i).state[0] for i in range(3))
    assert got == [2.0, 3.0, 4.0]
    ts, w = buffer_sample(buf, 3, np.random.default_rng(0))
    assert len(ts) == 3 and len(w) == 3


def test_uniform_replay_flag():
    buf = ReplayBuffer(10, 2, uniform=True)
    fill(buf, [100.0, 1.0, 1.0, 1.0])
    idx, w = draws(buf, 40_000, np.random.default_rng(0))
    assert abs(np.mean(idx == 0) - 0.25) < 0.02
    np.testing.assert_array_equal(w, 1.0)


def trained_agent(steps=30, seed=0):
    cfg = AgentConfig(hidden=(8, 8), batch=4, capacity=64, lr=1e-2, eps_decay_steps=100)
    agent = DQNAgent(cfg, 5, seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        o = rng.normal(size=5)
        agent.observe(o, int(rng.integers(6)), float(rng.integers(-2, 3)), rng.normal(size=5),
                      bool(rng.random() < 0.1), float(rng.uniform(-1, 1)))
    for _ in range(5):
        agent.train_step(rng)
    return agent, rng


def test_checkpoint_round_trip(tmp_path):
    agent, _ = trained_agent()
    path = tmp_path / "a.ckpt"
    save_checkpoint(agent, path)
    back = load_checkpoint(path, agent.cfg)
    x = np.random.default_rng(9).normal(size=(4, 5))
    np.testing.assert_array_equal(agent.net.forward(x)[0], back.net.forward(x)[0])
    for k in agent.net.params:
        np.testing.assert_array_equal(agent.target.params[k], back.target.params[k])
        np.testing.assert_array_equal(agent.opt.m[k], back.opt.m[k])
        np.testing.assert_array_equal(agent.opt.v[k], back.opt.v[k])
    assert (back.opt.t, back.global_step, back.epsilon) == (agent.opt.t, agent.global_step, agent.epsilon)


def test_checkpoint_rejects_bad_files(tmp_path):
    agent, _ = trained_agent()
    path = tmp_path / "a.ckpt"
    save_checkpoint(agent, path)
    raw = bytearray(path.read_bytes())
    raw[6] = 2  # version field
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_checkpoint(path)
    path.write_bytes(b"NOTAGT" + bytes(raw[6:]))
    with pytest.raises(FormatError):
        load_checkpoint(path)
    raw[6] = 1
    path.write_bytes(bytes(raw[:-3]))
    with pytest.raises(FormatError):
        load_checkpoint(path)
    with pytest.raises(OSError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_resume_reproduces_uninterrupted_run(tmp_path):
    agent, rng = trained_agent()
    save_checkpoint(agent, tmp_path / "mid.ckpt")
    buf_copy = ReplayBuffer(agent.cfg.capacity, 5)
    for name in ("obs", "next_obs", "actions", "rewards", "dones", "aux", "priorities"):
        np.copyto(getattr(buf_copy, name), getattr(agent.buffer, name))
    buf_copy.size, buf_copy.cursor, buf_copy.max_priority = (
        agent.buffer.size, agent.buffer.cursor, agent.buffer.max_priority)
    rng_copy = np.random.default_rng()
    rng_copy.bit_generator.state = rng.bit_generator.state

    resumed = load_checkpoint(tmp_path / "mid.ckpt", agent.cfg)
    resumed.buffer = buf_copy
    for a, r in ((agent, rng), (resumed, rng_copy)):
        for _ in range(10):
            a.train_step(r, progress=0.5)
        a.sync_target()
    for k in agent.net.params:
        np.testing.assert_array_equal(agent.net.params[k], resumed.net.params[k])
