import numpy as np
import pytest

from cosnet.core import ClipTrack
from cosnet.policy import PolicyParameters, backward, init_parameters
from cosnet.rewards import RewardConfig
from cosnet.synthetic import SyntheticSpec, generate_synthetic
from cosnet.trainer import (Adam, ConfigurationError, NonFiniteGradientError, ReturnBaseline, TrainConfig,
                            loss_value, policy_gradient, run_episode, train, update)

SMALL = dict(hidden=6, K=3, eta=1e-2, l2=1e-3, steps=(-2, -1, 0, 1, 2))


def small_track(seed=0, M=20):
    return generate_synthetic(SyntheticSpec(M=M, D=4, planted=4, seed=seed))


def episodes(track, params, cfg, k, seed=0):
    rng = np.random.default_rng(seed)
    return [run_episode(track, params, cfg, rng) for _ in range(k)]


def test_identical_features_give_half_reward_in_mode_u():
    track = ClipTrack(np.ones((20, 4)))
    cfg = TrainConfig(n_agents=3, reward=RewardConfig(mode="U"), **SMALL)
    params = init_parameters(4, 6, 6, 5, seed=0)
    trace = run_episode(track, params, cfg, np.random.default_rng(0))
    assert np.all(np.stack([b.r_total for b in trace.rewards]) == 0.5)


def test_round_cap_and_trace_shapes():
    track = small_track()
    cfg = TrainConfig(n_agents=3, max_rounds=1, **SMALL)
    params = init_parameters(4, 6, 6, 5)
    trace = run_episode(track, params, cfg, np.random.default_rng(1))
    assert trace.rounds == 1 and len(trace.positions) == 2
    cfg = TrainConfig(n_agents=3, max_rounds=7, **SMALL)
    trace = run_episode(track, params, cfg, np.random.default_rng(1))
    assert trace.rounds <= 7
    assert trace.inputs.shape == (trace.rounds, 3, 4) and trace.returns.shape == (trace.rounds, 3)
    assert np.allclose(trace.probs.sum(axis=2), 1)


def test_episode_is_deterministic():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **SMALL)
    params = init_parameters(4, 6, 6, 5)
    a = run_episode(track, params, cfg, np.random.default_rng(5))
    b = run_episode(track, params, cfg, np.random.default_rng(5))
    assert np.array_equal(a.actions, b.actions) and np.array_equal(a.returns, b.returns)


def test_trace_rows_follow_agents():
    # replaying each identity's recorded step reproduces the recorded positions
    from cosnet.core import AgentConfiguration
    from cosnet.environment import execute_round
    track = small_track(M=12)
    cfg = TrainConfig(n_agents=3, max_rounds=15, **SMALL)
    params = init_parameters(4, 6, 6, 5, seed=2)
    trace = run_episode(track, params, cfg, np.random.default_rng(3))
    where = dict(enumerate(int(p) for p in trace.positions[0]))
    for t in range(trace.rounds):
        ids = trace.identities[t]
        assert [where[int(a)] for a in ids] == list(trace.positions[t])
        out = execute_round(AgentConfiguration(trace.positions[t]), trace.steps[t][ids], 12)
        for slot, agent in enumerate(ids):
            where[int(agent)] = int(out.destinations[slot])
        assert sorted(where.values()) == list(trace.positions[t + 1])
    assert trace.episode_return == pytest.approx(trace.returns[0].mean())


def test_episode_rejects_crowded_tracks():
    from cosnet.environment import UnreachableStateError
    cfg = TrainConfig(n_agents=6, **SMALL)
    with pytest.raises(UnreachableStateError):
        run_episode(small_track(M=10), init_parameters(4, 6, 6, 5), cfg, np.random.default_rng(0))


def test_zero_returns_and_no_l2_leave_params_unchanged():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **{**SMALL, "l2": 0.0})
    params = init_parameters(4, 6, 6, 5)
    traces = episodes(track, params, cfg, 3)
    for t in traces:
        t.returns[:] = 0
    new, report = update(params, traces, cfg, Adam(params, cfg.eta))
    assert new.equals(params) and report.grad_norm == 0


def test_pure_weight_decay_opposes_each_weight():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **{**SMALL, "l2": 0.5})
    params = init_parameters(4, 6, 6, 5)
    traces = episodes(track, params, cfg, 3)
    for t in traces:
        t.returns[:] = 0
    new, _ = update(params, traces, cfg, Adam(params, cfg.eta))
    for p, q in zip(params.arrays(), new.arrays()):
        moved = p != 0
        assert np.all(np.sign(q - p)[moved] == -np.sign(p)[moved])


def test_gradient_is_mean_of_per_trace_backward():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **SMALL)
    params = init_parameters(4, 6, 6, 5)
    traces = episodes(track, params, cfg, 3)
    total = sum(backward(params, t.inputs, t.actions, t.returns).flat() for t in traces) / 3
    assert np.allclose(policy_gradient(params, traces).flat(), total)


def test_update_descends_the_surrogate():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **{**SMALL, "eta": 1e-6})
    params = init_parameters(4, 6, 6, 5)
    traces = episodes(track, params, cfg, 3)
    new, _ = update(params, traces, cfg, Adam(params, cfg.eta))
    assert loss_value(new, traces, cfg.l2) < loss_value(params, traces, cfg.l2)


def test_non_finite_returns_abort_the_update():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **SMALL)
    params = init_parameters(4, 6, 6, 5)
    traces = episodes(track, params, cfg, 3)
    traces[1].returns[0, 0] = np.nan
    opt = Adam(params, cfg.eta)
    with pytest.raises(NonFiniteGradientError):
        update(params, traces, cfg, opt)
    assert opt.t == 0
    with pytest.raises(ConfigurationError):
        update(params, traces[:2], cfg, opt)


def test_adam_first_step_has_magnitude_eta():
    p = PolicyParameters(*[np.ones(s) for s in [(4, 1), (4, 1), (4,), (1, 1), (1,), (1, 1), (1,)]])
    g = PolicyParameters(*[np.full_like(a, 3.0) for a in p.arrays()])
    new = Adam(p, 0.1).step(p, g)
    assert np.allclose(new.flat(), p.flat() - 0.1, atol=1e-6)


def test_schedule_and_determinism():
    track = small_track()
    cfg = TrainConfig(n_agents=3, episodes_per_dataset=2, seed=4, **SMALL)
    a = train([track, small_track(seed=1)], cfg)
    b = train([track, small_track(seed=1)], cfg)
    assert len(a.curve) == 4 and a.params.equals(b.params)
    assert [r.update_index for r in a.curve] == [0, 1, 2, 3]
    assert all(r.f_score is not None for r in a.curve)
    one = train([track], TrainConfig(n_agents=3, episodes_per_dataset=1, **{**SMALL, "K": 1}))
    assert len(one.curve) == 1


def test_threads_do_not_change_results():
    track = small_track()
    serial = train([track], TrainConfig(n_agents=3, episodes_per_dataset=2, **SMALL))
    threaded = train([track], TrainConfig(n_agents=3, episodes_per_dataset=2, threads=3, **SMALL))
    assert serial.params.equals(threaded.params)


def test_train_validates_dataset():
    with pytest.raises(ConfigurationError):
        train([], TrainConfig(**SMALL))
    with pytest.raises(ConfigurationError):
        train([ClipTrack(np.ones((20, 4)))], TrainConfig(n_agents=2, **SMALL))  # US needs annotations
    with pytest.raises(ConfigurationError):
        TrainConfig(K=0)


def test_return_baseline_tracks_round_means():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **SMALL)
    traces = episodes(track, init_parameters(4, 6, 6, 5), cfg, 3)
    base = ReturnBaseline(cfg.max_rounds, decay=0.5)
    base.observe(traces)
    first = base.current()
    assert first[0] == pytest.approx(np.mean([t.returns[0].mean() for t in traces]))
    base.observe(traces)
    assert np.allclose(base.current(), first)


def test_mean_return_is_bounded():
    track = small_track()
    cfg = TrainConfig(n_agents=3, **SMALL)
    result = train([track], TrainConfig(n_agents=3, episodes_per_dataset=3, **SMALL))
    bound = sum(cfg.reward.gamma ** t for t in range(cfg.max_rounds))
    assert all(0 <= r.mean_return <= bound for r in result.curve)
