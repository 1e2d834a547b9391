import numpy as np
import pytest

from greensched.heuristics import HeuristicPolicy
from greensched.nn import AgentNets
from greensched.nn import autodiff as ad
from greensched.power import PowerModel
from greensched.training import (
    DrlPolicy,
    ReplayBuffer,
    TrainingConfig,
    Transition,
    action_agreement,
    collect_rollouts,
    load_dataset,
    run_episode,
    save_dataset,
    train_offline,
    train_online,
)
from greensched.training import losses
from greensched.training.loop import network_config_for_env

from conftest import UniformRandomPolicy, make_job, small_env, synthetic_env


# -- losses against tabular oracles --------------------------------------------

def test_critic_target_terminal_zero_loss():
    # Q(s, a) = r on a terminal transition: squared error is exactly 0
    rewards = np.array([5.0])
    dones = np.array([1.0])
    next_probs = np.array([[0.25, 0.75]])
    next_q = np.array([[100.0, -50.0]])
    y = losses.critic_targets(rewards, dones, next_probs, next_q, discount=0.9)
    assert y == pytest.approx([5.0])
    assert losses.critic_loss_value(np.array([5.0]), y) == 0.0


def test_critic_target_zero_discount_is_reward():
    rewards = np.array([1.0, -2.0, 3.0])
    dones = np.zeros(3)
    next_probs = np.full((3, 4), 0.25)
    next_q = np.arange(12, dtype=float).reshape(3, 4)
    y = losses.critic_targets(rewards, dones, next_probs, next_q, discount=0.0)
    assert y == pytest.approx(rewards)


def test_critic_loss_three_transition_fixture():
    # hand computation with pi and Q tables:
    #  y0 = 1 + 0.5 * (0.5*2 + 0.5*4) = 2.5;  (3 - 2.5)^2   = 0.25
    #  y1 = 0 + 0.5 * (1.0*(-2))      = -1.0; (1 - (-1))^2  = 4.0
    #  y2 = 2 (terminal);             (0 - 2)^2             = 4.0
    rewards = np.array([1.0, 0.0, 2.0])
    dones = np.array([0.0, 0.0, 1.0])
    next_probs = np.array([[0.5, 0.5], [1.0, 0.0], [0.3, 0.7]])
    next_q = np.array([[2.0, 4.0], [-2.0, 9.0], [5.0, 5.0]])
    q_taken = np.array([3.0, 1.0, 0.0])
    y = losses.critic_targets(rewards, dones, next_probs, next_q, discount=0.5)
    assert y == pytest.approx([2.5, -1.0, 2.0])
    loss = losses.critic_loss_value(q_taken, y)
    assert loss == pytest.approx((0.25 + 4.0 + 4.0) / 3)


def test_actor_loss_concentrated_on_argmax():
    q = np.array([[1.0, 7.0, 3.0]])
    probs = np.array([[0.0, 1.0, 0.0]])
    assert losses.actor_loss_online_value(probs, q) == pytest.approx(-7.0)


def test_actor_loss_uniform_is_negative_mean_q():
    q = np.array([[2.0, 4.0, 6.0]])
    probs = np.full((1, 3), 1 / 3)
    assert losses.actor_loss_online_value(probs, q) == pytest.approx(-4.0)


def test_actor_loss_fixture_with_entropy():
    probs = np.array([[0.5, 0.5]])
    q = np.array([[1.0, 3.0]])
    base = losses.actor_loss_online_value(probs, q)
    assert base == pytest.approx(-2.0)
    with_entropy = losses.actor_loss_online_value(probs, q, entropy_coeff=0.1)
    assert with_entropy == pytest.approx(-2.0 - 0.1 * np.log(2))


def test_advantage_uniform_policy_constant_q_is_zero():
    probs = np.full((2, 4), 0.25)
    q = np.full((2, 4), 3.0)
    adv = losses.estimate_advantage(probs, q, np.array([1, 2]))
    assert adv == pytest.approx([0.0, 0.0])


def test_advantage_one_hot_q_algebra():
    # Q one-hot at the taken action: A = Q(a) - pi(a) Q(a) = Q(a) (1 - pi(a))
    probs = np.array([[0.6, 0.4]])
    q = np.array([[5.0, 0.0]])
    adv = losses.estimate_advantage(probs, q, np.array([0]))
    assert adv == pytest.approx([5.0 * (1 - 0.6)])


def test_advantage_sampled_baseline_unbiased():
    rng = np.random.default_rng(0)
    probs = np.array([[0.2, 0.3, 0.5]])
    q = np.array([[1.0, -2.0, 4.0]])
    exact = losses.estimate_advantage(probs, q, np.array([2]))
    draws = [losses.estimate_advantage(probs, q, np.array([2]), k=1, rng=rng)[0]
             for _ in range(4000)]
    assert np.mean(draws) == pytest.approx(exact[0], abs=0.1)


def test_advantage_requires_rng_for_sampling():
    with pytest.raises(ValueError):
        losses.estimate_advantage(np.full((1, 2), 0.5), np.zeros((1, 2)),
                                  np.array([0]), k=2)


def test_offline_bc_matching_one_hot_is_zero():
    log_probs = np.log(np.array([[1.0 - 1e-12, 1e-12]]))
    loss = losses.actor_loss_offline_value(log_probs, np.array([0]), None, "bc")
    assert loss == pytest.approx(0.0, abs=1e-9)


def test_offline_crr_all_nonpositive_advantage_is_zero():
    log_probs = np.log(np.array([[0.4, 0.6], [0.9, 0.1]]))
    adv = np.array([-1.0, 0.0])
    loss = losses.actor_loss_offline_value(log_probs, np.array([0, 1]), adv, "crr")
    assert loss == 0.0


def test_offline_crr_mixed_fixture():
    # only the first row (positive advantage) contributes: -log(0.4) / 2
    log_probs = np.log(np.array([[0.4, 0.6], [0.9, 0.1]]))
    adv = np.array([2.0, -3.0])
    loss = losses.actor_loss_offline_value(log_probs, np.array([0, 1]), adv, "crr")
    assert loss == pytest.approx(-np.log(0.4) / 2)


def test_crr_equals_bc_when_all_advantages_positive():
    rng = np.random.default_rng(1)
    log_probs = np.log(rng.dirichlet(np.ones(4), size=8))
    actions = rng.integers(0, 4, size=8)
    adv = rng.uniform(0.1, 5.0, size=8)
    assert losses.actor_loss_offline_value(log_probs, actions, adv, "crr") == \
        pytest.approx(losses.actor_loss_offline_value(log_probs, actions, None, "bc"))


def test_graph_losses_match_value_helpers():
    rng = np.random.default_rng(2)
    batch, actions_n = 6, 4
    logits_data = rng.normal(size=(batch, actions_n))
    q_data = rng.normal(size=(batch, actions_n))
    actions = rng.integers(0, actions_n, size=batch)
    targets = rng.normal(size=batch)

    logits = ad.parameter(logits_data)
    probs = np.exp(logits_data - logits_data.max(-1, keepdims=True))
    probs /= probs.sum(-1, keepdims=True)
    log_probs = np.log(probs)

    q_param = ad.parameter(q_data)
    graph = losses.critic_loss_graph(q_param, actions, targets)
    assert graph.data.item() == pytest.approx(
        losses.critic_loss_value(q_data[np.arange(batch), actions], targets))

    graph = losses.actor_loss_online_graph(logits, q_data, entropy_coeff=0.05)
    assert graph.data.item() == pytest.approx(
        losses.actor_loss_online_value(probs, q_data, entropy_coeff=0.05))

    graph = losses.actor_loss_offline_graph(logits, actions, "bc")
    assert graph.data.item() == pytest.approx(
        losses.actor_loss_offline_value(log_probs, actions, None, "bc"))

    adv = losses.estimate_advantage(probs, q_data, actions)
    graph = losses.actor_loss_offline_graph(logits, actions, "crr", advantages=adv)
    assert graph.data.item() == pytest.approx(
        losses.actor_loss_offline_value(log_probs, actions, adv, "crr"))


def test_losses_nonnegative_where_required():
    rng = np.random.default_rng(3)
    q_taken = rng.normal(size=16)
    targets = rng.normal(size=16)
    assert losses.critic_loss_value(q_taken, targets) >= 0.0
    log_probs = np.log(rng.dirichlet(np.ones(5), size=16))
    actions = rng.integers(0, 5, size=16)
    assert losses.actor_loss_offline_value(log_probs, actions, None, "bc") >= 0.0
    adv = rng.normal(size=16)
    assert losses.actor_loss_offline_value(log_probs, actions, adv, "crr") >= 0.0


# -- replay buffer ---------------------------------------------------------------

def fake_transition(i, env):
    obs = env.observe()
    return Transition(obs, i % env.config.n_actions, float(i), obs, False, "x")


def test_replay_buffer_ring_semantics():
    env = small_env(jobs=[])
    env.reset(seed=0)
    buffer = ReplayBuffer(capacity=5)
    for i in range(8):
        buffer.add(fake_transition(i, env))
    assert len(buffer) == 5
    assert buffer.inserted == 8
    rewards = sorted(tr.reward for tr in buffer._items)
    assert rewards == [3.0, 4.0, 5.0, 6.0, 7.0]


def test_replay_buffer_uniform_sampling():
    env = small_env(jobs=[])
    env.reset(seed=0)
    buffer = ReplayBuffer(capacity=10)
    for i in range(10):
        buffer.add(fake_transition(i, env))
    rng = np.random.default_rng(7)
    counts = np.zeros(10)
    draws = 120_000
    for tr in buffer.sample(draws, rng):
        counts[int(tr.reward)] += 1
    freqs = counts / draws
    assert np.all(np.abs(freqs - 0.1) < 0.005)


def test_replay_buffer_empty_sample_raises():
    with pytest.raises(ValueError):
        ReplayBuffer(4).sample(2, np.random.default_rng(0))


def test_dataset_round_trip(tmp_path):
    env = synthetic_env(episode_length=16)
    transitions = collect_rollouts(env, HeuristicPolicy("sjf"), episodes=2, seed=4)
    path = str(tmp_path / "data.jsonl")
    save_dataset(path, transitions, header={"config_hash": "abc"})
    loaded, header = load_dataset(path)
    assert header["config_hash"] == "abc"
    assert header["size"] == len(transitions)
    assert len(loaded) == len(transitions)
    for a, b in zip(transitions, loaded):
        assert a.action == b.action and a.reward == b.reward and a.done == b.done
        assert a.policy == b.policy
        assert np.array_equal(a.obs.grid_channels, b.obs.grid_channels)
        assert np.array_equal(a.obs.ready_jobs, b.obs.ready_jobs)
        assert a.obs.current_time == b.obs.current_time
        assert np.array_equal(a.next_obs.grid_channels, b.next_obs.grid_channels)


def test_load_dataset_rejects_other_files(tmp_path):
    path = tmp_path / "not_data.jsonl"
    path.write_text('{"kind": "something-else"}\n')
    with pytest.raises(ValueError):
        load_dataset(str(path))


# -- rollout collection -----------------------------------------------------------

def test_collect_rollouts_empty():
    env = synthetic_env()
    assert collect_rollouts(env, HeuristicPolicy("sjf"), episodes=0) == []


def test_collect_rollouts_labels_and_contiguity():
    env = synthetic_env(episode_length=24)
    transitions = collect_rollouts(env, HeuristicPolicy("qos"), episodes=2, seed=1)
    assert all(tr.policy == "qos" for tr in transitions)
    done_indices = [i for i, tr in enumerate(transitions) if tr.done]
    assert len(done_indices) == 2
    assert done_indices[-1] == len(transitions) - 1


def test_collect_rollouts_size_band_twenty_resources():
    # 20 rollouts on a 20-resource cluster land in the 100k-200k sample band
    env = synthetic_env(cpu=10, gpu=10, episode_length=6000, count=2400,
                        load=1.0)
    transitions = collect_rollouts(env, HeuristicPolicy("sjf"), episodes=20,
                                   seed=8)
    assert 100_000 <= len(transitions) <= 200_000
    assert all(tr.policy == "sjf" for tr in transitions)


def test_collect_rollouts_mixes_policies_evenly():
    env = synthetic_env(episode_length=24)
    policies = [HeuristicPolicy("sjf"), HeuristicPolicy("fcfs")]
    transitions = collect_rollouts(env, policies, episodes=4, seed=2)
    labels = {tr.policy for tr in transitions}
    assert labels == {"sjf", "fcfs"}
    episodes_by_label = {"sjf": 0, "fcfs": 0}
    for tr in transitions:
        if tr.done:
            episodes_by_label[tr.policy] += 1
    assert episodes_by_label == {"sjf": 2, "fcfs": 2}


# -- action agreement ---------------------------------------------------------------

def test_agreement_policy_with_itself_is_one():
    env = synthetic_env(episode_length=32)
    sjf = HeuristicPolicy("sjf")
    assert action_agreement(sjf, sjf, env, episodes=2, seed=3) == 1.0


def test_agreement_uniform_random_near_chance():
    env = synthetic_env(episode_length=48, n=5)
    uniform = UniformRandomPolicy(seed=5)
    agreement = action_agreement(uniform, HeuristicPolicy("sjf"), env,
                                 episodes=30, seed=6)
    assert abs(agreement - 1 / 7) < 0.03


# -- training loops -------------------------------------------------------------

def quick_config(**overrides):
    defaults = dict(batch_size=8, learning_rate=1e-3, discount=0.9, total_steps=0,
                    warmup_steps=4, update_interval=1, eval_interval=0,
                    buffer_capacity=512, reward_scale=0.02, seed=3,
                    eval_episodes=2)
    defaults.update(overrides)
    return TrainingConfig(**defaults)


def test_train_online_zero_steps_returns_initial_params():
    env = synthetic_env(episode_length=16)
    config = quick_config(total_steps=0)
    result = train_online(env, config)
    fresh = AgentNets(network_config_for_env(env.config, seed=config.seed))
    for name, tensor in result.nets.named_params().items():
        assert np.array_equal(tensor.data, fresh.named_params()[name].data)
    assert result.curve == []


def test_train_online_curve_length():
    env = synthetic_env(episode_length=16)
    config = quick_config(total_steps=60, eval_interval=20, warmup_steps=10)
    result = train_online(env, config)
    assert len(result.curve) == 3
    assert [row["step"] for row in result.curve] == [20, 40, 60]
    for row in result.curve:
        assert set(row) == {"step", "eval_total_job_value", "critic_loss",
                            "actor_loss"}


def test_train_online_deterministic():
    def run():
        env = synthetic_env(episode_length=16)
        config = quick_config(total_steps=40, eval_interval=20, warmup_steps=8)
        result = train_online(env, config)
        return result.curve, {n: t.data.copy()
                              for n, t in result.nets.named_params().items()}
    curve_a, params_a = run()
    curve_b, params_b = run()
    assert curve_a == curve_b
    for name in params_a:
        assert np.array_equal(params_a[name], params_b[name])


def test_train_online_requires_online_flag():
    env = synthetic_env()
    with pytest.raises(ValueError):
        train_online(env, quick_config(online=False))


def test_train_offline_bc_converges_on_repeated_transition():
    env = small_env(jobs=[make_job(id=1, duration=2, cpu_req=1)], n=3)
    obs = env.reset(seed=0)
    result = env.step(0)
    transition = Transition(obs, 0, result.reward, result.observation, False, "fix")
    net_config = network_config_for_env(env.config, seed=1)
    config = quick_config(total_steps=300, batch_size=4, learning_rate=3e-3)
    trained = train_offline([transition], config, "bc", net_config)
    probs = trained.nets.policy_probs(obs)
    assert probs[0] > 0.99


def test_train_offline_rejects_bad_mode_and_empty_dataset():
    net_config = network_config_for_env(small_env(jobs=[]).config)
    with pytest.raises(ValueError):
        train_offline([], quick_config(total_steps=1), "bc", net_config)
    env = synthetic_env(episode_length=8)
    data = collect_rollouts(env, HeuristicPolicy("sjf"), 1, seed=0)
    with pytest.raises(ValueError):
        train_offline(data, quick_config(total_steps=1), "dagger", net_config)


def test_train_offline_deterministic_per_seed():
    env = synthetic_env(episode_length=16)
    data = collect_rollouts(env, HeuristicPolicy("sjf"), episodes=2, seed=9)
    net_config = network_config_for_env(env.config, seed=2)

    def run():
        result = train_offline(data, quick_config(total_steps=30), "crr", net_config)
        return {n: t.data.copy() for n, t in result.nets.named_params().items()}
    a, b = run(), run()
    for name in a:
        assert np.array_equal(a[name], b[name])


def test_drl_policy_respects_mask():
    env = synthetic_env(episode_length=16)
    obs = env.reset(seed=0)
    nets = AgentNets(network_config_for_env(env.config, seed=0))
    policy = DrlPolicy(nets, greedy=True)
    mask = np.zeros(env.config.n_actions, dtype=bool)
    mask[-1] = True
    assert policy.select(obs, mask) == env.config.n_actions - 1


def test_run_episode_returns_metrics():
    env = synthetic_env(episode_length=16)
    metrics = run_episode(env, HeuristicPolicy("hvf"), seed=2)
    assert set(metrics) == {"total_job_value", "completed_jobs", "qos_violations",
                            "mean_utilization", "invalid_action_rate", "suspensions"}
    assert metrics["invalid_action_rate"] == 0.0
