import numpy as np
import pytest

from greensched.env import Observation
from greensched.nn import Adam, AgentNets, NetworkConfig, featurize, masked_probs, np_softmax
from greensched.nn import autodiff as ad
from greensched.nn.gradcheck import (
    composite_check,
    layer_checks,
    negative_control,
    small_network_config,
)

CFG = NetworkConfig(cpu_count=4, gpu_count=2, time_horizon=8, ready_pool_size=3, seed=1)


def random_obs(rng, config=CFG):
    grid = rng.integers(0, 2, size=(2, config.time_horizon, config.grid_width))
    jobs = np.zeros((config.ready_pool_size, config.job_features))
    for i in range(rng.integers(0, config.ready_pool_size + 1)):
        jobs[i] = [float(rng.integers(1, 50)), 0.5, 10.0, 0.0, 8.0,
                   float(rng.integers(1, 8)), 2.0, 1.0]
    return Observation(grid_channels=grid.astype(np.uint8), ready_jobs=jobs,
                       current_time=int(rng.integers(0, 20)))


def test_embedding_dimension_is_128_by_default():
    config = NetworkConfig(cpu_count=5, gpu_count=5, time_horizon=24, ready_pool_size=5)
    nets = AgentNets(config)
    rng = np.random.default_rng(0)
    emb = nets.embed_obs([random_obs(rng, config)])
    assert emb.shape == (1, 128)
    assert config.embed_dim == 128


def test_identical_observations_identical_embeddings():
    nets = AgentNets(CFG)
    rng = np.random.default_rng(1)
    obs = random_obs(rng)
    a = nets.embed_obs([obs]).data
    b = nets.embed_obs([obs]).data
    assert np.array_equal(a, b)


def test_all_zero_observation_finite():
    nets = AgentNets(CFG)
    obs = Observation(grid_channels=np.zeros((2, 8, 6), dtype=np.uint8),
                      ready_jobs=np.zeros((3, 8)), current_time=0)
    emb = nets.embed_obs([obs])
    assert np.isfinite(emb.data).all()
    assert np.isfinite(nets.critic_q(emb).data).all()


def test_actor_probabilities_normalized():
    nets = AgentNets(CFG)
    rng = np.random.default_rng(2)
    emb = nets.embed_obs([random_obs(rng) for _ in range(6)])
    probs = nets.actor_probs(emb).data
    assert probs.shape == (6, CFG.n_actions)
    assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-6)
    assert (probs >= 0).all()


def test_uniform_logits_give_uniform_probs():
    probs = np_softmax(np.zeros((2, 5)))
    assert np.allclose(probs, 0.2)


def test_masked_probs_single_valid_action():
    probs = np.array([0.2, 0.3, 0.4, 0.1])
    mask = np.array([False, False, True, False])
    out = masked_probs(probs, mask)
    assert out == pytest.approx([0.0, 0.0, 1.0, 0.0])


def test_masked_probs_zero_mass_falls_back_to_mask():
    probs = np.array([0.5, 0.5, 0.0, 0.0])
    mask = np.array([False, False, False, True])
    assert masked_probs(probs, mask) == pytest.approx([0.0, 0.0, 0.0, 1.0])


def test_critic_width_and_determinism():
    nets = AgentNets(CFG)
    rng = np.random.default_rng(3)
    obs = random_obs(rng)
    q1 = nets.critic_q(nets.embed_obs([obs])).data
    q2 = nets.critic_q(nets.embed_obs([obs])).data
    assert q1.shape == (1, CFG.n_actions)
    assert np.array_equal(q1, q2)


def test_fresh_critic_bounded_by_init_scale():
    # tanh hidden activations are in [-1, 1] and head weights are bounded by
    # 1/sqrt(fan_in), so |q| <= sqrt(fan_in) for a zero-bias head
    nets = AgentNets(CFG)
    rng = np.random.default_rng(4)
    emb = nets.embed_obs([random_obs(rng) for _ in range(16)])
    q = nets.critic_q(emb).data
    bound = np.sqrt(CFG.critic_hidden[-1])
    assert np.abs(q).max() <= bound


def test_act_greedy_and_sampled_respect_mask():
    nets = AgentNets(CFG)
    rng = np.random.default_rng(5)
    obs = random_obs(rng)
    mask = np.zeros(CFG.n_actions, dtype=bool)
    mask[[1, CFG.n_actions - 1]] = True
    for _ in range(20):
        a = nets.act(obs, mask, rng=rng, greedy=False)
        assert a in (1, CFG.n_actions - 1)
    assert nets.act(obs, mask, greedy=True) in (1, CFG.n_actions - 1)


def test_featurize_zero_slots_stay_zero():
    rng = np.random.default_rng(6)
    obs = random_obs(rng)
    obs.ready_jobs[1:] = 0.0
    _, jobs = featurize([obs], CFG)
    assert np.all(jobs[0, 1:] == 0.0)


def test_featurize_times_are_relative():
    obs = Observation(grid_channels=np.zeros((2, 8, 6), dtype=np.uint8),
                      ready_jobs=np.zeros((3, 8)), current_time=10)
    obs.ready_jobs[0] = [20.0, 0.8, 18.0, 4.0, 14.0, 4.0, 2.0, 1.0]
    _, jobs = featurize([obs], CFG)
    horizon = CFG.time_horizon
    assert jobs[0, 0, 2] == pytest.approx((18.0 - 10.0) / horizon)
    assert jobs[0, 0, 3] == pytest.approx((10.0 - 4.0) / horizon)
    assert jobs[0, 0, 4] == pytest.approx((14.0 - 10.0) / horizon)


def test_clone_is_deep_and_polyak_tracks():
    nets = AgentNets(CFG)
    target = nets.clone()
    name = next(iter(nets.named_params()))
    nets.named_params()[name].data += 1.0
    assert not np.allclose(target.named_params()[name].data,
                           nets.named_params()[name].data)
    before = np.array(target.named_params()[name].data)
    target.polyak_update(nets, tau=0.5)
    after = target.named_params()[name].data
    expected = 0.5 * before + 0.5 * nets.named_params()[name].data
    assert np.allclose(after, expected)


def test_polyak_only_touches_bootstrap_groups():
    nets = AgentNets(CFG)
    target = nets.clone()
    for tensor in nets.named_params().values():
        tensor.data += 1.0
    actor_before = np.array(target.group_params("actor")["actor.head.weight"].data)
    target.polyak_update(nets, tau=0.3)
    assert np.array_equal(actor_before,
                          target.group_params("actor")["actor.head.weight"].data)
    enc_name = "encoder.merge.weight"
    assert not np.array_equal(target.named_params()[enc_name].data,
                              nets.named_params()[enc_name].data - 1.0)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    nets = AgentNets(CFG)
    path = str(tmp_path / "nets.ckpt")
    nets.save(path, extra={"note": "test"})
    loaded, manifest = AgentNets.load(path)
    for name, tensor in nets.named_params().items():
        assert np.array_equal(tensor.data, loaded.named_params()[name].data)
    assert manifest["extra"]["note"] == "test"
    assert manifest["config_hash"] == CFG.fingerprint()


def test_checkpoint_files_byte_identical(tmp_path):
    a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    AgentNets(CFG).save(a)
    AgentNets(CFG).save(b)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        AgentNets.load(str(path))


# -- optimizer ----------------------------------------------------------------

def test_adam_zero_gradient_no_change():
    nets = AgentNets(small_network_config(0))
    before = {n: np.array(t.data) for n, t in nets.named_params().items()}
    optimizer = Adam(learning_rate=0.1)
    nets.zero_grads()
    optimizer.step(nets.named_params())
    for name, tensor in nets.named_params().items():
        assert np.array_equal(before[name], tensor.data)


def test_adam_descends_quadratic():
    x = ad.parameter(np.array([4.0]))
    optimizer = Adam(learning_rate=0.1)
    losses = []
    for _ in range(50):
        x.zero_grad()
        loss = ad.mul(x, x)
        loss.backward()
        losses.append(loss.data.item())
        optimizer.step({"x": x})
    assert losses[-1] < losses[0] * 0.1


def test_adam_deterministic():
    def run():
        x = ad.parameter(np.array([1.0, -2.0, 3.0]))
        optimizer = Adam(learning_rate=0.05)
        for _ in range(20):
            x.zero_grad()
            ad.reduce_sum(ad.mul(x, x)).backward()
            optimizer.step({"x": x})
        return np.array(x.data)
    assert np.array_equal(run(), run())


# -- gradient checking ---------------------------------------------------------

def test_all_layer_checks_pass():
    for result in layer_checks(seed=0):
        assert result.passed, (result.name, result.max_rel_error)


def test_composite_check_meets_tolerance_and_sample_count():
    result = composite_check(seed=0)
    assert result.max_rel_error < 1e-4
    assert result.checked >= 200


def test_negative_control_detected():
    result = negative_control(seed=0)
    assert result.max_rel_error > 1e-2


def test_gradcheck_repeatable():
    a = composite_check(seed=5)
    b = composite_check(seed=5)
    assert a.max_rel_error == b.max_rel_error
    assert a.checked == b.checked


def test_encoder_grad_routing():
    # critic loss reaches the encoder; actor loss (detached embedding) must not
    config = small_network_config(3)
    nets = AgentNets(config)
    rng = np.random.default_rng(3)
    grid = rng.integers(0, 2, size=(4, 2, config.time_horizon, config.grid_width))
    jobs = rng.normal(size=(4, config.ready_pool_size, config.job_features))
    actions = np.array([0, 1, 2, 3])

    nets.zero_grads()
    emb = nets.embed(grid.astype(float), jobs)
    q_taken = ad.take_actions(nets.critic_q(emb), actions)
    ad.reduce_mean(ad.power(q_taken, 2.0)).backward()
    enc_grads = [t.grad for t in nets.group_params("encoder").values()]
    assert any(g is not None and np.abs(g).sum() > 0 for g in enc_grads)

    nets.zero_grads()
    emb = nets.embed(grid.astype(float), jobs)
    logits = nets.actor_logits(ad.constant(emb.data))
    ad.reduce_mean(ad.take_actions(ad.log_softmax(logits), actions)).backward()
    for tensor in nets.group_params("encoder").values():
        assert tensor.grad is None or np.abs(tensor.grad).sum() == 0
    actor_grads = [t.grad for t in nets.group_params("actor").values()]
    assert any(g is not None and np.abs(g).sum() > 0 for g in actor_grads)
