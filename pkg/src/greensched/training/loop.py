"""Training loops: online actor-critic and offline cloning/regression.

One update step samples a batch, regresses the critic on exact-expectation
one-step targets (stop-gradient on the bootstrap term, optionally through
slowly-tracking target copies), and improves the actor.  Gradient routing
follows the stability rule baked into the architecture: the encoder learns
with the critic, never with the actor, so every actor loss sees a detached
embedding.  Online mode interleaves environment steps; offline mode samples
only the provided transitions and either clones every logged action (bc) or
just the positive-advantage ones (crr).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..env import DatacenterEnv, EnvConfig, Observation
from ..nn import autodiff as ad
from ..nn.networks import AgentNets, NetworkConfig, featurize, masked_probs, np_softmax
from ..nn.optim import Adam
from . import losses
from .replay import ReplayBuffer, Transition


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 128
    learning_rate: float = 3e-4
    discount: float = 0.99
    online: bool = True
    advantage_samples: Optional[int] = None  # None: exact expectation baseline
    total_steps: int = 200_000
    entropy_coeff: float = 0.01
    target_smoothing: Optional[float] = 0.005  # None: stop-gradient only
    seed: int = 0
    buffer_capacity: int = 200_000
    update_interval: int = 1
    warmup_steps: int = 1_000
    reward_scale: float = 1.0
    eval_interval: int = 5_000
    eval_episodes: int = 10

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.advantage_samples is not None and self.advantage_samples < 1:
            raise ValueError("advantage_samples must be >= 1 or None for exact")
        if self.total_steps < 0 or self.update_interval < 1:
            raise ValueError("total_steps must be >= 0 and update_interval >= 1")
        if self.buffer_capacity < 1 or self.reward_scale <= 0:
            raise ValueError("buffer_capacity must be >= 1 and reward_scale > 0")


@dataclass
class TrainResult:
    nets: AgentNets
    curve: list[dict] = field(default_factory=list)


def derive_seed(base: int, stream: int, index: int = 0) -> int:
    """Stable per-purpose seed derivation (episode streams, eval seeds...)."""
    return int(np.random.SeedSequence([base, stream, index]).generate_state(1)[0])


def network_config_for_env(env_config: EnvConfig, seed: int = 0,
                           value_scale: float = 0.01, **overrides) -> NetworkConfig:
    return NetworkConfig(
        cpu_count=env_config.cpu_count,
        gpu_count=env_config.gpu_count,
        time_horizon=env_config.time_horizon,
        ready_pool_size=env_config.ready_pool_size,
        value_scale=value_scale,
        seed=seed,
        **overrides,
    )


class DrlPolicy:
    """Learned policy over the shared observation/action interface."""

    name = "drl"

    def __init__(self, nets: AgentNets, greedy: bool = True,
                 seed: Optional[int] = None, use_mask: bool = True):
        self.nets = nets
        self.greedy = greedy
        self.use_mask = use_mask
        self.rng = np.random.default_rng(seed)

    def select(self, observation: Observation, mask: np.ndarray) -> int:
        return self.nets.act(observation, mask if self.use_mask else None,
                             rng=self.rng, greedy=self.greedy)


class _Learner:
    """One gradient update per call; owns optimizer and target copies."""

    def __init__(self, nets: AgentNets, config: TrainingConfig, mode: str):
        if mode not in ("online", "bc", "crr"):
            raise ValueError(f"unknown training mode: {mode!r}")
        self.nets = nets
        self.config = config
        self.mode = mode
        self.optimizer = Adam(config.learning_rate)
        self.targets = nets.clone() if config.target_smoothing is not None else None
        self.rng = np.random.default_rng(derive_seed(config.seed, 1))

    def update(self, batch: Sequence[Transition]) -> tuple[float, float]:
        cfg = self.config
        net_cfg = self.nets.config
        grid, jobs = featurize([tr.obs for tr in batch], net_cfg)
        grid2, jobs2 = featurize([tr.next_obs for tr in batch], net_cfg)
        actions = np.asarray([tr.action for tr in batch], dtype=int)
        rewards = np.asarray([tr.reward for tr in batch]) * cfg.reward_scale
        dones = np.asarray([tr.done for tr in batch], dtype=np.float64)

        # Bootstrap target: exact expectation over the policy at s', all under
        # stop-gradient (target copies when smoothing is enabled).
        frozen = self.targets if self.targets is not None else self.nets
        emb2 = frozen.embed(grid2, jobs2)
        next_q = frozen.critic_q(emb2).data
        next_probs = np_softmax(self.nets.actor_logits(emb2).data)
        targets = losses.critic_targets(rewards, dones, next_probs, next_q, cfg.discount)

        self.nets.zero_grads()
        emb = self.nets.embed(grid, jobs)
        q_values = self.nets.critic_q(emb)
        critic_loss = losses.critic_loss_graph(q_values, actions, targets)

        # Actor sees the embedding as data: encoder updates with the critic only.
        emb_detached = ad.constant(emb.data)
        logits = self.nets.actor_logits(emb_detached)
        if self.mode == "online":
            actor_loss = losses.actor_loss_online_graph(logits, q_values.data,
                                                        cfg.entropy_coeff)
        elif self.mode == "bc":
            actor_loss = losses.actor_loss_offline_graph(logits, actions, "bc")
        else:
            probs = np_softmax(logits.data)
            adv = losses.estimate_advantage(probs, q_values.data, actions,
                                            cfg.advantage_samples, self.rng)
            actor_loss = losses.actor_loss_offline_graph(logits, actions, "crr",
                                                         advantages=adv)

        total = ad.add(critic_loss, actor_loss)
        critic_val, actor_val = float(critic_loss.data), float(actor_loss.data)
        if not (np.isfinite(critic_val) and np.isfinite(actor_val)):
            raise TrainingDiverged(
                f"non-finite loss (critic={critic_val}, actor={actor_val}) "
                f"after {self.optimizer.step_count} updates")
        total.backward()
        self.optimizer.step(self.nets.named_params())
        if self.targets is not None:
            self.targets.polyak_update(self.nets, cfg.target_smoothing)
        return critic_val, actor_val


def run_episode(env: DatacenterEnv, policy, seed: int) -> dict:
    """Roll one policy-controlled episode; returns the episode metrics."""
    obs = env.reset(seed=seed)
    done = env.done
    while not done:
        mask = env.valid_action_mask()
        result = env.step(policy.select(obs, mask))
        obs, done = result.observation, result.done
    return env.metrics()


def evaluation_env(env: DatacenterEnv) -> DatacenterEnv:
    """Twin environment over the same workload and power sources."""
    return DatacenterEnv(env.config, env.workload, env.power_source, record_events=False)


def evaluate_policy(env: DatacenterEnv, policy, seeds: Sequence[int]) -> float:
    """Mean total job value of `policy` over the given episode seeds."""
    values = [run_episode(env, policy, seed)["total_job_value"] for seed in seeds]
    return float(np.mean(values))


def eval_seeds_for(config: TrainingConfig) -> list[int]:
    return [derive_seed(config.seed, 2, i) for i in range(config.eval_episodes)]


def train_online(env: DatacenterEnv, config: TrainingConfig,
                 net_config: Optional[NetworkConfig] = None) -> TrainResult:
    """Act-store-sample-update loop against a live environment."""
    if not config.online:
        raise ValueError("train_online requires config.online=True")
    net_config = net_config or network_config_for_env(env.config, seed=config.seed)
    nets = AgentNets(net_config)
    learner = _Learner(nets, config, mode="online")
    buffer = ReplayBuffer(config.buffer_capacity)
    sample_rng = np.random.default_rng(derive_seed(config.seed, 3))
    action_rng = np.random.default_rng(derive_seed(config.seed, 4))
    frozen_eval_seeds = eval_seeds_for(config)
    eval_env = evaluation_env(env)

    episode = 0
    obs = env.reset(seed=derive_seed(config.seed, 5, episode))
    curve: list[dict] = []
    last_critic, last_actor = 0.0, 0.0
    for step in range(1, config.total_steps + 1):
        mask = env.valid_action_mask()
        probs = masked_probs(nets.policy_probs(obs), mask)
        action = int(action_rng.choice(len(probs), p=probs))
        result = env.step(action)
        buffer.add(Transition(obs, action, result.reward, result.observation,
                              result.done, policy="drl"))
        if result.done:
            episode += 1
            obs = env.reset(seed=derive_seed(config.seed, 5, episode))
        else:
            obs = result.observation

        if (step >= config.warmup_steps and len(buffer) >= config.batch_size
                and step % config.update_interval == 0):
            last_critic, last_actor = learner.update(
                buffer.sample(config.batch_size, sample_rng))

        if config.eval_interval and step % config.eval_interval == 0:
            value = evaluate_policy(eval_env, DrlPolicy(nets, greedy=True),
                                    frozen_eval_seeds)
            curve.append({"step": step, "eval_total_job_value": value,
                          "critic_loss": last_critic, "actor_loss": last_actor})
    return TrainResult(nets=nets, curve=curve)


def train_offline(dataset: Sequence[Transition], config: TrainingConfig, mode: str,
                  net_config: NetworkConfig,
                  eval_env: Optional[DatacenterEnv] = None) -> TrainResult:
    """Same update loop fed only from the provided transitions."""
    if mode not in ("bc", "crr"):
        raise ValueError(f"offline mode must be 'bc' or 'crr', got {mode!r}")
    if not dataset and config.total_steps > 0:
        raise ValueError("offline training needs a nonempty dataset")
    nets = AgentNets(net_config)
    learner = _Learner(nets, config, mode=mode)
    buffer = ReplayBuffer(max(len(dataset), 1))
    buffer.extend(dataset)
    sample_rng = np.random.default_rng(derive_seed(config.seed, 3))
    frozen_eval_seeds = eval_seeds_for(config)

    curve: list[dict] = []
    last_critic, last_actor = 0.0, 0.0
    for step in range(1, config.total_steps + 1):
        last_critic, last_actor = learner.update(
            buffer.sample(config.batch_size, sample_rng))
        if config.eval_interval and step % config.eval_interval == 0:
            row = {"step": step, "critic_loss": last_critic, "actor_loss": last_actor}
            if eval_env is not None:
                row["eval_total_job_value"] = evaluate_policy(
                    eval_env, DrlPolicy(nets, greedy=True), frozen_eval_seeds)
            curve.append(row)
    return TrainResult(nets=nets, curve=curve)


def collect_rollouts(env: DatacenterEnv, policy, episodes: int,
                     seed: int = 0) -> list[Transition]:
    """Record every transition of policy-controlled episodes.

    `policy` may be a single policy or a sequence; sequences are cycled so
    the dataset is filled evenly from each member.
    """
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    policies = list(policy) if isinstance(policy, (list, tuple)) else [policy]
    out: list[Transition] = []
    for ep in range(episodes):
        active = policies[ep % len(policies)]
        label = getattr(active, "name", type(active).__name__)
        obs = env.reset(seed=derive_seed(seed, 6, ep))
        done = env.done
        while not done:
            mask = env.valid_action_mask()
            action = active.select(obs, mask)
            result = env.step(action)
            out.append(Transition(obs, action, result.reward, result.observation,
                                  result.done, policy=label))
            obs, done = result.observation, result.done
    return out


def action_agreement(policy, heuristic, env: DatacenterEnv, episodes: int,
                     seed: int = 0) -> float:
    """Fraction of heuristic-controlled steps where `policy` picks the same action."""
    matches = 0
    steps = 0
    for ep in range(episodes):
        obs = env.reset(seed=derive_seed(seed, 7, ep))
        done = env.done
        while not done:
            mask = env.valid_action_mask()
            chosen = heuristic.select(obs, mask)
            if policy.select(obs, mask) == chosen:
                matches += 1
            steps += 1
            result = env.step(chosen)
            obs, done = result.observation, result.done
    return matches / steps if steps else 0.0
