"""Encoder/actor/critic networks over scheduling observations.

The encoder runs the occupancy image through a small convolution stack and
the ready-pool vectors through a dense stack, layer-normalizes both branch
outputs, and merges them into a 128-dimensional state embedding.  The actor
maps the embedding to action probabilities (ready slots + suspend + no_op);
the critic maps it to one action-value estimate per action.

Job features are made scale-free before entering the network: times are
expressed relative to the current timestep in units of the planning horizon,
demands as a fraction of capacity, and values through a fixed value_scale.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ..env import Observation
from . import autodiff as ad
from .autodiff import Tensor
from .convkernels import polyak
from .layers import MLP, Conv2d, Dense, LayerNorm

CHECKPOINT_MAGIC = b"GSCKPT1\n"


@dataclass(frozen=True)
class NetworkConfig:
    cpu_count: int
    gpu_count: int
    time_horizon: int
    ready_pool_size: int
    job_features: int = 8
    conv_channels: tuple[int, ...] = (16, 32)
    conv_kernel: int = 3
    job_branch_dim: int = 64
    embed_dim: int = 128
    actor_hidden: tuple[int, ...] = (128, 128)
    critic_hidden: tuple[int, ...] = (128, 128)
    value_scale: float = 0.01
    seed: int = 0

    @property
    def n_actions(self) -> int:
        return self.ready_pool_size + 2

    @property
    def grid_width(self) -> int:
        return self.cpu_count + self.gpu_count

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def featurize(observations: Sequence[Observation], config: NetworkConfig
              ) -> tuple[np.ndarray, np.ndarray]:
    """Stack observations into network inputs (grid, job-feature) batches."""
    batch = len(observations)
    grid = np.stack([o.grid_channels for o in observations]).astype(np.float64)
    raw = np.stack([o.ready_jobs for o in observations])
    times = np.asarray([o.current_time for o in observations], dtype=np.float64)
    horizon = float(config.time_horizon)
    t = times[:, None]
    feats = np.zeros_like(raw)
    feats[..., 0] = raw[..., 0] * config.value_scale
    feats[..., 1] = raw[..., 1]
    feats[..., 2] = (raw[..., 2] - t) / horizon
    feats[..., 3] = (t - raw[..., 3]) / horizon
    feats[..., 4] = (raw[..., 4] - t) / horizon
    feats[..., 5] = raw[..., 5] / horizon
    feats[..., 6] = raw[..., 6] / max(config.cpu_count, 1)
    feats[..., 7] = raw[..., 7] / max(config.gpu_count, 1)
    occupied = raw[..., 0] > 0
    feats *= occupied[..., None]
    return grid, feats


class EncoderNet:
    """Grid + job branches merged into the state embedding."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.config = config
        channels = (2,) + tuple(config.conv_channels)
        self.convs = [
            Conv2d(channels[i], channels[i + 1], config.conv_kernel, rng,
                   name=f"encoder.conv{i}", padding=config.conv_kernel // 2)
            for i in range(len(config.conv_channels))
        ]
        flat = config.conv_channels[-1] * config.time_horizon * config.grid_width
        self.grid_dense = Dense(flat, config.embed_dim, rng, "encoder.grid_dense")
        self.grid_norm = LayerNorm(config.embed_dim, "encoder.grid_norm")
        job_in = config.ready_pool_size * config.job_features
        self.job_dense1 = Dense(job_in, config.job_branch_dim, rng, "encoder.job_dense1")
        self.job_dense2 = Dense(config.job_branch_dim, config.job_branch_dim, rng,
                                "encoder.job_dense2")
        self.job_norm = LayerNorm(config.job_branch_dim, "encoder.job_norm")
        self.merge = Dense(config.embed_dim + config.job_branch_dim, config.embed_dim,
                           rng, "encoder.merge")

    def __call__(self, grid: Tensor, jobs: Tensor) -> Tensor:
        g = grid
        for conv in self.convs:
            g = ad.tanh(conv(g))
        g = ad.reshape(g, (g.shape[0], -1))
        g = self.grid_norm(ad.tanh(self.grid_dense(g)))
        j = ad.reshape(jobs, (jobs.shape[0], -1))
        j = ad.tanh(self.job_dense1(j))
        j = self.job_norm(ad.tanh(self.job_dense2(j)))
        return ad.tanh(self.merge(ad.concat([g, j], axis=-1)))

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for conv in self.convs:
            out.extend(conv.params())
        for part in (self.grid_dense, self.grid_norm, self.job_dense1,
                     self.job_dense2, self.job_norm, self.merge):
            out.extend(part.params())
        return out


def np_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=axis, keepdims=True)


def masked_probs(probs: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    """Renormalize probabilities over valid actions (no_op is always valid)."""
    if mask is None:
        return probs
    out = probs * mask
    total = out.sum()
    if total <= 0.0:
        out = mask.astype(np.float64)
        total = out.sum()
    return out / total


class AgentNets:
    """Encoder psi, actor theta, critic phi with shared embedding width."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoder = EncoderNet(config, rng)
        self.actor = MLP(config.embed_dim, config.actor_hidden, config.n_actions,
                         rng, "actor")
        self.critic = MLP(config.embed_dim, config.critic_hidden, config.n_actions,
                          rng, "critic")

    # forward passes --------------------------------------------------------

    def embed(self, grid: np.ndarray, jobs: np.ndarray) -> Tensor:
        return self.encoder(ad.constant(grid), ad.constant(jobs))

    def embed_obs(self, observations: Sequence[Observation]) -> Tensor:
        grid, jobs = featurize(observations, self.config)
        return self.embed(grid, jobs)

    def actor_logits(self, embedding: Tensor) -> Tensor:
        return self.actor(embedding)

    def actor_probs(self, embedding: Tensor) -> Tensor:
        return ad.softmax(self.actor_logits(embedding), axis=-1)

    def critic_q(self, embedding: Tensor) -> Tensor:
        return self.critic(embedding)

    def policy_probs(self, obs: Observation) -> np.ndarray:
        emb = self.embed_obs([obs])
        return np_softmax(self.actor_logits(emb).data)[0]

    def act(self, obs: Observation, mask: Optional[np.ndarray] = None,
            rng: Optional[np.random.Generator] = None, greedy: bool = True) -> int:
        probs = masked_probs(self.policy_probs(obs), mask)
        if greedy or rng is None:
            return int(np.argmax(probs))
        return int(rng.choice(len(probs), p=probs))

    # parameter plumbing -----------------------------------------------------

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, tensor in (self.encoder.params() + self.actor.params()
                             + self.critic.params()):
            out[name] = tensor
        return out

    def group_params(self, group: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_params().items() if k.startswith(group)}

    def zero_grads(self) -> None:
        for tensor in self.named_params().values():
            tensor.zero_grad()

    def clone(self) -> "AgentNets":
        other = AgentNets(self.config)
        for name, tensor in other.named_params().items():
            tensor.data[...] = self.named_params()[name].data
        return other

    def polyak_update(self, source: "AgentNets", tau: float,
                      groups: tuple[str, ...] = ("encoder", "critic")) -> None:
        """Track `source` parameters; only the groups the bootstrap target uses."""
        src = source.named_params()
        for name, tensor in self.named_params().items():
            if not name.startswith(groups):
                continue
            polyak(tensor.data.reshape(-1), src[name].data.reshape(-1), tau)

    # checkpointing -----------------------------------------------------------

    def save(self, path: str, extra: Optional[dict] = None) -> None:
        params = self.named_params()
        manifest = {
            "config": asdict(self.config),
            "config_hash": self.config.fingerprint(),
            "params": [{"name": n, "shape": list(t.data.shape)} for n, t in params.items()],
            "extra": extra or {},
        }
        blob = json.dumps(manifest, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for tensor in params.values():
                fh.write(tensor.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> tuple["AgentNets", dict]:
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"{path} is not a scheduler checkpoint")
            (length,) = struct.unpack("<Q", fh.read(8))
            manifest = json.loads(fh.read(length).decode())
            cfg_dict = dict(manifest["config"])
            for key in ("conv_channels", "actor_hidden", "critic_hidden"):
                cfg_dict[key] = tuple(cfg_dict[key])
            config = NetworkConfig(**cfg_dict)
            nets = cls(config)
            params = nets.named_params()
            for entry in manifest["params"]:
                tensor = params[entry["name"]]
                expect = tuple(entry["shape"])
                if tensor.data.shape != expect:
                    raise ValueError(f"checkpoint shape mismatch for {entry['name']}")
                count = int(np.prod(expect)) if expect else 1
                raw = fh.read(count * 8)
                tensor.data[...] = np.frombuffer(raw, dtype="<f8").reshape(expect)
        return nets, manifest
