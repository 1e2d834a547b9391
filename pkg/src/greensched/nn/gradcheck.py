"""Central finite-difference validation of the analytic gradients.

Each check builds a scalar loss from a network fragment, backpropagates,
then perturbs a random sample of parameter entries by +-h and compares the
numeric slope against the accumulated gradient.  A deliberately miswired
dense layer serves as the negative control: the harness must flag it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import MLP, Conv2d, Dense, LayerNorm
from .networks import AgentNets, NetworkConfig

FD_STEP = 1e-4
PASS_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < PASS_TOLERANCE


def _relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic) + abs(numeric), 1e-6)
    return abs(analytic - numeric) / scale


def check_gradients(build_loss: Callable[[], Tensor],
                    params: dict[str, Tensor],
                    rng: np.random.Generator,
                    samples_per_param: int = 4,
                    max_total: int = 0) -> tuple[float, int]:
    """Compare backprop against central differences on random entries.

    Returns (max relative error, entries checked).  `build_loss` must be a
    pure function of the current parameter data.
    """
    loss = build_loss()
    for tensor in params.values():
        tensor.zero_grad()
    loss.backward()
    analytic = {name: (np.array(t.grad) if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.items()}
    worst = 0.0
    checked = 0
    budget = max_total or sum(samples_per_param for _ in params)
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        count = min(samples_per_param, flat.size)
        for idx in rng.choice(flat.size, size=count, replace=False):
            if checked >= budget:
                break
            original = flat[idx]
            flat[idx] = original + FD_STEP
            up = float(build_loss().data)
            flat[idx] = original - FD_STEP
            down = float(build_loss().data)
            flat[idx] = original
            numeric = (up - down) / (2.0 * FD_STEP)
            worst = max(worst, _relative_error(analytic[name].reshape(-1)[idx], numeric))
            checked += 1
    return worst, checked


def _params_of(parts) -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    for part in parts:
        for name, tensor in part.params():
            out[name] = tensor
    return out


def _projection_loss(output: Tensor, rng: np.random.Generator) -> Tensor:
    probe = ad.constant(rng.normal(size=output.shape))
    return ad.reduce_mean(ad.mul(output, probe))


def layer_checks(seed: int = 0) -> list[CheckResult]:
    """Finite-difference check for every layer type used by the networks."""
    results = []
    rng = np.random.default_rng(seed)

    dense = Dense(7, 5, rng, "dense")
    x_dense = ad.constant(rng.normal(size=(4, 7)))
    probe = np.random.default_rng(seed + 1)
    err, n = check_gradients(lambda: _projection_loss(ad.tanh(dense(x_dense)), np.random.default_rng(7)),
                             _params_of([dense]), probe, samples_per_param=6)
    results.append(CheckResult("dense+tanh", err, n))

    conv = Conv2d(2, 3, 3, rng, "conv")
    x_conv = ad.constant(rng.normal(size=(2, 2, 6, 5)))
    err, n = check_gradients(lambda: _projection_loss(ad.tanh(conv(x_conv)), np.random.default_rng(8)),
                             _params_of([conv]), probe, samples_per_param=6)
    results.append(CheckResult("conv2d+tanh", err, n))

    norm = LayerNorm(6, "norm")
    x_norm = ad.constant(rng.normal(size=(5, 6)))
    err, n = check_gradients(lambda: _projection_loss(norm(x_norm), np.random.default_rng(9)),
                             _params_of([norm]), probe, samples_per_param=6)
    results.append(CheckResult("layer_norm", err, n))

    mlp = MLP(6, (8, 8), 4, rng, "mlp")
    x_mlp = ad.constant(rng.normal(size=(3, 6)))

    def softmax_loss():
        logp = ad.log_softmax(mlp(x_mlp))
        return _projection_loss(logp, np.random.default_rng(10))

    err, n = check_gradients(softmax_loss, _params_of([mlp]), probe, samples_per_param=4)
    results.append(CheckResult("mlp+log_softmax", err, n))
    return results


def small_network_config(seed: int = 0) -> NetworkConfig:
    """Downsized shapes so the composite check stays fast: 8x6 grid, 2 jobs."""
    return NetworkConfig(
        cpu_count=4, gpu_count=2, time_horizon=8, ready_pool_size=2,
        conv_channels=(3, 4), job_branch_dim=8, embed_dim=10,
        actor_hidden=(8,), critic_hidden=(8,), seed=seed,
    )


def composite_check(seed: int = 0, min_samples: int = 200) -> CheckResult:
    """Joint encoder+actor+critic loss checked end to end."""
    rng = np.random.default_rng(seed)
    config = small_network_config(seed)
    nets = AgentNets(config)
    batch = 3
    grid = rng.integers(0, 2, size=(batch, 2, config.time_horizon, config.grid_width))
    jobs = rng.normal(size=(batch, config.ready_pool_size, config.job_features))
    actions = rng.integers(0, config.n_actions, size=batch)
    targets = ad.constant(rng.normal(size=batch))

    def build_loss() -> Tensor:
        emb = nets.embed(grid.astype(np.float64), jobs)
        q_sa = ad.take_actions(nets.critic_q(emb), actions)
        critic = ad.reduce_mean(ad.power(ad.sub(q_sa, targets), 2.0))
        logp = ad.take_actions(ad.log_softmax(nets.actor_logits(emb)), actions)
        return ad.sub(critic, ad.reduce_mean(logp))

    params = nets.named_params()
    sizes = [t.data.size for t in params.values()]
    per_param = max(2, int(np.ceil(min_samples / len(params))))
    while sum(min(per_param, s) for s in sizes) < min_samples and per_param < max(sizes):
        per_param += 1
    err, checked = check_gradients(build_loss, params, rng, samples_per_param=per_param)
    return CheckResult("encoder+actor+critic", err, checked)


class _CorruptedDense(Dense):
    """Negative control: weight gradient deliberately scaled by 1.5."""

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.add(ad.matmul(x, self.weight), self.bias)
        weight = self.weight

        def bad_bwd(grad):
            if x.requires_grad:
                x._accumulate(grad @ weight.data.T)
            if weight.requires_grad:
                weight._accumulate(1.5 * (x.data.T @ grad))
            if self.bias.requires_grad:
                self.bias._accumulate(grad.sum(axis=0))
        return Tensor(out.data, parents=(x, weight, self.bias), bwd=bad_bwd)


def negative_control(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    layer = _CorruptedDense(6, 4, rng, "corrupted_dense")
    x = ad.constant(rng.normal(size=(5, 6)))
    err, n = check_gradients(
        lambda: _projection_loss(ad.tanh(layer(x)), np.random.default_rng(11)),
        _params_of([layer]), rng, samples_per_param=8)
    return CheckResult("corrupted_dense(negative control)", err, n)


def full_report(seed: int = 0) -> list[CheckResult]:
    return layer_checks(seed) + [composite_check(seed)]
