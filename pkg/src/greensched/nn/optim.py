"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .convkernels import adam_update


class Adam:
    def __init__(self, learning_rate: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        """Apply one adaptive-moment update using each tensor's .grad.

        Tensors with no accumulated gradient are treated as zero-gradient;
        with fresh moment state that leaves them unchanged.
        """
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        scale = self.learning_rate / bc1
        inv_sqrt_bc2 = 1.0 / np.sqrt(bc2)
        for name, tensor in params.items():
            if name not in self._m:
                self._m[name] = np.zeros_like(tensor.data)
                self._v[name] = np.zeros_like(tensor.data)
            m, v = self._m[name], self._v[name]
            grad = tensor.grad
            if grad is None:
                grad = np.zeros_like(tensor.data)
            adam_update(tensor.data.reshape(-1), np.ascontiguousarray(grad).reshape(-1),
                        m.reshape(-1), v.reshape(-1),
                        self.beta1, self.beta2, self.eps, scale, inv_sqrt_bc2)
