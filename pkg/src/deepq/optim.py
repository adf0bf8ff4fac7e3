"""RMSprop updates, gradient clipping, and target-network synchronization."""

from __future__ import annotations

import numpy as np

from .errors import GeometryError, NonFiniteError
from .network import Network
from .tensor import Tensor


class RmsProp:
    """Plain RMSprop (no momentum, no centering).

    Per tensor: ``acc <- decay * acc + (1 - decay) * g^2`` then
    ``w <- w - lr * g / (sqrt(acc) + eps)``. Gradients are zeroed after a
    step so the next pass accumulates from scratch.
    """

    def __init__(self, net: Network, learning_rate: float = 0.000625,
                 decay: float = 0.95, epsilon: float = 1e-6):
        if not 0.0 < decay < 1.0:
            raise ValueError(f"decay must be in (0, 1), got {decay}")
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        if learning_rate < 0.0:
            raise ValueError(f"learning rate must be >= 0, got {learning_rate}")
        self.learning_rate = float(learning_rate)
        self.decay = float(decay)
        self.epsilon = float(epsilon)
        self._tensors = net.named_tensors()
        self.acc: dict[str, np.ndarray] = {
            name: np.zeros(t.shape, dtype=t.dtype) for name, t in self._tensors
        }

    def step(self) -> None:
        """Apply one update from the accumulated gradients, then zero them."""
        for name, t in self._tensors:
            if not np.all(np.isfinite(t.grad)):
                raise NonFiniteError(f"non-finite gradient in {name}; step aborted")
        for name, t in self._tensors:
            g = t.grad
            acc = self.acc[name]
            acc *= self.decay
            acc += (1.0 - self.decay) * np.square(g)
            t.values -= self.learning_rate * g / (np.sqrt(acc) + self.epsilon)
            g[...] = 0

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, self.acc[name]) for name, _ in self._tensors]

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, _ in self._tensors:
            src = arrays[name]
            if src.shape != self.acc[name].shape:
                raise GeometryError(
                    f"optimizer state {name}: shape {src.shape} != {self.acc[name].shape}")
            self.acc[name][...] = src


def clip_gradients(net: Network, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    total = 0.0
    for _, t in net.named_tensors():
        g = t.grad.astype(np.float64, copy=False)
        total += float(np.dot(g.ravel(), g.ravel()))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = np.asarray(max_norm / norm, dtype=net.dtype)
        for _, t in net.named_tensors():
            t.grad *= scale
    return norm


def sync_target(net: Network, target: Network) -> None:
    """Copy every parameter of ``net`` into ``target`` bit-exactly."""
    src = dict(net.named_tensors())
    dst = dict(target.named_tensors())
    if set(src) != set(dst):
        raise GeometryError(
            f"parameter registries differ: {sorted(set(src) ^ set(dst))}")
    for name, t in dst.items():
        s: Tensor = src[name]
        if s.shape != t.shape:
            raise GeometryError(f"{name}: shape {s.shape} != {t.shape}")
        np.copyto(t.values, s.values)
