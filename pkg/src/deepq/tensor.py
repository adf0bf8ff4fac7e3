"""Dense value/gradient tensor pairs, the currency passed between layers.

A ``Tensor`` owns two same-shape row-major (C-order) float arrays: ``values``
holds the result of the forward pass, ``grad`` the gradient of the loss with
respect to those values. Layers are wired together by sharing Tensor objects:
one layer's output is the next layer's input, so no copying happens between
layers during a pass.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError


class Tensor:
    """N-dimensional array with paired gradient storage."""

    __slots__ = ("shape", "values", "grad")

    def __init__(self, shape, dtype=np.float32):
        self.shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in self.shape):
            raise ValueError(f"tensor extents must be positive, got {self.shape}")
        self.values = np.zeros(self.shape, dtype=dtype)
        self.grad = np.zeros(self.shape, dtype=dtype)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self):
        return self.values.dtype

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def check_finite(self, label: str = "tensor") -> None:
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError(f"non-finite values in {label}")
        if not np.all(np.isfinite(self.grad)):
            raise NonFiniteError(f"non-finite grad in {label}")

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.values.dtype})"


class Params:
    """A named weight tensor plus optional bias, owned by one layer.

    Gradient buffers accumulate across calculate_gradient calls and are
    zeroed by the optimizer after each apply.
    """

    __slots__ = ("name", "weight", "bias")

    def __init__(self, name: str, weight: Tensor, bias: Tensor | None = None):
        self.name = name
        self.weight = weight
        self.bias = bias

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = [(self.name + ".weight", self.weight)]
        if self.bias is not None:
            out.append((self.name + ".bias", self.bias))
        return out

    def zero_grad(self) -> None:
        self.weight.zero_grad()
        if self.bias is not None:
            self.bias.zero_grad()

    def __repr__(self):
        b = self.bias.shape if self.bias is not None else None
        return f"Params({self.name!r}, weight={self.weight.shape}, bias={b})"
