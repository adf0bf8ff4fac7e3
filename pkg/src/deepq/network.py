"""Network assembly: an ordered layer pipeline with a shared parameter registry.

The network drives the three phases across its layers: ``forward`` runs the
layers front to back, ``backward`` and ``calculate_gradient`` back to front.
Phase order is enforced (forward, then backward, then calculate_gradient);
violations raise :class:`PhaseOrderError` rather than silently reading stale
buffers.
"""

from __future__ import annotations

import numpy as np

from .errors import GeometryError, NonFiniteError, PhaseOrderError
from .layers import Layer, LayerSpec, make_layer
from .tensor import Params, Tensor

# Trunk architectures (head appended by build_network). The large preset is the
# classic pixel-input stack; the desk preset trades capacity for CPU speed on
# small frames.
ARCHITECTURES: dict[str, list[LayerSpec]] = {
    "atari": [
        LayerSpec.convolution(32, 8, 4),
        LayerSpec.relu(),
        LayerSpec.convolution(64, 4, 2),
        LayerSpec.relu(),
        LayerSpec.convolution(64, 3, 1),
        LayerSpec.relu(),
        LayerSpec.linear(512),
        LayerSpec.relu(),
    ],
    "desk": [
        LayerSpec.convolution(16, 6, 2),
        LayerSpec.relu(),
        LayerSpec.convolution(32, 3, 1),
        LayerSpec.relu(),
        LayerSpec.linear(128),
        LayerSpec.relu(),
    ],
}

_IDLE, _FORWARD, _BACKWARD, _GRAD = range(4)


class Network:
    """Ordered layer list plus parameter registry and phase bookkeeping."""

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...],
                 dtype=np.float32):
        self.layers = layers
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dtype = np.dtype(dtype)
        self._phase = _IDLE
        self._batch: int | None = None
        self._inputs: dict[int, Tensor] = {}
        self.x: Tensor | None = None
        self.y: Tensor | None = None
        # Bind once so parameter shapes exist and geometry errors surface now.
        self._bind(1)
        self.output_shape = self.y.shape[1:]

    def _bind(self, batch: int) -> None:
        x = self._inputs.get(batch)
        if x is None:
            x = Tensor((batch,) + self.input_shape, dtype=self.dtype)
            self._inputs[batch] = x
        self.x = x
        t = x
        for layer in self.layers:
            t = layer.bind(t)
        self.y = t
        self._batch = batch

    def params(self) -> list[Params]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for p in self.params():
            out.extend(p.tensors())
        return out

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Run the forward phase; returns the output values (batch x actions)."""
        values = np.asarray(values, dtype=self.dtype)
        if values.shape[1:] != self.input_shape:
            raise GeometryError(
                f"input shape {values.shape[1:]} != network input {self.input_shape}")
        if values.shape[0] != self._batch:
            self._bind(values.shape[0])
        self.x.values[...] = values
        for layer in self.layers:
            layer.forward()
        if not np.all(np.isfinite(self.y.values)):
            raise NonFiniteError("non-finite network output")
        self._phase = _FORWARD
        return self.y.values

    def backward(self, output_grad: np.ndarray) -> np.ndarray:
        """Run the backward phase; returns the gradient wrt the input."""
        if self._phase != _FORWARD:
            raise PhaseOrderError("backward requires a completed forward phase")
        if output_grad.shape != self.y.shape:
            raise GeometryError(
                f"output grad shape {output_grad.shape} != {self.y.shape}")
        self.y.grad[...] = output_grad
        for layer in reversed(self.layers):
            layer.backward()
        self._phase = _BACKWARD
        return self.x.grad

    def calculate_gradient(self) -> None:
        """Accumulate parameter gradients for the current pass (``+=``)."""
        if self._phase != _BACKWARD:
            raise PhaseOrderError(
                "calculate_gradient requires a completed backward phase")
        for layer in reversed(self.layers):
            layer.calculate_gradient()
        self._phase = _GRAD

    def validate_finite(self) -> None:
        """Full scan of all activations and parameters for NaN/Inf."""
        for i, layer in enumerate(self.layers):
            if layer.y is not None:
                layer.y.check_finite(f"{layer.name} (layer {i}) output")
        for name, t in self.named_tensors():
            t.check_finite(name)

    def layer_output_shapes(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes without the batch extent."""
        return [layer.y.shape[1:] for layer in self.layers]


def trunk_layers(arch: str) -> list[LayerSpec]:
    try:
        return list(ARCHITECTURES[arch])
    except KeyError:
        raise ValueError(
            f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}"
        ) from None


def build_network(spec: str | list[LayerSpec], input_shape: tuple[int, int, int],
                  n_actions: int, dueling: bool, dtype=np.float32) -> Network:
    """Assemble the Q-network for ``input_shape`` = (H, W, C) frames.

    ``spec`` is an architecture name or an explicit trunk layer list; the
    output head (plain linear or dueling) is appended according to ``dueling``.
    All layer geometry is validated here, so infeasible convolution strides
    fail at build time.
    """
    if len(input_shape) != 3 or any(s < 1 for s in input_shape):
        raise GeometryError(f"input shape must be HxWxC with positive extents, got {input_shape}")
    if n_actions < 2:
        raise GeometryError(f"need at least 2 actions, got {n_actions}")
    trunk = trunk_layers(spec) if isinstance(spec, str) else list(spec)
    if dueling:
        trunk.append(LayerSpec.dueling_head(n_actions))
    else:
        trunk.append(LayerSpec.linear(n_actions))
    layers = []
    counts: dict[str, int] = {}
    short = {"convolution": "conv", "linear": "fc", "relu": "relu",
             "dueling-head": "duel"}
    for s in trunk:
        base = short[s.kind]
        counts[base] = counts.get(base, 0) + 1
        name = f"{base}{counts[base]}" if s.kind != "dueling-head" else "duel"
        layers.append(make_layer(s, name))
    return Network(layers, input_shape, dtype=dtype)


def _fan(tensor: Tensor) -> tuple[int, int]:
    shape = tensor.shape
    if len(shape) == 4:  # conv filter (fh, fw, cin, cout)
        rf = shape[0] * shape[1]
        return rf * shape[2], rf * shape[3]
    if len(shape) == 2:  # linear (in, out)
        return shape[0], shape[1]
    raise ValueError(f"no fan rule for weight shape {shape}")


def init_params(net: Network, seed: int) -> None:
    """Seeded uniform fan-in/fan-out weight init; biases start at zero.

    Weights are drawn uniform in +-sqrt(6 / (fan_in + fan_out)) in registry
    order, so the same seed always produces bit-identical parameters.
    """
    rng = np.random.default_rng(seed)
    for p in net.params():
        fan_in, fan_out = _fan(p.weight)
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        draw = rng.uniform(-bound, bound, size=p.weight.shape)
        p.weight.values[...] = draw.astype(net.dtype)
        p.weight.grad[...] = 0
        if p.bias is not None:
            p.bias.values[...] = 0
            p.bias.grad[...] = 0
