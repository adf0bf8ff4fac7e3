"""Layer implementations with explicit forward / backward / calculate_gradient phases.

Every layer is wired to its neighbours through shared :class:`~deepq.tensor.Tensor`
objects: ``forward`` reads ``x.values`` and fills ``y.values``, ``backward`` reads
``y.grad`` and fills ``x.grad``, and ``calculate_gradient`` accumulates (``+=``)
into the layer's parameter gradients so minibatch contributions sum.

Layers support multiple batch sizes through bindings: ``bind(x)`` allocates (or
reuses) the activation tensors and scratch buffers for ``x``'s batch extent.
Parameters are created at the first bind and shared across bindings.

Convolutions use valid padding only (pad 0); geometry that does not tile the
input exactly is rejected at bind time. The convolution kernel lowers to a
matrix multiply via im2col so the heavy lifting stays in BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import GeometryError
from .tensor import Params, Tensor


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer (kind plus its geometry)."""

    kind: str  # convolution | linear | relu | dueling-head
    geometry: dict = field(default_factory=dict)

    @staticmethod
    def convolution(filters: int, size: int, stride: int) -> "LayerSpec":
        return LayerSpec("convolution", {
            "filters": filters,
            "filter_h": size, "filter_w": size,
            "stride_h": stride, "stride_w": stride,
        })

    @staticmethod
    def linear(units: int) -> "LayerSpec":
        return LayerSpec("linear", {"units": units})

    @staticmethod
    def relu() -> "LayerSpec":
        return LayerSpec("relu", {})

    @staticmethod
    def dueling_head(n_actions: int) -> "LayerSpec":
        return LayerSpec("dueling-head", {"n_actions": n_actions})


class Layer:
    """Base layer: binds input tensors and runs the three compute phases."""

    def __init__(self, name: str):
        self.name = name
        self.x: Tensor | None = None
        self.y: Tensor | None = None
        self._bindings: dict[int, tuple] = {}

    def bind(self, x: Tensor) -> Tensor:
        """Attach input tensor ``x`` and return this layer's output tensor.

        Bindings are cached per batch extent, so flipping between batch sizes
        (e.g. action selection vs. learning) costs no reallocation.
        """
        batch = x.shape[0]
        cached = self._bindings.get(batch)
        if cached is None or cached[0] is not x:
            cached = self._make_binding(x)
            self._bindings[batch] = cached
        self._activate(cached)
        return self.y

    def _make_binding(self, x: Tensor) -> tuple:
        raise NotImplementedError

    def _activate(self, binding: tuple) -> None:
        raise NotImplementedError

    def params(self) -> list[Params]:
        return []

    def forward(self) -> None:
        raise NotImplementedError

    def backward(self) -> None:
        raise NotImplementedError

    def calculate_gradient(self) -> None:
        # Parameter-free layers have nothing to accumulate.
        pass


class ReluLayer(Layer):
    """Elementwise rectifier. Derivative at 0 taken as 0."""

    def _make_binding(self, x: Tensor) -> tuple:
        return (x, Tensor(x.shape, dtype=x.dtype))

    def _activate(self, binding: tuple) -> None:
        self.x, self.y = binding

    def forward(self) -> None:
        np.maximum(self.x.values, 0, out=self.y.values)

    def backward(self) -> None:
        np.multiply(self.y.grad, self.x.values > 0, out=self.x.grad)


class LinearLayer(Layer):
    """Fully connected layer ``y = x @ W + b``.

    Inputs with spatial extents are viewed as ``(batch, features)``; the
    flatten is implicit, mirroring how the conv trunk feeds the first fully
    connected layer.
    """

    def __init__(self, name: str, units: int):
        super().__init__(name)
        self.units = int(units)
        self.w: Params | None = None
        self.in_features: int | None = None

    def _make_binding(self, x: Tensor) -> tuple:
        features = int(np.prod(x.shape[1:]))
        if self.in_features is None:
            self.in_features = features
            weight = Tensor((features, self.units), dtype=x.dtype)
            bias = Tensor((self.units,), dtype=x.dtype)
            self.w = Params(self.name, weight, bias)
        elif features != self.in_features:
            raise GeometryError(
                f"{self.name}: expected {self.in_features} input features, got {features}")
        y = Tensor((x.shape[0], self.units), dtype=x.dtype)
        return (x, y)

    def _activate(self, binding: tuple) -> None:
        self.x, self.y = binding

    def params(self) -> list[Params]:
        return [self.w] if self.w is not None else []

    def forward(self) -> None:
        xflat = self.x.values.reshape(self.x.shape[0], -1)
        np.matmul(xflat, self.w.weight.values, out=self.y.values)
        self.y.values += self.w.bias.values

    def backward(self) -> None:
        xgrad = self.x.grad.reshape(self.x.shape[0], -1)
        np.matmul(self.y.grad, self.w.weight.values.T, out=xgrad)

    def calculate_gradient(self) -> None:
        xflat = self.x.values.reshape(self.x.shape[0], -1)
        self.w.weight.grad += xflat.T @ self.y.grad
        self.w.bias.grad += self.y.grad.sum(axis=0)


class ConvolutionLayer(Layer):
    """2-D valid convolution, im2col-lowered to a single GEMM per phase.

    Data layout is channels-last: input ``(batch, H, W, Cin)``, filter
    ``(fh, fw, Cin, Cout)``, output ``(batch, oh, ow, Cout)``. Strides must
    tile the input exactly: ``(H - fh) % stride_h == 0`` and likewise for W.
    """

    def __init__(self, name: str, filters: int, filter_h: int, filter_w: int,
                 stride_h: int, stride_w: int):
        super().__init__(name)
        self.filters = int(filters)
        self.fh, self.fw = int(filter_h), int(filter_w)
        self.sh, self.sw = int(stride_h), int(stride_w)
        if min(self.fh, self.fw, self.sh, self.sw, self.filters) < 1:
            raise GeometryError(f"{name}: filter/stride extents must be positive")
        self.w: Params | None = None
        self.in_shape: tuple | None = None

    def _out_hw(self, h: int, w: int) -> tuple[int, int]:
        if h < self.fh or w < self.fw:
            raise GeometryError(
                f"{self.name}: {self.fh}x{self.fw} filter does not fit {h}x{w} input")
        if (h - self.fh) % self.sh != 0 or (w - self.fw) % self.sw != 0:
            raise GeometryError(
                f"{self.name}: stride ({self.sh},{self.sw}) does not tile "
                f"{h}x{w} input with {self.fh}x{self.fw} filter (valid padding)")
        return (h - self.fh) // self.sh + 1, (w - self.fw) // self.sw + 1

    def _make_binding(self, x: Tensor) -> tuple:
        if len(x.shape) != 4:
            raise GeometryError(f"{self.name}: expected 4-d input, got {x.shape}")
        b, h, w, c = x.shape
        if self.in_shape is None:
            self.in_shape = (h, w, c)
            weight = Tensor((self.fh, self.fw, c, self.filters), dtype=x.dtype)
            bias = Tensor((self.filters,), dtype=x.dtype)
            self.w = Params(self.name, weight, bias)
        elif (h, w, c) != self.in_shape:
            raise GeometryError(
                f"{self.name}: expected input {self.in_shape}, got {(h, w, c)}")
        oh, ow = self._out_hw(h, w)
        y = Tensor((b, oh, ow, self.filters), dtype=x.dtype)
        k = self.fh * self.fw * c
        patches = np.empty((b * oh * ow, k), dtype=x.dtype)
        dpatches = np.empty_like(patches)
        return (x, y, patches, dpatches, oh, ow)

    def _activate(self, binding: tuple) -> None:
        self.x, self.y, self._patches, self._dpatches, self._oh, self._ow = binding

    def params(self) -> list[Params]:
        return [self.w] if self.w is not None else []

    def _windows(self, arr: np.ndarray) -> np.ndarray:
        b, h, w, c = arr.shape
        bs, hs, ws, cs = arr.strides
        return as_strided(
            arr,
            (b, self._oh, self._ow, self.fh, self.fw, c),
            (bs, self.sh * hs, self.sw * ws, hs, ws, cs),
        )

    def forward(self) -> None:
        b = self.x.shape[0]
        k = self._patches.shape[1]
        self._patches[...] = self._windows(self.x.values).reshape(b * self._oh * self._ow, k)
        w2 = self.w.weight.values.reshape(k, self.filters)
        yflat = self.y.values.reshape(-1, self.filters)
        np.matmul(self._patches, w2, out=yflat)
        yflat += self.w.bias.values

    def backward(self) -> None:
        b = self.x.shape[0]
        k = self._patches.shape[1]
        w2 = self.w.weight.values.reshape(k, self.filters)
        dyflat = self.y.grad.reshape(-1, self.filters)
        np.matmul(dyflat, w2.T, out=self._dpatches)
        dp = self._dpatches.reshape(b, self._oh, self._ow, self.fh, self.fw, -1)
        xg = self.x.grad
        xg[...] = 0
        # Scatter-add the overlapping windows back; one strided add per filter tap.
        for i in range(self.fh):
            for j in range(self.fw):
                xg[:, i:i + self.sh * self._oh:self.sh,
                   j:j + self.sw * self._ow:self.sw, :] += dp[:, :, :, i, j, :]

    def calculate_gradient(self) -> None:
        k = self._patches.shape[1]
        dyflat = self.y.grad.reshape(-1, self.filters)
        dw2 = self.w.weight.grad.reshape(k, self.filters)
        dw2 += self._patches.T @ dyflat
        self.w.bias.grad += dyflat.sum(axis=0)


class DuelingHeadLayer(Layer):
    """Composite output head: state value plus mean-centred action advantages.

    Owns two branches over the same features: V (features -> 1) and
    A (features -> n_actions). The head emits
    ``Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')``, so a constant shift of
    the advantages never changes Q.
    """

    def __init__(self, name: str, n_actions: int):
        super().__init__(name)
        if n_actions < 1:
            raise GeometryError(f"{name}: n_actions must be >= 1, got {n_actions}")
        self.n_actions = int(n_actions)
        self.v: Params | None = None
        self.a: Params | None = None
        self.in_features: int | None = None

    def _make_binding(self, x: Tensor) -> tuple:
        features = int(np.prod(x.shape[1:]))
        if self.in_features is None:
            self.in_features = features
            dtype = x.dtype
            self.v = Params(self.name + ".value",
                            Tensor((features, 1), dtype=dtype),
                            Tensor((1,), dtype=dtype))
            self.a = Params(self.name + ".advantage",
                            Tensor((features, self.n_actions), dtype=dtype),
                            Tensor((self.n_actions,), dtype=dtype))
        elif features != self.in_features:
            raise GeometryError(
                f"{self.name}: expected {self.in_features} input features, got {features}")
        batch = x.shape[0]
        y = Tensor((batch, self.n_actions), dtype=x.dtype)
        value = np.empty((batch, 1), dtype=x.dtype)
        adv = np.empty((batch, self.n_actions), dtype=x.dtype)
        return (x, y, value, adv)

    def _activate(self, binding: tuple) -> None:
        self.x, self.y, self._value, self._adv = binding

    def params(self) -> list[Params]:
        return [self.v, self.a] if self.v is not None else []

    def forward(self) -> None:
        xflat = self.x.values.reshape(self.x.shape[0], -1)
        np.matmul(xflat, self.v.weight.values, out=self._value)
        self._value += self.v.bias.values
        np.matmul(xflat, self.a.weight.values, out=self._adv)
        self._adv += self.a.bias.values
        self.y.values[...] = self._value
        self.y.values += self._adv
        self.y.values -= self._adv.mean(axis=1, keepdims=True)

    def _branch_grads(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.y.grad
        gv = g.sum(axis=1, keepdims=True)
        ga = g - gv / self.n_actions
        return gv, ga

    def backward(self) -> None:
        gv, ga = self._branch_grads()
        xgrad = self.x.grad.reshape(self.x.shape[0], -1)
        np.matmul(gv, self.v.weight.values.T, out=xgrad)
        xgrad += ga @ self.a.weight.values.T

    def calculate_gradient(self) -> None:
        gv, ga = self._branch_grads()
        xflat = self.x.values.reshape(self.x.shape[0], -1)
        self.v.weight.grad += xflat.T @ gv
        self.v.bias.grad += gv.sum(axis=0)
        self.a.weight.grad += xflat.T @ ga
        self.a.bias.grad += ga.sum(axis=0)


def make_layer(spec: LayerSpec, name: str) -> Layer:
    g = spec.geometry
    if spec.kind == "convolution":
        return ConvolutionLayer(name, g["filters"], g["filter_h"], g["filter_w"],
                                g["stride_h"], g["stride_w"])
    if spec.kind == "linear":
        return LinearLayer(name, g["units"])
    if spec.kind == "relu":
        return ReluLayer(name)
    if spec.kind == "dueling-head":
        return DuelingHeadLayer(name, g["n_actions"])
    raise ValueError(f"unknown layer kind {spec.kind!r}")
