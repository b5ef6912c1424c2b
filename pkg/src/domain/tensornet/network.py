"""Dense feedforward networks with explicit forward and backward passes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt

from src.domain.exceptions import NumericalError, ShapeError, UsageError
from src.domain.tensornet.losses import softmax_rows, softmax_rows_backward
from src.domain.value_objects import Activation

Array = npt.NDArray[np.float64]
DenseMatrix = Array


def as_dense(values: npt.ArrayLike, name: str = "matrix") -> DenseMatrix:
    """Coerce to a C-contiguous float64 matrix."""
    matrix = np.ascontiguousarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be two-dimensional, got shape {matrix.shape}")
    return matrix


def ensure_finite(values: Array, what: str) -> Array:
    """Raise if any entry is NaN or infinite."""
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite values in {what}")
    return values


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> Array:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def activate(pre: Array, activation: Activation) -> Array:
    """Apply a layer activation."""
    if activation is Activation.RELU:
        return np.maximum(pre, 0.0)
    if activation is Activation.SOFTMAX_ROWS:
        return softmax_rows(pre)
    return pre


def activate_backward(pre: Array, out: Array, grad: Array, activation: Activation) -> Array:
    """Pull a gradient through a layer activation."""
    if activation is Activation.RELU:
        return grad * (pre > 0.0)
    if activation is Activation.SOFTMAX_ROWS:
        return softmax_rows_backward(out, grad)
    return grad


@dataclass(frozen=True)
class DenseLayer:
    """Affine map followed by an activation; weight is (in, out)."""

    weight: Array
    bias: Array
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        """Validate shapes."""
        if self.weight.ndim != 2:
            raise ShapeError(f"layer weight must be 2-D, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"bias {self.bias.shape} does not match weight {self.weight.shape}"
            )

    @property
    def in_dim(self) -> int:
        """Input width."""
        return int(self.weight.shape[0])

    @property
    def out_dim(self) -> int:
        """Output width."""
        return int(self.weight.shape[1])


@dataclass(frozen=True)
class MlpNetwork:
    """Stack of dense layers."""

    layers: tuple[DenseLayer, ...]

    def __post_init__(self) -> None:
        """Validate the dimension chain and activation placement."""
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for index, (left, right) in enumerate(zip(self.layers, self.layers[1:])):
            if left.out_dim != right.in_dim:
                raise ShapeError(
                    f"layer {index} outputs {left.out_dim} but layer {index + 1} "
                    f"expects {right.in_dim}"
                )
        for layer in self.layers[:-1]:
            if layer.activation is Activation.SOFTMAX_ROWS:
                raise ShapeError("softmax-rows is only allowed as the final activation")

    @classmethod
    def initialize(
        cls,
        dims: Sequence[int],
        rng: np.random.Generator,
        hidden_activation: Activation = Activation.RELU,
        final_activation: Activation = Activation.IDENTITY,
    ) -> MlpNetwork:
        """Glorot-uniform weights, zero biases."""
        if len(dims) < 2 or any(dim < 1 for dim in dims):
            raise ShapeError(f"invalid layer widths {list(dims)}")
        layers = []
        for index, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
            last = index == len(dims) - 2
            layers.append(
                DenseLayer(
                    weight=glorot_uniform(fan_in, fan_out, rng),
                    bias=np.zeros(fan_out),
                    activation=final_activation if last else hidden_activation,
                )
            )
        return cls(layers=tuple(layers))

    @property
    def input_dim(self) -> int:
        """Width of accepted inputs."""
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        """Width of produced outputs."""
        return self.layers[-1].out_dim

    def parameters(self) -> list[Array]:
        """Parameters in canonical order [W0, b0, W1, b1, ...]."""
        params: list[Array] = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params

    def with_parameters(self, params: Sequence[Array]) -> MlpNetwork:
        """Return a copy of the network carrying new parameter values."""
        if len(params) != 2 * len(self.layers):
            raise ShapeError(f"expected {2 * len(self.layers)} parameter arrays, got {len(params)}")
        layers = []
        for index, layer in enumerate(self.layers):
            weight, bias = params[2 * index], params[2 * index + 1]
            if weight.shape != layer.weight.shape or bias.shape != layer.bias.shape:
                raise ShapeError(f"parameter shapes changed in layer {index}")
            layers.append(DenseLayer(weight=weight, bias=bias, activation=layer.activation))
        return MlpNetwork(layers=tuple(layers))


@dataclass
class ForwardCache:
    """Per-layer inputs, pre-activations and outputs of one forward pass."""

    inputs: list[Array] = field(default_factory=list)
    pre_activations: list[Array] = field(default_factory=list)
    outputs: list[Array] = field(default_factory=list)


def forward(net: MlpNetwork, batch: DenseMatrix) -> tuple[DenseMatrix, ForwardCache]:
    """Run the network on a (b, d_in) batch."""
    batch = as_dense(batch, "batch")
    if batch.shape[1] != net.input_dim:
        raise ShapeError(f"batch has {batch.shape[1]} columns, network expects {net.input_dim}")
    cache = ForwardCache()
    current = batch
    for layer in net.layers:
        pre = current @ layer.weight + layer.bias
        out = activate(pre, layer.activation)
        cache.inputs.append(current)
        cache.pre_activations.append(pre)
        cache.outputs.append(out)
        current = out
    return ensure_finite(current, "network output"), cache


def predict(net: MlpNetwork, batch: DenseMatrix) -> DenseMatrix:
    """Forward pass without keeping the cache."""
    output, _ = forward(net, batch)
    return output


def backward(
    net: MlpNetwork,
    cache: Optional[ForwardCache],
    loss_grad: DenseMatrix,
    return_input_grad: bool = False,
) -> list[Array]:
    """Gradients of a loss w.r.t. every parameter, in `parameters()` order.

    With `return_input_grad` the gradient w.r.t. the batch is appended last.
    """
    if cache is None or len(cache.inputs) != len(net.layers):
        raise UsageError("backward needs the cache of a forward pass through this network")
    if loss_grad.shape != cache.outputs[-1].shape:
        raise ShapeError(
            f"loss gradient {loss_grad.shape} vs output {cache.outputs[-1].shape}"
        )
    grads: list[Array] = [np.empty(0)] * (2 * len(net.layers))
    grad = loss_grad
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        grad = activate_backward(
            cache.pre_activations[index], cache.outputs[index], grad, layer.activation
        )
        grads[2 * index] = cache.inputs[index].T @ grad
        grads[2 * index + 1] = np.sum(grad, axis=0)
        grad = grad @ layer.weight.T
    if return_input_grad:
        grads.append(grad)
    return grads
