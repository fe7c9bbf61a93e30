"""
The classifier: a multilayer perceptron with ReLU hidden layers and a softmax output.

Every evaluation builds a fresh graph, so Params values can be shared freely
between threads.
"""

import hashlib
from collections.abc import Sequence
from typing import Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from right_reasons.autodiff.tape import Graph, Node, add, gradient, grad_nodes, log_softmax, matmul, reduce_sum, relu
from right_reasons.errors.model import ModelArchitectureError, ModelShapeError

DEFAULT_HIDDEN_SIZES = (50, 30)


class Layer(BaseModel):
    """One affine map, weight (in x out) and bias (out)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weight: np.ndarray = Field(..., description="Weight matrix of shape (fan_in, fan_out).")
    bias: np.ndarray = Field(..., description="Bias vector of shape (fan_out,).")


class Params(BaseModel):
    """The ordered layers of the network."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    layers: list[Layer] = Field(..., description="Affine layers from input to output.")

    @model_validator(mode="after")
    def check_chain(self) -> Self:
        for index, layer in enumerate(self.layers):
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[1],):  # noqa: PLR2004
                msg = f"Layer {index} has weight {layer.weight.shape} and bias {layer.bias.shape}"
                raise ModelArchitectureError(msg)
            if index and self.layers[index - 1].weight.shape[1] != layer.weight.shape[0]:
                msg = f"Layer {index} expects {layer.weight.shape[0]} inputs but layer {index - 1} emits {self.layers[index - 1].weight.shape[1]}"
                raise ModelArchitectureError(msg)
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                msg = f"Layer {index} holds non-finite values"
                raise ModelArchitectureError(msg)
        return self

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].weight.shape[0], *(layer.weight.shape[1] for layer in self.layers)]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def arrays(self) -> list[np.ndarray]:
        """Flattens to [W0, b0, W1, b1, ...]."""
        return [array for layer in self.layers for array in (layer.weight, layer.bias)]

    @classmethod
    def from_arrays(cls, arrays: Sequence[npt.ArrayLike]) -> Self:
        arrays = [np.array(array, dtype=np.float64) for array in arrays]
        return cls(layers=[Layer(weight=arrays[i], bias=arrays[i + 1]) for i in range(0, len(arrays), 2)])

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for array in self.arrays():
            digest.update(str(array.shape).encode())
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()


class ForwardResult(BaseModel):
    """The recorded forward pass of a batch."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    graph: Graph
    inputs: Node = Field(..., description="The node holding X.")
    parameters: list[Node] = Field(..., description="Nodes for [W0, b0, W1, b1, ...].")
    logits: Node
    logprobs: Node
    probs: np.ndarray = Field(..., description="Row-stochastic class probabilities.")


def init_params(input_dim: int, output_dim: int, seed: int, hidden_sizes: Sequence[int] = DEFAULT_HIDDEN_SIZES) -> Params:
    """
    Draws weights uniformly from +-sqrt(3 / fan_in) with zero biases.

    Raises:
        ModelArchitectureError: If input_dim < 1 or output_dim < 2.
    """
    if input_dim < 1 or output_dim < 2:  # noqa: PLR2004
        msg = f"Need at least one input and two classes, got input_dim={input_dim}, output_dim={output_dim}"
        raise ModelArchitectureError(msg)
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden_sizes, output_dim]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:], strict=True):
        limit = np.sqrt(3.0 / fan_in)
        layers.append(Layer(weight=rng.uniform(-limit, limit, size=(fan_in, fan_out)), bias=np.zeros(fan_out)))
    return Params(layers=layers)


def build_forward(parameters: Sequence[Node], inputs: Node) -> tuple[Node, Node]:
    """Records the network on `inputs` and returns (logits, log-probabilities)."""
    hidden = inputs
    last = len(parameters) - 2
    for index in range(0, len(parameters), 2):
        hidden = add(matmul(hidden, parameters[index]), parameters[index + 1])
        if index < last:
            hidden = relu(hidden)
    return hidden, log_softmax(hidden)


def _check_inputs(params: Params, X: npt.ArrayLike) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:  # noqa: PLR2004
        msg = f"Model expects inputs with {params.input_dim} columns, got shape {X.shape}"
        raise ModelShapeError(msg)
    return X


def forward(params: Params, X: npt.ArrayLike, *, differentiable_inputs: bool = False, differentiable_params: bool = False) -> ForwardResult:
    """
    Evaluates the network on a fresh graph.

    Args:
        params: The network parameters.
        X: Inputs of shape (N, D).
        differentiable_inputs: Record X as a variable so input gradients can be taken.
        differentiable_params: Record the parameters as variables.

    Raises:
        ModelShapeError: If X does not have D columns.
    """
    X = _check_inputs(params, X)
    graph = Graph()
    leaf = graph.variable if differentiable_params else graph.constant
    parameters = [leaf(array) for array in params.arrays()]
    inputs = graph.variable(X) if differentiable_inputs else graph.constant(X)
    logits, logprobs = build_forward(parameters, inputs)
    return ForwardResult(graph=graph, inputs=inputs, parameters=parameters, logits=logits, logprobs=logprobs, probs=np.exp(logprobs.value))


def input_logprob_gradient_nodes(result: ForwardResult) -> Node:
    """Row n of the result is the gradient of sum_k log p_nk with respect to X_n, kept differentiable."""
    (input_gradient,) = grad_nodes(reduce_sum(result.logprobs), [result.inputs])
    return input_gradient


def input_logprob_gradients(params: Params, X: npt.ArrayLike) -> np.ndarray:
    """Detached gradients of sum_k log p_nk with respect to each input row."""
    result = forward(params, X, differentiable_inputs=True)
    (input_gradient,) = gradient(reduce_sum(result.logprobs), [result.inputs])
    return input_gradient


def predict_proba(params: Params, X: npt.ArrayLike) -> np.ndarray:
    return forward(params, X).probs


def predict(params: Params, X: npt.ArrayLike) -> np.ndarray:
    """Most probable class per row; ties go to the lowest class index."""
    return predict_proba(params, X).argmax(axis=1)


def accuracy(params: Params, X: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    return float(np.mean(predict(params, X) == np.asarray(labels)))
