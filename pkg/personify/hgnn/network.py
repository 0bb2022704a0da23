"""
The skip-connected hypergraph network. Each layer computes

    Z = (Theta X) W
    X' = act(ReLU(BN(Z)) + S(X))

where S is the identity when the widths match and a learned projection
otherwise. A linear head with a softmax turns the last representation into
class probabilities. The input features are first centred by the `input.mean`
buffer, which training sets to the mean over every node.
The forward pass optionally records its intermediate arrays in `caches`, and
`backward` uses them to compute the exact gradients. Batch statistics are
never written to the parameters during the forward pass: the new running
estimates are left in the caches and applied by the training loop.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from personify.model import Hypergraph
from personify.hgnn import Activation, TrainConfig, TrainingError
from personify.hgnn.operator import PropagationOperator, propagation_operator


Cache = Dict[str, np.ndarray]


@dataclass
class ModelParams:
    """
    Trainable arrays by name, in the order they were created, plus the arrays
    that aren't trained: the input mean and the batch normalization running
    statistics.
    """

    weights: Dict[str, np.ndarray] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_layers(self) -> int:
        return sum(1 for name in self.weights if name.endswith('.theta'))

    @property
    def num_classes(self) -> int:
        return self.weights['head.bias'].shape[0]

    @property
    def num_parameters(self) -> int:
        return sum(w.size for w in self.weights.values())

    def copy(self) -> 'ModelParams':
        return ModelParams(
            weights={name: w.copy() for name, w in self.weights.items()},
            buffers={name: b.copy() for name, b in self.buffers.items()})


def init_params(d_in: int, num_classes: int, config: TrainConfig,
                rng: Optional[np.random.Generator] = None) -> ModelParams:
    """
    Uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for the
    layer, projection and head weights. Batch norm starts as the identity
    (scale 1, shift 0, running mean 0 and variance 1), and the input mean
    is zero.
    """

    if d_in < 1 or num_classes < 2:
        raise TrainingError(f"Need at least one input feature and two"
                            f" classes, got {d_in} and {num_classes}")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    def uniform(fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params = ModelParams()
    params.buffers['input.mean'] = np.zeros(d_in)
    width = d_in
    for layer in range(config.layers):
        prefix = f'layers.{layer}'
        hidden = config.hidden_dim
        params.weights[f'{prefix}.theta'] = uniform(width, (width, hidden))
        params.weights[f'{prefix}.bn_scale'] = np.ones(hidden)
        params.weights[f'{prefix}.bn_shift'] = np.zeros(hidden)
        if width != hidden:
            params.weights[f'{prefix}.skip'] = uniform(width, (width, hidden))
        params.buffers[f'{prefix}.running_mean'] = np.zeros(hidden)
        params.buffers[f'{prefix}.running_var'] = np.ones(hidden)
        width = hidden

    params.weights['head.weight'] = uniform(width, (width, num_classes))
    params.weights['head.bias'] = uniform(width, (num_classes,))
    return params


def _as_operator(graph: Union[Hypergraph, PropagationOperator]
                 ) -> PropagationOperator:
    if isinstance(graph, PropagationOperator):
        return graph
    return propagation_operator(graph)


def _check_finite(array: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(array)):
        raise TrainingError(f"Non-finite values in {where}")


def layer_forward(graph: Union[Hypergraph, PropagationOperator],
                  x_in: np.ndarray, params: ModelParams, layer: int,
                  config: TrainConfig, training: bool = False,
                  cache: Optional[Cache] = None
                  ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Runs one layer and returns (Z, X'). In training mode batch normalization
    uses the statistics of the current batch (the whole node set), and in
    evaluation mode the running estimates.
    """

    op = _as_operator(graph)
    prefix = f'layers.{layer}'
    theta = params.weights[f'{prefix}.theta']
    if x_in.ndim != 2 or x_in.shape[1] != theta.shape[0] \
            or x_in.shape[0] != op.num_nodes:
        raise TrainingError(f"Layer {layer} expects a {op.num_nodes} x"
                            f" {theta.shape[0]} input, got {x_in.shape}")

    propagated = op.apply(x_in)
    z = propagated @ theta

    if config.batch_norm:
        scale = params.weights[f'{prefix}.bn_scale']
        shift = params.weights[f'{prefix}.bn_shift']
        if training:
            mean = z.mean(axis=0)
            var = z.var(axis=0)
        else:
            mean = params.buffers[f'{prefix}.running_mean']
            var = params.buffers[f'{prefix}.running_var']
        inv_std = 1.0 / np.sqrt(var + config.bn_eps)
        xhat = (z - mean) * inv_std
        normalized = scale * xhat + shift
    else:
        normalized = z

    rectified = np.maximum(normalized, 0.0)
    skip = params.weights.get(f'{prefix}.skip')
    shortcut = x_in if skip is None else x_in @ skip
    if shortcut.shape != rectified.shape:
        raise TrainingError(f"Layer {layer} changes the width from"
                            f" {x_in.shape[1]} to {rectified.shape[1]}"
                            f" without a projection")
    summed = rectified + shortcut
    if config.activation == Activation.RELU:
        x_out = np.maximum(summed, 0.0)
    else:
        x_out = summed
    _check_finite(x_out, f"layer {layer}")

    if cache is not None:
        cache.update(x_in=x_in, propagated=propagated, z=z,
                     normalized=normalized, summed=summed)
        if config.batch_norm:
            cache.update(xhat=xhat, inv_std=inv_std)
            if training:
                cache.update(batch_mean=mean, batch_var=var)
                m = config.bn_momentum
                cache['running_mean'] = \
                    m * params.buffers[f'{prefix}.running_mean'] + \
                    (1 - m) * mean
                cache['running_var'] = \
                    m * params.buffers[f'{prefix}.running_var'] + \
                    (1 - m) * var

    return z, x_out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def forward(graph: Union[Hypergraph, PropagationOperator], x0: np.ndarray,
            params: ModelParams, config: TrainConfig, training: bool = False,
            caches: Optional[List[Cache]] = None) -> np.ndarray:
    """
    Returns the N x P class probabilities. When `caches` is a list it receives
    one dict per layer and a last one for the head.
    """

    op = _as_operator(graph)
    x = np.asarray(x0, dtype=np.float64)
    _check_finite(x, "the input features")
    input_mean = params.buffers.get('input.mean')
    if input_mean is not None:
        if x.ndim != 2 or x.shape[1] != input_mean.shape[0]:
            raise TrainingError(f"Expected {input_mean.shape[0]} input"
                                f" features, got an array of shape {x.shape}")
        x = x - input_mean
    for layer in range(params.num_layers):
        cache: Optional[Cache] = None if caches is None else {}
        _, x = layer_forward(op, x, params, layer, config, training, cache)
        if caches is not None:
            caches.append(cache)

    logits = x @ params.weights['head.weight'] + params.weights['head.bias']
    _check_finite(logits, "the classification head")
    probs = softmax(logits)
    if caches is not None:
        caches.append({'x': x, 'probs': probs})
    return probs


def backward(graph: Union[Hypergraph, PropagationOperator],
             params: ModelParams, config: TrainConfig, caches: List[Cache],
             dlogits: np.ndarray, training: bool = True
             ) -> Dict[str, np.ndarray]:
    """
    Gradients of every trainable array given the gradient of the loss with
    respect to the logits, using the caches of the matching forward pass.
    """

    op = _as_operator(graph)
    grads: Dict[str, np.ndarray] = {}
    head = caches[-1]
    grads['head.weight'] = head['x'].T @ dlogits
    grads['head.bias'] = dlogits.sum(axis=0)
    dx = dlogits @ params.weights['head.weight'].T

    for layer in reversed(range(params.num_layers)):
        cache = caches[layer]
        prefix = f'layers.{layer}'
        if config.activation == Activation.RELU:
            dsummed = dx * (cache['summed'] > 0)
        else:
            dsummed = dx
        dnormalized = dsummed * (cache['normalized'] > 0)

        skip = params.weights.get(f'{prefix}.skip')
        if skip is None:
            dx_shortcut = dsummed
        else:
            grads[f'{prefix}.skip'] = cache['x_in'].T @ dsummed
            dx_shortcut = dsummed @ skip.T

        if config.batch_norm:
            xhat = cache['xhat']
            inv_std = cache['inv_std']
            grads[f'{prefix}.bn_scale'] = (dnormalized * xhat).sum(axis=0)
            grads[f'{prefix}.bn_shift'] = dnormalized.sum(axis=0)
            dxhat = dnormalized * params.weights[f'{prefix}.bn_scale']
            if training:
                n = dxhat.shape[0]
                dz = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                                      - xhat * (dxhat * xhat).sum(axis=0))
            else:
                dz = dxhat * inv_std
        else:
            dz = dnormalized

        theta = params.weights[f'{prefix}.theta']
        grads[f'{prefix}.theta'] = cache['propagated'].T @ dz
        # The operator is symmetric, so its transpose is itself.
        dx = op.apply(dz @ theta.T) + dx_shortcut

    for name, weight in params.weights.items():
        grads.setdefault(name, np.zeros_like(weight))
    return {name: grads[name] for name in params.weights}
