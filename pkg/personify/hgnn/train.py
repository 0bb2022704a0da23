"""
Full-batch transductive training with Adam, keeping the parameters of the
epoch with the best validation accuracy, and the finite-difference check of
the analytic gradients.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from personify.model import Hypergraph
from personify.hgnn import TrainConfig, TrainingError
from personify.hgnn.loss import class_weights, focal_loss
from personify.hgnn.network import ModelParams, backward, forward, init_params
from personify.hgnn.operator import PropagationOperator, propagation_operator


# Denominator floor of the relative error in `grad_check`, so that
# gradients that are zero up to rounding don't produce huge ratios.
GRAD_CHECK_FLOOR = 1e-3


class Adam:
    """
    Adam with the L2 penalty added to the gradient (not decoupled), applied
    to every trainable array.
    """

    def __init__(self, learning_rate: float, weight_decay: float = 0.0,
                 betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8) -> None:
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, weights: Dict[str, np.ndarray],
             grads: Dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name, weight in weights.items():
            grad = grads[name] + self.weight_decay * weight
            m = self._m.get(name, np.zeros_like(weight))
            v = self._v.get(name, np.zeros_like(weight))
            m = self.beta1 * m + (1 - self.beta1) * grad
            v = self.beta2 * v + (1 - self.beta2) * grad * grad
            self._m[name] = m
            self._v[name] = v
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            weight -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainResult:
    params: ModelParams
    best_epoch: int
    best_val_accuracy: float
    history: List[EpochRecord] = field(default_factory=list)


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float('nan')
    # argmax keeps the lowest index on ties
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def _as_labels(labels: Sequence[Optional[int]]) -> np.ndarray:
    return np.array([-1 if label is None else int(label)
                     for label in labels], dtype=np.int64)


def _check_indices(name: str, indices: Sequence[int],
                   labels: np.ndarray) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    if np.any(labels[indices] < 0):
        raise TrainingError(f"The {name} split contains unlabeled nodes")
    return indices


def loss_and_grads(op: PropagationOperator, x0: np.ndarray,
                   labels: np.ndarray, train_idx: np.ndarray,
                   params: ModelParams, config: TrainConfig,
                   weights: np.ndarray
                   ) -> Tuple[float, Dict[str, np.ndarray], list]:
    """
    Training mode forward and backward pass. The weight decay isn't
    included.
    """

    caches: list = []
    probs = forward(op, x0, params, config, training=True, caches=caches)
    loss, dscores = focal_loss(probs[train_idx], labels[train_idx], weights,
                               config.gamma)
    dlogits = np.zeros_like(probs)
    dlogits[train_idx] = dscores
    grads = backward(op, params, config, caches, dlogits, training=True)
    return loss, grads, caches


def train(graph: Union[Hypergraph, PropagationOperator], x0: np.ndarray,
          labels: Sequence[Optional[int]], train_idx: Sequence[int],
          val_idx: Sequence[int], num_classes: int,
          config: TrainConfig) -> TrainResult:
    """
    Trains on the labels of `train_idx`, while every node takes part in the
    propagation. After each epoch the validation accuracy is measured in
    evaluation mode, and the parameters of the first epoch reaching the best
    one are returned. Without validation nodes the last epoch is kept.
    """

    op = graph if isinstance(graph, PropagationOperator) \
        else propagation_operator(graph)
    x0 = np.asarray(x0, dtype=np.float64)
    labels = _as_labels(labels)
    if labels.shape[0] != op.num_nodes or x0.shape[0] != op.num_nodes:
        raise TrainingError(f"Got {x0.shape[0]} feature rows and"
                            f" {labels.shape[0]} labels for {op.num_nodes}"
                            f" nodes")
    train_idx = _check_indices('training', train_idx, labels)
    val_idx = _check_indices('validation', val_idx, labels)
    if train_idx.size == 0:
        raise TrainingError("The training split is empty")

    rng = np.random.default_rng(config.seed)
    params = init_params(x0.shape[1], num_classes, config, rng)
    # Transductive: the mean is taken over every node, labeled or not.
    params.buffers['input.mean'] = x0.mean(axis=0)
    weights = class_weights(labels[train_idx], num_classes)
    optimizer = Adam(config.learning_rate, config.weight_decay, config.betas,
                     config.adam_eps)

    best = params.copy()
    best_epoch = 0
    best_acc = -1.0
    since_best = 0
    history = []
    logging.info("Training a %d-layer network with %d parameters on %d"
                 " labeled nodes", params.num_layers, params.num_parameters,
                 train_idx.size)

    for epoch in range(1, config.max_epochs + 1):
        loss, grads, caches = loss_and_grads(op, x0, labels, train_idx,
                                             params, config, weights)
        if not np.isfinite(loss):
            raise TrainingError(f"The loss became {loss} at epoch {epoch}")

        optimizer.step(params.weights, grads)
        # The first batch replaces the placeholder statistics of the
        # initialization instead of being averaged with them.
        source = 'batch' if epoch == 1 else 'running'
        for layer, cache in enumerate(caches[:-1]):
            if 'running_mean' in cache:
                params.buffers[f'layers.{layer}.running_mean'] = \
                    cache[f'{source}_mean']
                params.buffers[f'layers.{layer}.running_var'] = \
                    cache[f'{source}_var']

        if val_idx.size > 0:
            probs = forward(op, x0, params, config, training=False)
            val_acc = accuracy(probs[val_idx], labels[val_idx])
        else:
            val_acc = float('nan')
        history.append(EpochRecord(epoch, loss, val_acc))
        logging.debug("Epoch %d: loss %.6f, validation accuracy %.4f",
                      epoch, loss, val_acc)

        if val_idx.size == 0 or val_acc > best_acc:
            best = params.copy()
            best_epoch = epoch
            best_acc = val_acc
            since_best = 0
        else:
            since_best += 1
            if config.patience and since_best >= config.patience:
                logging.info("No improvement for %d epochs, stopping at"
                             " epoch %d", since_best, epoch)
                break

    logging.info("Best validation accuracy %.4f at epoch %d", best_acc,
                 best_epoch)
    return TrainResult(params=best, best_epoch=best_epoch,
                       best_val_accuracy=best_acc, history=history)


def predict(graph: Union[Hypergraph, PropagationOperator], x0: np.ndarray,
            params: ModelParams, config: TrainConfig) -> np.ndarray:
    return forward(graph, x0, params, config, training=False)


def grad_check(graph: Union[Hypergraph, PropagationOperator], x0: np.ndarray,
               labels: Sequence[Optional[int]], params: ModelParams,
               config: TrainConfig, eps: float = 1e-5,
               num_samples: int = 100, seed: int = 0,
               train_idx: Optional[Sequence[int]] = None) -> float:
    """
    Compares the analytic gradient of the training-mode loss with central
    differences on `num_samples` parameter entries (all of them if there
    are fewer), and returns the largest relative error

        |analytic - numeric| / max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)

    The weight decay isn't part of the checked loss. The parameters are
    restored before returning.
    """

    if eps <= 0:
        raise TrainingError(f"The finite-difference step must be positive,"
                            f" got {eps}")
    op = graph if isinstance(graph, PropagationOperator) \
        else propagation_operator(graph)
    x0 = np.asarray(x0, dtype=np.float64)
    labels = _as_labels(labels)
    if train_idx is None:
        train_idx = np.flatnonzero(labels >= 0)
    train_idx = _check_indices('training', train_idx, labels)
    if train_idx.size == 0:
        raise TrainingError("The gradient check needs labeled nodes")
    weights = class_weights(labels[train_idx], params.num_classes)

    def loss_at() -> float:
        probs = forward(op, x0, params, config, training=True)
        return focal_loss(probs[train_idx], labels[train_idx], weights,
                          config.gamma)[0]

    _, grads, _ = loss_and_grads(op, x0, labels, train_idx, params, config,
                                 weights)

    coordinates = [(name, i) for name, w in params.weights.items()
                   for i in range(w.size)]
    if len(coordinates) > num_samples:
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(len(coordinates), num_samples,
                                    replace=False))
        coordinates = [coordinates[i] for i in chosen]

    worst = 0.0
    for name, i in coordinates:
        weight = params.weights[name]
        original = weight.flat[i]
        weight.flat[i] = original + eps
        plus = loss_at()
        weight.flat[i] = original - eps
        minus = loss_at()
        weight.flat[i] = original

        numeric = (plus - minus) / (2 * eps)
        analytic = grads[name].flat[i]
        error = abs(analytic - numeric) / max(abs(analytic), abs(numeric),
                                              GRAD_CHECK_FLOOR)
        worst = max(worst, error)

    logging.info("Gradient check over %d entries: max relative error %.3e",
                 len(coordinates), worst)
    return worst
