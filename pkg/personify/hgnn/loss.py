"""
Class-weighted focal loss, averaged over the labeled nodes.
"""

from typing import Tuple

import numpy as np

from personify.hgnn import TrainingError


# Probabilities are clamped to this value before taking the logarithm.
MIN_PROB = 1e-12


def class_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """
    Inverse-frequency weights N / (P * n_c) over the given labels. Classes
    that don't appear are counted once, so their weight stays finite.
    """

    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise TrainingError("Can't weight the classes without labels")
    counts = np.bincount(labels, minlength=num_classes)[:num_classes]
    return labels.size / (num_classes * np.maximum(counts, 1))


def focal_loss(probs: np.ndarray, labels: np.ndarray,
               weights: np.ndarray, gamma: float
               ) -> Tuple[float, np.ndarray]:
    """
    Returns the loss

        -1/N sum_i w[y_i] (1 - p_i)^gamma log p_i

    where p_i is the probability of the true class, and its gradient with
    respect to the logits that produced `probs` through a softmax. With
    gamma = 0 it's the weighted cross-entropy.
    """

    if gamma < 0:
        raise TrainingError(f"The focal loss gamma can't be negative, got"
                            f" {gamma}")
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if n == 0:
        raise TrainingError("The focal loss needs at least one labeled node")
    if probs.shape[0] != n:
        raise TrainingError(f"Got {probs.shape[0]} predictions for {n}"
                            f" labels")

    rows = np.arange(n)
    p_true = probs[rows, labels]
    clamped = np.maximum(p_true, MIN_PROB)
    log_p = np.log(clamped)
    remaining = 1.0 - p_true
    w = weights[labels]

    modulation = remaining ** gamma
    loss = -np.sum(w * modulation * log_p) / n

    # d loss_i / d p_i
    dlog = np.where(p_true > MIN_PROB, 1.0 / clamped, 0.0)
    dp = -w * modulation * dlog
    if gamma > 0:
        positive = remaining > 0
        dmod = np.zeros_like(remaining)
        dmod[positive] = gamma * remaining[positive] ** (gamma - 1)
        dp += w * dmod * log_p

    # Through the softmax: d p_c / d s_j = p_c (delta_cj - p_j)
    dscores = -(dp * p_true)[:, None] * probs
    dscores[rows, labels] += dp * p_true
    return float(loss), dscores / n
