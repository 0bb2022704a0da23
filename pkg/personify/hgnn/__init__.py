"""
The hypergraph neural network: degree structures and the normalized
propagation operator, the skip-connected layers with batch normalization,
the class-weighted focal loss and the full-batch transductive training loop
with exact gradients.

Everything runs on numpy and scipy sparse matrices on the CPU, in float64,
deterministically given the seed.
"""

from enum import Enum
from dataclasses import dataclass
from typing import Tuple

from personify import PersonifyError


class TrainingError(PersonifyError, ValueError):
    """
    Raised for inconsistent shapes, non-finite values during the forward pass
    and NaN losses. The message identifies the layer or the epoch.
    """


class Activation(Enum):
    """
    The outer activation of each layer, applied after the skip connection.
    """

    RELU = 'RELU'
    IDENTITY = 'IDENTITY'


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 5e-4
    max_epochs: int = 500
    layers: int = 2
    hidden_dim: int = 128
    gamma: float = 2.0
    seed: int = 0
    bn_momentum: float = 0.9
    # Epochs without a better validation accuracy before stopping. 0 never
    # stops early.
    patience: int = 100
    activation: Activation = Activation.RELU
    # With batch normalization disabled the layers use Z directly, which is
    # the "bypassed" configuration used for gradient checks.
    batch_norm: bool = True
    bn_eps: float = 1e-5
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise TrainingError("The learning rate must be positive")
        if self.weight_decay < 0:
            raise TrainingError("The weight decay can't be negative")
        if self.max_epochs < 0 or self.patience < 0:
            raise TrainingError("max_epochs and patience can't be negative")
        if self.layers < 1 or self.hidden_dim < 1:
            raise TrainingError("There must be at least one layer with one"
                                " hidden unit")
        if self.gamma < 0:
            raise TrainingError("The focal loss gamma can't be negative")
        if not 0 <= self.bn_momentum < 1:
            raise TrainingError("The batch norm momentum must be in [0, 1)")
